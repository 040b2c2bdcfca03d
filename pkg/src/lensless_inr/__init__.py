"""Lensless image deblurring with untrained implicit neural representations."""
