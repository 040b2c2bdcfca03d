import numpy as np
import pytest


def direct_convolve(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Spatial-domain zero-padded convolution with the library's crop convention.

    out[i, j] = sum_{a, b} k[a, b] * x[i + Hk//2 - a, j + Wk//2 - b]
    """
    h, w, c = x.shape
    hk, wk = k.shape[:2]
    if k.ndim == 2:
        k = k[:, :, None]
    oh, ow = hk // 2, wk // 2
    out = np.zeros((h, w, c))
    for i in range(h):
        for j in range(w):
            for a in range(hk):
                si = i + oh - a
                if not 0 <= si < h:
                    continue
                for b in range(wk):
                    sj = j + ow - b
                    if 0 <= sj < w:
                        out[i, j] += k[a, b] * x[si, sj]
    return out


def shifted_sum_convolve(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Same sum as :func:`direct_convolve`, accumulated one kernel tap at a time."""
    h, w, c = x.shape
    if k.ndim == 2:
        k = k[:, :, None]
    hk, wk = k.shape[:2]
    oh, ow = hk // 2, wk // 2
    out = np.zeros((h, w, c))
    for a in range(hk):
        di = oh - a
        for b in range(wk):
            dj = ow - b
            # out[i, j] += k[a, b] * x[i + di, j + dj] where the source is inside
            i0, i1 = max(0, -di), min(h, h - di)
            j0, j1 = max(0, -dj), min(w, w - dj)
            if i0 < i1 and j0 < j1:
                out[i0:i1, j0:j1] += k[a, b] * x[i0 + di:i1 + di, j0 + dj:j1 + dj]
    return out


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def natural64():
    from lensless_inr.data import load_sample

    return load_sample("astronaut")
