import numpy as np
import pytest

from lensless_inr.autodiff import Tape, check_gradients
from lensless_inr.decoder import (
    DecoderConfig,
    DecoderParams,
    decoder_forward,
    decoder_graph,
    decoder_parameter_count,
    init_decoder,
)

TABLE_K = (148, 96, 48, 32, 24, 16)


@pytest.mark.parametrize("k,count", [(148, 133647), (96, 56739), (48, 14547), (32, 6627), (24, 3819), (16, 1779), (0, 3)])
def test_parameter_count(k, count):
    assert decoder_parameter_count(k) == count


@pytest.mark.parametrize("k", range(8, 161, 8))
def test_count_matches_enumeration(k):
    cfg = DecoderConfig(k, 64, 64)
    params = init_decoder(cfg, 0)
    assert sum(v.size for v in params.as_dict().values()) == decoder_parameter_count(k)


@pytest.mark.parametrize("k", TABLE_K)
def test_table_sizes_are_under_parameterized(k):
    assert decoder_parameter_count(k) < 256 * 256 * 3


def test_config_geometry():
    cfg = DecoderConfig(16, 256, 256)
    assert cfg.mixing_layers == 6
    assert cfg.input_spatial == (8, 8)
    with pytest.raises(ValueError):
        DecoderConfig(16, 100, 100)


def test_init_ranges_and_determinism():
    cfg = DecoderConfig(24, 64, 64)
    a, b = init_decoder(cfg, 3), init_decoder(cfg, 3)
    bound = np.sqrt(6 / 24)
    assert all(np.abs(m).max() <= bound for m in a.mix)
    assert all(np.all(s == 1) for s in a.norm_scale)
    assert all(np.all(t == 0) for t in a.norm_shift)
    assert a.latent.shape == (2, 2, 24)
    for k, v in a.as_dict().items():
        assert v.tobytes() == b.as_dict()[k].tobytes()
    assert a.latent.tobytes() == b.latent.tobytes()


def test_output_shape_and_range():
    cfg = DecoderConfig(64, 256, 256)
    out = decoder_forward(init_decoder(cfg, 0), cfg)
    assert out.shape == (256, 256, 3)
    assert out.min() > 0 and out.max() < 1


def test_zero_mixing_gives_constant_image():
    cfg = DecoderConfig(8, 64, 64)
    p = init_decoder(cfg, 0)
    p.mix = [np.zeros_like(m) for m in p.mix]
    p.out_bias = np.array([0.5, -1.0, 2.0], np.float32)
    out = decoder_forward(p, cfg)
    expected = 1 / (1 + np.exp(-p.out_bias))
    np.testing.assert_allclose(out, np.broadcast_to(expected, out.shape), rtol=1e-6)


def test_channel_norm_standardizes(rng):
    tape = Tape(np.float64)
    x = tape.constant(rng.standard_normal((16, 16, 5)) * 3 + 2)
    out = tape.channel_norm(x, tape.constant(np.ones(5)), tape.constant(np.zeros(5))).value
    np.testing.assert_allclose(out.mean(axis=(0, 1)), 0, atol=1e-5)
    np.testing.assert_allclose(out.var(axis=(0, 1)), 1, atol=1e-3)


def _decoder_check(size):
    cfg = DecoderConfig(8, size, size)
    p = init_decoder(cfg, 1)
    params = {k: v.astype(np.float64) for k, v in p.as_dict().items()}
    target = np.random.default_rng(2).random((size, size, 3))

    def build(tape, pv):
        return tape.mse_loss(decoder_graph(tape, cfg, pv, p.latent.astype(np.float64)), tape.constant(target))

    return check_gradients(build, params, step=1e-6, tolerance=1e-3)


def test_gradient_check_32():
    report = _decoder_check(32)
    assert report.passed, report.summary()


def test_gradient_check_64():
    # at 32x32 the latent is 1x1 and the first normalization flattens it,
    # so most gradients vanish; 64x64 exercises every block
    report = _decoder_check(64)
    assert report.passed, report.summary()
    assert all(np.linalg.norm(g) > 0 for g in report.analytic.values())


def test_latent_not_a_parameter():
    p = init_decoder(DecoderConfig(8, 64, 64), 0)
    assert "latent" not in p.as_dict()


def test_params_round_trip():
    cfg = DecoderConfig(8, 64, 64)
    p = init_decoder(cfg, 0)
    q = DecoderParams.from_dict(p.as_dict(), p.latent)
    assert q.matches(cfg)
    np.testing.assert_array_equal(decoder_forward(p, cfg), decoder_forward(q, cfg))
