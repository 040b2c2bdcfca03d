import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lensless_inr.inr import (
    SirenConfig,
    SirenParams,
    init_bound,
    init_siren,
    make_coordinate_grid,
    parameter_count,
    render,
    siren_forward,
)


def test_grid_corners():
    g = make_coordinate_grid(2, 2)
    np.testing.assert_array_equal(g, [[-1, -1], [1, -1], [-1, 1], [1, 1]])


def test_grid_center():
    g = make_coordinate_grid(3, 3)
    np.testing.assert_array_equal(g[4], [0, 0])


def test_grid_u_along_width():
    g = make_coordinate_grid(3, 5).reshape(3, 5, 2)
    np.testing.assert_allclose(g[0, :, 0], [-1, -0.5, 0, 0.5, 1])
    np.testing.assert_allclose(g[:, 0, 1], [-1, 0, 1])


def test_grid_size():
    g = make_coordinate_grid(256, 256)
    assert g.shape == (65536, 2)
    assert np.abs(g).max() <= 1


def test_grid_too_small():
    with pytest.raises(ValueError):
        make_coordinate_grid(1, 5)


@pytest.mark.parametrize(
    "width,layers,count",
    [(208, 3, 131667), (128, 3, 50307), (64, 3, 12867), (48, 3, 7347), (32, 3, 3363), (24, 3, 1947), (1, 0, 9)],
)
def test_parameter_count(width, layers, count):
    assert parameter_count(SirenConfig(width, layers)) == count


def test_default_count_closed_form():
    for n in (1, 7, 208):
        assert parameter_count(SirenConfig(n, 3)) == 3 * n * n + 9 * n + 3


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 64), st.integers(0, 5))
def test_count_matches_enumeration(width, layers):
    cfg = SirenConfig(width, layers)
    params = init_siren(cfg, 0)
    assert parameter_count(cfg) == sum(v.size for v in params.as_dict().values())
    assert len(params.weights) == layers + 2


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 40), st.floats(1, 60))
def test_init_bounds(seed, width, omega):
    cfg = SirenConfig(width, 2, omega0_first=omega, omega0_hidden=omega)
    params = init_siren(cfg, seed)
    assert np.abs(params.weights[0]).max() <= 0.5
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        bound = init_bound(cfg, i)
        assert np.abs(w).max() <= bound and np.abs(b).max() <= bound
    assert init_bound(cfg, 1) == pytest.approx(math.sqrt(6) / (omega * math.sqrt(width)))


def test_init_deterministic():
    a = init_siren(SirenConfig(16, 3), 5).as_dict()
    b = init_siren(SirenConfig(16, 3), 5).as_dict()
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)


def test_zero_network_outputs_bias():
    cfg = SirenConfig(8, 2)
    p = init_siren(cfg, 0)
    p = SirenParams([np.zeros_like(w) for w in p.weights], [np.zeros_like(b) for b in p.biases])
    p.biases[-1][:] = [0.1, 0.2, 0.3]
    out = siren_forward(p, cfg, make_coordinate_grid(4, 5))
    np.testing.assert_allclose(out, np.tile([0.1, 0.2, 0.3], (20, 1)), atol=1e-7)


def test_sigmoid_output_in_unit_interval():
    cfg = SirenConfig(8, 1, output_activation="sigmoid")
    out = siren_forward(init_siren(cfg, 1), cfg, make_coordinate_grid(6, 6))
    assert out.min() > 0 and out.max() < 1


def test_non_finite_params_rejected():
    cfg = SirenConfig(4, 1)
    p = init_siren(cfg, 0)
    p.weights[1][0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        siren_forward(p, cfg, make_coordinate_grid(3, 3))


def test_hidden_activations_bounded():
    from lensless_inr.autodiff import Tape
    from lensless_inr.inr import siren_graph

    cfg = SirenConfig(32, 3)
    tape = Tape()
    pv = {k: tape.param(k, v) for k, v in init_siren(cfg, 2).as_dict().items()}
    siren_graph(tape, cfg, pv, tape.constant(make_coordinate_grid(16, 16)))
    sines = [op.output.value for op in tape.ops if op.kind == "sin-activation"]
    assert len(sines) == 4
    assert all(np.abs(s).max() <= 1 for s in sines)


def test_init_output_statistics():
    # guards against a degenerate initialization. The output is a sum of n
    # terms w_j * h_j with w_j ~ U(-b, b) and E[h_j^2] ~ 1/2 for sine units,
    # so its spread should sit near sqrt(n * b^2 / 3 / 2).
    cfg = SirenConfig(208, 3)
    coords = make_coordinate_grid(256, 256)
    b = init_bound(cfg, 4)
    predicted = math.sqrt(208 * b * b / 3 / 2)
    stds = []
    for seed in range(20):
        out = siren_forward(init_siren(cfg, seed), cfg, coords)
        assert np.all(np.isfinite(out))
        stds.append(out.std(axis=0))
    stds = np.array(stds)
    assert np.all((stds > 0.5 * predicted) & (stds < 2 * predicted)), stds
    assert abs(stds.mean() / predicted - 1) < 0.2


def test_reshape_round_trip():
    cfg = SirenConfig(8, 1)
    p = init_siren(cfg, 0)
    flat = siren_forward(p, cfg, make_coordinate_grid(5, 7))
    img = render(p, cfg, 5, 7)
    np.testing.assert_array_equal(img.reshape(-1, 3), flat)
    np.testing.assert_array_equal(img[2, 3], flat[2 * 7 + 3])


def test_bad_config():
    with pytest.raises(ValueError):
        SirenConfig(0)
    with pytest.raises(ValueError):
        SirenConfig(8, output_activation="tanh")
