import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from yosida_bdsde.errors import InvalidArgumentError
from yosida_bdsde.noise_grid import (TimeGrid, backward_integral, export_ensemble_csv,
                                     forward_integral, generate)


def test_grid_times():
    g = TimeGrid(2.0, 4)
    assert g.h == 0.5
    np.testing.assert_array_equal(g.times, [0, 0.5, 1, 1.5, 2])


@pytest.mark.parametrize("T,N", [(0.0, 3), (-1.0, 3), (1.0, 0), (1.0, 2.5)])
def test_grid_validation(T, N):
    with pytest.raises(InvalidArgumentError):
        TimeGrid(T, N)


def test_tree_enumerates_every_pattern_once():
    ens = generate(TimeGrid(1.0, 2), mode="tree")
    assert ens.M == 16
    inc = np.concatenate([ens.dW[..., 0], ens.dB[..., 0]], axis=1)
    np.testing.assert_allclose(np.abs(inc), math.sqrt(0.5))
    assert len({tuple(np.sign(r)) for r in inc}) == 16
    np.testing.assert_array_equal(ens.weights, 1 / 16)


def test_tree_limits():
    with pytest.raises(InvalidArgumentError):
        generate(TimeGrid(1.0, 11), mode="tree")
    with pytest.raises(InvalidArgumentError):
        generate(TimeGrid(1.0, 2), mode="tree", d=2)


def test_gaussian_is_reproducible():
    g = TimeGrid(1.0, 8)
    a = generate(g, M=1000, seed=42)
    b = generate(g, M=1000, seed=42)
    c = generate(g, M=1000, seed=43)
    np.testing.assert_array_equal(a.dW, b.dW)
    np.testing.assert_array_equal(a.dB, b.dB)
    assert not np.array_equal(a.dW, c.dW)


def test_gaussian_mean_within_clt_bound():
    g = TimeGrid(1.0, 4)
    ens = generate(g, M=100_000, seed=7)
    bound = 5 * math.sqrt(g.h / ens.M)
    assert np.all(np.abs(ens.dW.mean(axis=0)) < bound)
    assert np.all(np.abs(ens.dB.mean(axis=0)) < bound)


def test_gaussian_drivers_independent():
    ens = generate(TimeGrid(1.0, 4), M=50_000, seed=3, d=2)
    h = ens.grid.h
    for a in range(2):
        for b in range(2):
            cov = np.mean(ens.dW[..., a] * ens.dB[..., b], axis=0) / h
            assert np.all(np.abs(cov) < 5 / math.sqrt(ens.M))


def test_gaussian_needs_paths():
    with pytest.raises(InvalidArgumentError):
        generate(TimeGrid(1.0, 4), M=0)
    with pytest.raises(InvalidArgumentError):
        generate(TimeGrid(1.0, 4), M=10, mode="sobol")


def test_paths_cumulate_increments(rng):
    ens = generate(TimeGrid(1.0, 5), M=20, seed=1)
    W = ens.W()
    assert W.shape == (20, 6, 1)
    np.testing.assert_array_equal(W[:, 0], 0.0)
    np.testing.assert_allclose(np.diff(W, axis=1), ens.dW)


# --------------------------------------------------------------------------
# integrals


def test_forward_integral_constants():
    ens = generate(TimeGrid(1.0, 6), M=50, seed=2)
    W = ens.W()
    np.testing.assert_array_equal(forward_integral(np.zeros((50, 6, 1)), ens), 0.0)
    out = forward_integral(np.full((50, 6, 1), 2.5), ens, 1, 4)
    np.testing.assert_allclose(out, 2.5 * (W[:, 4, 0] - W[:, 1, 0]))


def test_backward_integral_constants():
    ens = generate(TimeGrid(1.0, 6), M=50, seed=2)
    B = ens.B()
    out = backward_integral(np.full((50, 7, 1), -1.5), ens, 2, 6)
    np.testing.assert_allclose(out, -1.5 * (B[:, 6, 0] - B[:, 2, 0]))
    assert np.all(backward_integral(np.zeros((50, 7, 1)), ens) == 0)


def test_backward_integral_reads_right_endpoint():
    ens = generate(TimeGrid(1.0, 3), M=4, seed=0)
    G = np.zeros((4, 4, 1))
    G[:, 1] = 1.0  # only the value at t_1 is nonzero
    np.testing.assert_allclose(backward_integral(G, ens), ens.dB[:, 0, 0])


def test_tree_ito_isometry_is_exact():
    ens = generate(TimeGrid(1.0, 6), mode="tree")
    Z = np.sin(3 * ens.W()[:, :-1]) + ens.B()[:, -1:] - ens.B()[:, 1:]
    lhs = ens.expectation(forward_integral(Z, ens) ** 2)
    rhs = ens.expectation(np.sum(Z ** 2, axis=(1, 2)) * ens.grid.h)
    assert lhs == pytest.approx(rhs, abs=1e-13)


def test_gaussian_ito_isometry_within_se():
    ens = generate(TimeGrid(1.0, 5), M=100_000, seed=11)
    Z = np.cos(ens.W()[:, :-1])
    sq = forward_integral(Z, ens) ** 2
    ref = np.sum(Z ** 2, axis=(1, 2)) * ens.grid.h
    diff = sq - ref
    assert abs(diff.mean()) < 5 * diff.std() / math.sqrt(ens.M)


def test_tree_backward_integral_has_zero_mean():
    ens = generate(TimeGrid(1.0, 6), mode="tree")
    B = ens.B()
    G = np.exp(B[:, -1:] - B)  # depends on B after each grid time
    assert abs(ens.expectation(backward_integral(G, ens))) < 1e-14


@given(a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_integrals_are_linear(a, b):
    ens = generate(TimeGrid(1.0, 3), mode="tree")
    rng = np.random.default_rng(0)
    X, Y = rng.normal(size=(2, ens.M, 4, 1))
    np.testing.assert_allclose(
        backward_integral(a * X + b * Y, ens),
        a * backward_integral(X, ens) + b * backward_integral(Y, ens), atol=1e-12)
    np.testing.assert_allclose(
        forward_integral(a * X[:, :3] + b * Y[:, :3], ens),
        a * forward_integral(X[:, :3], ens) + b * forward_integral(Y[:, :3], ens), atol=1e-12)


def test_standard_error():
    tree = generate(TimeGrid(1.0, 2), mode="tree")
    assert tree.standard_error(tree.dW[:, 0, 0]) == 0.0
    ens = generate(TimeGrid(1.0, 2), M=400, seed=0)
    x = ens.dW[:, 0, 0]
    assert ens.standard_error(x) == pytest.approx(x.std(ddof=1) / 20)


def test_export_csv(tmp_path):
    ens = generate(TimeGrid(1.0, 3), M=2, seed=5)
    p = tmp_path / "ens.csv"
    export_ensemble_csv(ens, p)
    raw = p.read_bytes()
    assert b"\r\n" not in raw
    rows = list(csv.reader(raw.decode().splitlines()))
    assert rows[0] == ["path", "step", "dW_0", "dB_0"]
    assert len(rows) == 1 + 2 * 3
    assert float(rows[4][2]) == ens.dW[1, 0, 0]
