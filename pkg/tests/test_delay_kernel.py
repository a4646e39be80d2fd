import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from yosida_bdsde.delay_kernel import (Atoms, Dirac, GridSegment, LebesgueScaled,
                                       alpha_tilde, change_of_order_check,
                                       delayed_average, delayed_quadratic,
                                       delayed_quadratic_path, grid_alpha_tilde,
                                       lag_weights, snap_distance)
from yosida_bdsde.errors import InvalidArgumentError

T = 1.0
MEASURES = [Dirac(0.5, T), LebesgueScaled(0.8, T),
            Atoms((-0.25, -0.75, -1.0), (1.0, 0.5, 2.0), T)]


def test_dirac_before_lag_reads_zero():
    seg = GridSegment(np.arange(5.0), 0.25)
    assert delayed_quadratic(Dirac(0.5, T), seg, 0.25) == 0.0


def test_dirac_single_atom():
    seg = GridSegment(np.array([0.0, 2.0, 0.0, 0.0, 0.0]), 0.25)
    assert delayed_quadratic(Dirac(0.5, T), seg, 0.75) == 4.0


@pytest.mark.parametrize("n", [4, 16, 64])
def test_lebesgue_constant_segment(n):
    c = 1.7
    seg = GridSegment(np.full(n + 1, c), T / n)
    assert delayed_quadratic(LebesgueScaled(1.0, T), seg, T) == pytest.approx(c * c * T)


def test_lebesgue_quadrature_is_first_order():
    # x(t) = t: exact int_0^1 s^2 ds = 1/3, left sums carry an O(h) bias
    errs = []
    for n in (10, 20, 40, 80):
        seg = GridSegment(np.linspace(0, 1, n + 1), 1.0 / n)
        errs.append(abs(delayed_quadratic(LebesgueScaled(1.0, T), seg, 1.0) - 1 / 3))
    rates = [a / b for a, b in zip(errs, errs[1:])]
    assert all(1.8 < r < 2.2 for r in rates)


def test_vector_segment_uses_squared_norm():
    seg = GridSegment(np.array([[3.0, 4.0], [0.0, 0.0], [0.0, 0.0]]), 0.5)
    assert delayed_quadratic(Dirac(1.0, T), seg, 1.0) == 25.0


def test_off_grid_time_rejected():
    seg = GridSegment(np.zeros(5), 0.25)
    with pytest.raises(InvalidArgumentError):
        delayed_quadratic(Dirac(0.5, T), seg, 0.3)


# --------------------------------------------------------------------------
# exponential moment


def test_alpha_tilde_closed_forms():
    assert alpha_tilde(Dirac(0.5, T), 2.0) == pytest.approx(math.e)
    assert alpha_tilde(LebesgueScaled(1.0, 1.0), 0.0) == 1.0
    assert alpha_tilde(Atoms((-1.0,), (2.0,), 1.0), 1.0) == pytest.approx(2 * math.e)
    assert alpha_tilde(LebesgueScaled(2.0, 1.5), 1.0) == pytest.approx(2 * (math.exp(1.5) - 1))


@pytest.mark.parametrize("alpha", MEASURES)
def test_alpha_tilde_at_zero_is_mass(alpha):
    assert alpha_tilde(alpha, 0.0) == alpha.total_mass()


@given(beta=st.floats(0, 10))
def test_alpha_tilde_dominates_mass(beta):
    for alpha in MEASURES:
        assert alpha_tilde(alpha, beta) >= alpha.total_mass()


@pytest.mark.parametrize("alpha", MEASURES)
def test_grid_alpha_tilde_converges(alpha):
    exact = alpha_tilde(alpha, 1.5)
    approx = grid_alpha_tilde(alpha, 1.5, 1e-4, 10_000)
    assert approx == pytest.approx(exact, rel=1e-3)


def test_negative_beta_rejected():
    with pytest.raises(InvalidArgumentError):
        alpha_tilde(Dirac(0.5, T), -1.0)


# --------------------------------------------------------------------------
# discretisation


def test_lag_weights_snap_to_nearest():
    w = lag_weights(Dirac(0.3, T), 0.25, 4)
    np.testing.assert_array_equal(w, [0, 1, 0, 0, 0])
    assert snap_distance(Dirac(0.3, T), 0.25, 4) == pytest.approx(0.05)


def test_lag_weights_never_use_lag_zero():
    w = lag_weights(Dirac(0.01, T), 0.25, 4)
    assert w[0] == 0 and w[1] == 1


def test_lebesgue_weights_cover_horizon():
    w = lag_weights(LebesgueScaled(2.0, 0.5), 0.125, 8)
    np.testing.assert_allclose(w, [0, .25, .25, .25, .25, 0, 0, 0, 0])


def test_delayed_average_matches_loop(rng):
    w = np.array([0.0, 0.5, 0.0, 2.0])
    x = rng.normal(size=(3, 7, 2))
    out = delayed_average(w, x, axis=1)
    ref = np.zeros_like(x)
    for i in range(7):
        for lag in range(4):
            if i - lag >= 0:
                ref[:, i] += w[lag] * x[:, i - lag]
    np.testing.assert_allclose(out, ref)


def test_path_functional_matches_pointwise(rng):
    alpha = Atoms((-0.25, -0.5), (0.3, 1.2), T)
    x = rng.normal(size=(9, 2))
    path = delayed_quadratic_path(lag_weights(alpha, 0.125, 8), x[None], axis=1)[0]
    seg = GridSegment(x, 0.125)
    for i in range(9):
        assert path[i] == pytest.approx(delayed_quadratic(alpha, seg, i * 0.125))


@given(x=arrays(float, 9, elements=st.floats(-5, 5)),
       bump=arrays(float, 9, elements=st.floats(0, 3)), i=st.integers(0, 8))
def test_monotone_in_magnitude(x, bump, i):
    bigger = np.sign(x) * (np.abs(x) + bump)
    for alpha in MEASURES:
        a = delayed_quadratic(alpha, GridSegment(x, 0.125), i * 0.125)
        b = delayed_quadratic(alpha, GridSegment(bigger, 0.125), i * 0.125)
        assert b >= a - 1e-12


@given(x=arrays(float, 9, elements=st.floats(-5, 5)), noise=arrays(float, 9, elements=st.floats(-5, 5)),
       i=st.integers(0, 8))
def test_only_window_values_matter(x, noise, i):
    # values after t never enter the functional
    y = x.copy()
    y[i + 1:] += noise[i + 1:]
    for alpha in MEASURES:
        assert delayed_quadratic(alpha, GridSegment(x, 0.125), i * 0.125) == \
            delayed_quadratic(alpha, GridSegment(y, 0.125), i * 0.125)


# --------------------------------------------------------------------------
# change of order


def test_change_of_order_zero_path():
    rep = change_of_order_check(Dirac(0.5, T), 1.0, np.zeros(11), 0.1)
    assert rep.lhs == rep.rhs_integral == rep.rhs_sup == 0.0 and rep.passed


@pytest.mark.parametrize("beta", [0.5, 1.0, 5.0])
def test_change_of_order_constant_path_dirac(beta):
    r, n = 0.5, 400
    rep = change_of_order_check(Dirac(r, T), beta, np.ones(n + 1), T / n)
    exact_lhs = math.exp(beta * r) * (math.exp(beta * (T - r)) - 1) / beta
    assert rep.lhs == pytest.approx(exact_lhs, rel=5e-3 * beta)
    assert rep.lhs <= alpha_tilde(Dirac(r, T), beta) * (math.exp(beta * T) - 1) / beta
    assert rep.passed


@pytest.mark.parametrize("alpha", MEASURES)
@pytest.mark.parametrize("beta", [0.0, 1.0, 5.0])
def test_change_of_order_random_paths(alpha, beta, rng):
    for _ in range(100):
        x = rng.normal(size=(21, 2)) * rng.exponential(size=(21, 1))
        rep = change_of_order_check(alpha, beta, x, 0.05)
        assert rep.margin >= -1e-9


# --------------------------------------------------------------------------
# validation


@pytest.mark.parametrize("make", [
    lambda: Dirac(0.0, 1.0), lambda: Dirac(1.5, 1.0), lambda: LebesgueScaled(0.0, 1.0),
    lambda: Atoms((0.0,), (1.0,), 1.0), lambda: Atoms((-0.5,), (-1.0,), 1.0),
    lambda: Atoms((-0.5, -0.2), (1.0,), 1.0),
])
def test_invalid_measures(make):
    with pytest.raises(InvalidArgumentError):
        make()
