import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from yosida_bdsde.errors import InvalidArgumentError, NumericFailureError
from yosida_bdsde.prox_core import (CustomProx, HalfSquaredNorm, IndicatorBall,
                                    IndicatorBox, IndicatorHalfSpace, Norm1, Zero,
                                    yosida_properties_check, pseudo_huber, resolvent,
                                    semi_implicit_step, standard_catalog, yosida,
                                    yosida_gradient)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
positive = st.floats(1e-3, 10.0)
vec3 = arrays(float, 3, elements=finite)


def catalog3():
    return standard_catalog(3)


# --------------------------------------------------------------------------
# closed forms


def test_half_squared_norm_resolvent():
    assert resolvent(HalfSquaredNorm(1.0), 1.0, [2.0]) == pytest.approx([1.0])


@pytest.mark.parametrize("eps", [1e-3, 0.5, 7.0])
def test_ball_projection_is_independent_of_eps(eps):
    ball = IndicatorBall([0.0, 0.0], 1.0)
    np.testing.assert_allclose(resolvent(ball, eps, [3.0, 4.0]), [0.6, 0.8], atol=1e-15)


def test_norm1_soft_threshold():
    np.testing.assert_allclose(resolvent(Norm1(2), 0.5, [2.0, -0.3]), [1.5, 0.0])


def test_halfspace_yosida_values():
    ev = yosida(IndicatorHalfSpace.nonnegative(), 0.1, [-0.3])
    assert ev.gradient == pytest.approx([-3.0])
    assert ev.resolvent == pytest.approx([0.0])
    assert ev.envelope == pytest.approx(0.45)


def test_zero_yosida_is_identity():
    u = np.array([1.5, -2.0])
    ev = yosida(Zero(2), 0.3, u)
    np.testing.assert_array_equal(ev.resolvent, u)
    np.testing.assert_array_equal(ev.gradient, 0.0)
    assert ev.envelope == 0.0


def test_norm1_envelope_is_huber():
    assert yosida(Norm1(), 0.5, [2.0]).envelope == pytest.approx(1.75)


def test_box_projection_clips():
    box = IndicatorBox([-1.0, -2.0], [1.0, 0.5])
    np.testing.assert_allclose(resolvent(box, 1.0, [3.0, -5.0]), [1.0, -2.0])


def test_batched_eps_broadcasts():
    u = np.array([[2.0], [2.0], [2.0]])
    out = resolvent(HalfSquaredNorm(1.0), np.array([1.0, 3.0, 0.0 + 1e-9]), u)
    np.testing.assert_allclose(out[:, 0], [1.0, 0.5, 2.0], rtol=1e-8)


# --------------------------------------------------------------------------
# semi-implicit step


def test_step_zero_is_identity():
    x = np.array([[1.0], [-3.0]])
    np.testing.assert_array_equal(semi_implicit_step(Zero(), 0.1, 0.2, x), x)


def test_step_half_squared_norm():
    assert semi_implicit_step(HalfSquaredNorm(1.0), 1.0, 1.0, [3.0]) == pytest.approx([2.0])


def test_step_halfspace():
    assert semi_implicit_step(IndicatorHalfSpace.nonnegative(), 0.1, 0.1, [-1.0]) \
        == pytest.approx([-0.5])


@given(x=vec3, eps=positive, h=positive)
def test_step_solves_its_equation(x, eps, h):
    for phi in catalog3().values():
        y = semi_implicit_step(phi, eps, h, x)
        res = np.abs(y + h * yosida_gradient(phi, eps, y) - x).max()
        assert res <= 1e-8 * (1 + np.abs(x).max())


# --------------------------------------------------------------------------
# structural invariants


@given(u=vec3, v=vec3, eps=positive)
def test_resolvent_nonexpansive(u, v, eps):
    for phi in catalog3().values():
        d = np.linalg.norm(resolvent(phi, eps, u) - resolvent(phi, eps, v))
        assert d <= np.linalg.norm(u - v) * (1 + 1e-12) + 1e-12


@given(u=vec3, eps=positive)
def test_envelope_between_zero_and_phi(u, eps):
    for phi in catalog3().values():
        ev = yosida(phi, eps, u)
        assert ev.envelope >= -1e-12
        assert ev.envelope <= phi.value(u) + 1e-9 * (1 + abs(ev.envelope))
        assert ev.envelope <= np.dot(ev.gradient, u) + 1e-9 * (1 + abs(ev.envelope))


@given(u=vec3, eps=positive)
def test_gradient_resolvent_identity_is_exact(u, eps):
    for phi in catalog3().values():
        ev = yosida(phi, eps, u)
        np.testing.assert_array_equal(ev.gradient, (np.asarray(u) - ev.resolvent) / eps)


def test_envelope_gradient_matches_finite_differences(rng):
    # smooth points: away from kinks of the envelope (which is C^1 anyway)
    step = 1e-5
    for name, phi in catalog3().items():
        for _ in range(20):
            u = rng.normal(scale=2.0, size=3)
            eps = rng.uniform(0.1, 2.0)
            g = yosida(phi, eps, u).gradient
            fd = np.array([(yosida(phi, eps, u + step * e).envelope
                            - yosida(phi, eps, u - step * e).envelope) / (2 * step)
                           for e in np.eye(3)])
            np.testing.assert_allclose(fd, g, atol=1e-5 * (1 + np.abs(g).max()), err_msg=name)


def test_projection_fixes_interior_points(rng):
    for phi in (IndicatorBall([0.0, 0.0], 2.0), IndicatorBox([-1, -1], [1, 1]),
                IndicatorHalfSpace([1.0, 1.0], 0.5)):
        u = rng.uniform(-0.2, 0.2, size=(50, 2))
        for eps in (1.0, 1e-2, 1e-5):
            np.testing.assert_array_equal(resolvent(phi, eps, u), u)


def test_resolvent_converges_as_eps_shrinks():
    phi = Norm1(2)
    u = np.array([0.7, -1.2])
    dist = [np.linalg.norm(resolvent(phi, e, u) - u) for e in (1.0, 0.1, 0.01, 0.001)]
    assert all(b < a for a, b in zip(dist, dist[1:]))


# --------------------------------------------------------------------------
# six properties


@pytest.mark.parametrize("name", list(standard_catalog(1)))
@pytest.mark.parametrize("dim", [1, 2])
def test_yosida_properties_batch(name, dim, rng):
    phi = standard_catalog(dim)[name]
    n = 1000
    u = rng.normal(scale=2, size=(n, dim))
    v = rng.normal(scale=2, size=(n, dim))
    eps = np.exp(rng.uniform(-6, 2, n))
    delta = np.exp(rng.uniform(-6, 2, n))
    rep = yosida_properties_check(phi, eps, delta, u, v, rng=rng)
    assert rep.passed, {k: r.margin for k, r in rep.items.items()}
    assert set(rep.items) == {"i", "ii", "iii", "iv", "v", "vi"}


def test_yosida_properties_norm1_tight_margin(rng):
    u = rng.normal(size=(1000, 1))
    v = rng.normal(size=(1000, 1))
    rep = yosida_properties_check(Norm1(), 0.3, 0.05, u, v, rng=rng, tol=1e-12)
    assert rep.passed


def test_yosida_properties_equal_points_ball(rng):
    u = np.array([[3.0, -1.0]])
    rep = yosida_properties_check(IndicatorBall([0, 0], 1.0), 0.2, 0.7, u, u, rng=rng)
    assert rep.items["vi"].passed and rep.items["vi"].margin >= 0


def test_yosida_properties_zero_has_trivial_margins(rng):
    rep = yosida_properties_check(Zero(2), 0.5, 0.5, rng.normal(size=(10, 2)),
                       rng.normal(size=(10, 2)), rng=rng)
    assert rep.passed


def test_yosida_properties_detects_a_broken_oracle(rng):
    # a prox that ignores eps for a smooth phi breaks the identity checks
    bad = CustomProx(lambda u: 0.5 * np.sum(u * u, axis=-1), prox_fn=lambda u, e: 0.5 * u)
    rep = yosida_properties_check(bad, 0.1, 0.1, rng.normal(size=(200, 1)),
                       rng.normal(size=(200, 1)), rng=rng)
    assert not rep.passed


# --------------------------------------------------------------------------
# custom oracle


def test_custom_gradient_descent_matches_closed_form(rng):
    custom = CustomProx(lambda u: 0.5 * np.sum(u * u, axis=-1), dim=2,
                        gradient=lambda u: u, lipschitz=1.0)
    u = rng.normal(size=(20, 2))
    for eps in (0.01, 1.0, 10.0):
        np.testing.assert_allclose(resolvent(custom, eps, u),
                                   resolvent(HalfSquaredNorm(1.0, 2), eps, u), atol=1e-8)


def test_pseudo_huber_prox_stationarity(rng):
    phi = pseudo_huber(2)
    u = rng.normal(scale=3, size=(50, 2))
    p = resolvent(phi, 0.7, u)
    res = np.linalg.norm(p + 0.7 * phi.gradient(p) - u, axis=-1)
    assert res.max() <= 1e-8 * (1 + np.abs(u).max())


def test_custom_nonconvergence_raises():
    # an overstated Lipschitz bound makes descent slow; the budget runs out
    phi = CustomProx(lambda u: 0.5 * np.sum(u * u, axis=-1), gradient=lambda u: u,
                     lipschitz=100.0, max_iter=5)
    with pytest.raises(NumericFailureError) as info:
        resolvent(phi, 1.0, [10.0])
    assert info.value.residual > 0


def test_custom_requires_an_oracle():
    with pytest.raises(InvalidArgumentError):
        CustomProx(lambda u: u)


# --------------------------------------------------------------------------
# validation


@pytest.mark.parametrize("bad_eps", [0.0, -1.0, np.inf, np.nan])
def test_rejects_bad_eps(bad_eps):
    with pytest.raises(InvalidArgumentError):
        resolvent(Norm1(), bad_eps, [1.0])


def test_rejects_non_finite_state():
    with pytest.raises(InvalidArgumentError):
        resolvent(Norm1(), 1.0, [np.nan])


def test_rejects_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        resolvent(Norm1(2), 1.0, [1.0, 2.0, 3.0])


@pytest.mark.parametrize("make", [
    lambda: IndicatorBox([0.1], [1.0]),
    lambda: IndicatorHalfSpace([1.0], -0.5),
    lambda: IndicatorBall([3.0], 1.0),
    lambda: HalfSquaredNorm(0.0),
])
def test_sets_must_contain_origin(make):
    with pytest.raises(InvalidArgumentError):
        make()


def test_catalog_normalisation(rng):
    for phi in catalog3().values():
        assert phi.value(np.zeros(3)) == 0.0
        u = rng.normal(size=(100, 3))
        assert np.all(phi.value(u) >= 0)
