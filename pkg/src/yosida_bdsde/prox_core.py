r"""Proximal maps, resolvents and Moreau-Yosida envelopes.

Every convex function here is normalised so that :math:`\varphi \ge
\varphi(0) = 0`. Arrays follow the batch convention ``(..., k)``: the last
axis is the state dimension, leading axes are independent samples (paths,
time steps, random draws).

For :math:`\varepsilon > 0` the resolvent, Yosida gradient and envelope are

.. math::

    J_\varepsilon(u) = \operatorname{argmin}_v \tfrac{1}{2\varepsilon}|u-v|^2
    + \varphi(v), \qquad
    \nabla\varphi_\varepsilon(u) = \frac{u - J_\varepsilon(u)}{\varepsilon},
    \qquad
    \varphi_\varepsilon(u) = \frac{|u - J_\varepsilon(u)|^2}{2\varepsilon}
    + \varphi(J_\varepsilon(u)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError, NumericFailureError

__all__ = [
    "ConvexSpec", "Zero", "IndicatorBox", "IndicatorHalfSpace",
    "IndicatorBall", "HalfSquaredNorm", "Norm1", "CustomProx",
    "YosidaEval", "resolvent", "yosida", "yosida_gradient",
    "semi_implicit_step", "yosida_properties_check", "YosidaPropertiesReport", "ItemResult",
    "standard_catalog", "pseudo_huber",
]

# slack on set membership for indicator kinds (projections land on the
# boundary only up to rounding)
MEMBERSHIP_ATOL = 1e-10
CLOSED_FORM_TOL = 1e-10
ITERATIVE_TOL = 1e-8
STEP_RESIDUAL_TOL = 1e-10
STEP_MAX_ITER = 10_000


def _as_state(u, dim):
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        u = u.reshape(1)
    if u.shape[-1] != dim:
        raise InvalidArgumentError(
            f"state has trailing dimension {u.shape[-1]}, expected {dim}")
    if not np.all(np.isfinite(u)):
        raise InvalidArgumentError("state contains non-finite entries")
    return u


def _as_eps(eps, name="eps"):
    eps = np.asarray(eps, dtype=float)
    if not np.all(np.isfinite(eps)) or np.any(eps <= 0):
        raise InvalidArgumentError(f"{name} must be finite and > 0")
    return eps


def _norm(x):
    return np.sqrt(np.sum(x * x, axis=-1))


class ConvexSpec:
    """A proper convex l.s.c. function on R^k with a proximal oracle.

    Subclasses implement :meth:`value` and :meth:`_prox`; ``eps`` reaching
    ``_prox`` is already validated and has shape broadcastable against
    ``u[..., 0]``.
    """

    dim: int
    #: absolute tolerance the prox oracle is held to
    tolerance: float = CLOSED_FORM_TOL

    def value(self, u):
        raise NotImplementedError

    def _prox(self, u, eps):
        raise NotImplementedError

    def is_indicator(self):
        return False

    def __call__(self, u):
        return self.value(u)


@dataclass(frozen=True, eq=False)
class Zero(ConvexSpec):
    dim: int = 1

    def value(self, u):
        u = np.asarray(u, dtype=float)
        return np.zeros(u.shape[:-1])

    def _prox(self, u, eps):
        return u.copy()


def _indicator_value(violation, scale):
    inside = violation <= MEMBERSHIP_ATOL * (1.0 + scale)
    return np.where(inside, 0.0, np.inf)


@dataclass(frozen=True, eq=False)
class IndicatorBox(ConvexSpec):
    """Indicator of ``{u : lo <= u <= hi}`` (componentwise, lo <= 0 <= hi)."""

    lo: np.ndarray
    hi: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InvalidArgumentError("lo and hi must be vectors of equal length")
        if np.any(lo > 0) or np.any(hi < 0):
            raise InvalidArgumentError("box must contain the origin")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "dim", lo.size)

    def is_indicator(self):
        return True

    def value(self, u):
        u = np.asarray(u, dtype=float)
        viol = np.maximum(self.lo - u, u - self.hi).max(axis=-1)
        return _indicator_value(viol, np.abs(u).max(axis=-1))

    def _prox(self, u, eps):
        return np.clip(u, self.lo, self.hi)


@dataclass(frozen=True, eq=False)
class IndicatorHalfSpace(ConvexSpec):
    """Indicator of ``{u : <a, u> <= b}`` with ``b >= 0``.

    The nonnegative orthant constraint ``y >= 0`` in one dimension is
    ``IndicatorHalfSpace(a=[-1], b=0)``; see :meth:`nonnegative`.
    """

    a: np.ndarray
    b: float = 0.0
    dim: int = field(init=False)

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        if a.ndim != 1 or not np.any(a != 0):
            raise InvalidArgumentError("normal vector a must be a nonzero vector")
        if self.b < 0:
            raise InvalidArgumentError("half-space must contain the origin (b >= 0)")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "dim", a.size)

    @classmethod
    def nonnegative(cls, dim=1, axis=0):
        a = np.zeros(dim)
        a[axis] = -1.0
        return cls(a, 0.0)

    def is_indicator(self):
        return True

    def value(self, u):
        u = np.asarray(u, dtype=float)
        viol = u @ self.a - self.b
        return _indicator_value(viol, np.abs(u).max(axis=-1))

    def _prox(self, u, eps):
        excess = np.maximum(u @ self.a - self.b, 0.0)
        return u - excess[..., None] * self.a / (self.a @ self.a)


@dataclass(frozen=True, eq=False)
class IndicatorBall(ConvexSpec):
    """Indicator of the closed Euclidean ball ``|u - center| <= radius``."""

    center: np.ndarray
    radius: float
    dim: int = field(init=False)

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if self.radius < 0:
            raise InvalidArgumentError("radius must be >= 0")
        if _norm(c) > self.radius * (1 + 1e-12):
            raise InvalidArgumentError("ball must contain the origin")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "dim", c.size)

    def is_indicator(self):
        return True

    def value(self, u):
        u = np.asarray(u, dtype=float)
        viol = _norm(u - self.center) - self.radius
        return _indicator_value(viol, np.abs(u).max(axis=-1))

    def _prox(self, u, eps):
        d = u - self.center
        r = _norm(d)
        scale = np.where(r > self.radius, self.radius / np.where(r > 0, r, 1.0), 1.0)
        return self.center + d * scale[..., None]


@dataclass(frozen=True, eq=False)
class HalfSquaredNorm(ConvexSpec):
    """``phi(u) = scale/2 * |u|^2``."""

    scale: float = 1.0
    dim: int = 1

    def __post_init__(self):
        if not self.scale > 0:
            raise InvalidArgumentError("scale must be > 0")

    def value(self, u):
        u = np.asarray(u, dtype=float)
        return 0.5 * self.scale * np.sum(u * u, axis=-1)

    def _prox(self, u, eps):
        return u / (1.0 + eps * self.scale)[..., None]


@dataclass(frozen=True, eq=False)
class Norm1(ConvexSpec):
    """``phi(u) = sum_j |u_j|``; the prox is soft-thresholding."""

    dim: int = 1

    def value(self, u):
        return np.sum(np.abs(np.asarray(u, dtype=float)), axis=-1)

    def _prox(self, u, eps):
        return np.sign(u) * np.maximum(np.abs(u) - eps[..., None], 0.0)


@dataclass(frozen=True, eq=False)
class CustomProx(ConvexSpec):
    """User-supplied convex function.

    Either an exact ``prox(u, eps)`` oracle is given, or a smooth function
    with ``gradient`` and a Lipschitz bound ``lipschitz`` on that gradient,
    in which case the prox is computed by gradient descent on the strongly
    convex prox objective. The iterative path raises
    :class:`NumericFailureError` when the stationarity residual
    ``|v + eps * grad(v) - u|`` does not drop below ``tolerance * (1 + |u|)``
    within ``max_iter`` sweeps.
    """

    value_fn: Callable
    dim: int = 1
    prox_fn: Callable | None = None
    gradient: Callable | None = None
    lipschitz: float | None = None
    max_iter: int = 10_000
    tolerance: float = ITERATIVE_TOL

    def __post_init__(self):
        if self.prox_fn is None and (self.gradient is None or self.lipschitz is None):
            raise InvalidArgumentError(
                "CustomProx needs prox_fn, or gradient together with lipschitz")

    def value(self, u):
        return np.asarray(self.value_fn(np.asarray(u, dtype=float)), dtype=float)

    def _prox(self, u, eps):
        if self.prox_fn is not None:
            return np.asarray(self.prox_fn(u, eps), dtype=float)
        e = eps[..., None]
        step = e / (1.0 + e * self.lipschitz)
        target = 1e-3 * self.tolerance * (1.0 + _norm(u))
        v = u.copy()
        res = None
        for _ in range(self.max_iter):
            r = v + e * self.gradient(v) - u
            res = _norm(r)
            if np.all(res <= target):
                break
            v = v - (step / e) * r
        ok = res <= self.tolerance * (1.0 + _norm(u))
        if not np.all(ok):
            worst = float(np.max(res))
            raise NumericFailureError(
                f"CustomProx iteration did not converge in {self.max_iter} "
                f"sweeps (residual {worst:.3e})", residual=worst)
        return v


def pseudo_huber(dim=1):
    r"""Smooth convex ``sum_j sqrt(1 + u_j^2) - 1`` with an iterative prox."""
    return CustomProx(
        value_fn=lambda u: np.sum(np.sqrt(1.0 + u * u) - 1.0, axis=-1),
        dim=dim,
        gradient=lambda u: u / np.sqrt(1.0 + u * u),
        lipschitz=1.0,
    )


def standard_catalog(dim=1):
    """One instance of every supported kind, each containing the origin."""
    rng = np.random.default_rng(0)
    lo = -rng.uniform(0.2, 1.0, dim)
    hi = rng.uniform(0.2, 1.0, dim)
    a = rng.normal(size=dim)
    return {
        "zero": Zero(dim),
        "box": IndicatorBox(lo, hi),
        "halfspace": IndicatorHalfSpace(a, 0.3),
        "ball": IndicatorBall(0.2 * np.ones(dim) / np.sqrt(dim), 1.0),
        "half_squared_norm": HalfSquaredNorm(2.0, dim),
        "norm1": Norm1(dim),
        "custom": pseudo_huber(dim),
    }


# --------------------------------------------------------------------------
# resolvent / Yosida approximation


def resolvent(phi: ConvexSpec, eps, u) -> np.ndarray:
    """Return ``J_eps(u) = (I + eps * d phi)^{-1}(u)``.

    For indicator kinds this is the Euclidean projection onto the set.
    ``eps`` may be a scalar or an array broadcastable against ``u[..., 0]``.
    """
    u = _as_state(u, phi.dim)
    eps = np.broadcast_to(_as_eps(eps), u.shape[:-1])
    return phi._prox(u, eps)


@dataclass(frozen=True)
class YosidaEval:
    resolvent: np.ndarray
    gradient: np.ndarray
    envelope: np.ndarray
    epsilon: np.ndarray


def yosida(phi: ConvexSpec, eps, u) -> YosidaEval:
    """Evaluate resolvent, Yosida gradient and Moreau envelope together."""
    u = _as_state(u, phi.dim)
    eps_b = np.broadcast_to(_as_eps(eps), u.shape[:-1])
    j = phi._prox(u, eps_b)
    diff = u - j
    grad = diff / eps_b[..., None]
    env = np.sum(diff * diff, axis=-1) / (2.0 * eps_b) + phi.value(j)
    return YosidaEval(j, grad, env, eps_b)


def yosida_gradient(phi: ConvexSpec, eps, u) -> np.ndarray:
    u = _as_state(u, phi.dim)
    eps_b = np.broadcast_to(_as_eps(eps), u.shape[:-1])
    return (u - phi._prox(u, eps_b)) / eps_b[..., None]


def semi_implicit_step(phi: ConvexSpec, eps, h, x) -> np.ndarray:
    """Solve ``y + h * grad phi_eps(y) = x`` for ``y``.

    Uses the resolvent identity
    ``(I + h grad phi_eps)^{-1} x = x - h/(eps+h) * (x - J_{eps+h}(x))``,
    validated row by row against the residual bound
    ``1e-10 * (1 + |x|)``; failing rows are re-solved by damped fixed-point
    iteration.
    """
    x = _as_state(x, phi.dim)
    eps = float(_as_eps(eps))
    h = float(_as_eps(h, "h"))
    if isinstance(phi, Zero):
        return x.copy()
    j = phi._prox(x, np.full(x.shape[:-1], eps + h))
    y = x - (h / (eps + h)) * (x - j)
    bound = STEP_RESIDUAL_TOL * (1.0 + _norm(x))
    res = _norm(y + h * yosida_gradient(phi, eps, y) - x)
    bad = res > bound
    if np.any(bad):
        y = y.copy()
        y[bad] = _damped_step(phi, eps, h, x[bad], y[bad], bound[bad])
    return y


def _damped_step(phi, eps, h, x, y, bound):
    theta = eps / (eps + h)
    res = None
    for _ in range(STEP_MAX_ITER):
        r = y + h * yosida_gradient(phi, eps, y) - x
        res = _norm(r)
        if np.all(res <= bound):
            return y
        y = y - theta * r
    worst = float(np.max(res))
    raise NumericFailureError(
        f"semi-implicit step did not converge in {STEP_MAX_ITER} iterations "
        f"(residual {worst:.3e})", residual=worst)


# --------------------------------------------------------------------------
# structural property check


@dataclass
class ItemResult:
    passed: bool
    margin: float  # worst relative margin; >= -tol means pass


@dataclass
class YosidaPropertiesReport:
    items: dict
    tolerance: float

    @property
    def passed(self):
        return all(r.passed for r in self.items.values())

    def worst_margin(self):
        return min(r.margin for r in self.items.values())


def _rel(rhs, lhs, scale=0.0):
    """Relative margin ``(rhs - lhs) / (1 + |lhs| + |rhs| + scale)``."""
    with np.errstate(invalid="ignore"):
        m = (rhs - lhs) / (1.0 + np.abs(lhs) + np.abs(rhs) + scale)
    # an infinite right-hand side (phi outside its domain) is slack, not nan
    return np.where(np.isinf(rhs) & (rhs > 0), np.inf, m)


def _witnesses(phi, j, n, rng):
    scale = 1.0 + np.abs(j).max(axis=-1, keepdims=True)
    noise = rng.standard_normal((n,) + j.shape) * scale
    w = j + noise
    half = n // 2
    # half the witnesses are pulled into dom(d phi) so indicators are tested
    w[:half] = phi._prox(w[:half], np.ones(w[:half].shape[:-1]))
    return w


def yosida_properties_check(phi: ConvexSpec, eps, delta, u, v, *, rng=None,
                            n_witnesses=32, tol=1e-9) -> YosidaPropertiesReport:
    """Evaluate the six structural properties of the Yosida approximation.

    ``u`` and ``v`` may carry leading batch axes; ``eps`` and ``delta``
    broadcast against them. Each item reports the worst relative margin over
    the batch (``rhs - lhs`` scaled by the magnitudes involved).

    Items
    -----
    i
        ``|grad_eps(u) - grad_eps(v)| <= |u - v| / eps`` and convexity of
        ``phi_eps`` at three points of the segment ``[u, v]``.
    ii
        ``phi_eps(u) <= phi(u)``.
    iii
        ``grad_eps(u) == (u - J_eps(u)) / eps`` and the subgradient
        inequality ``phi(w) >= phi(J_eps u) + <grad_eps(u), w - J_eps u>``
        at random witnesses ``w``.
    iv
        ``|J_eps(u) - J_eps(v)| <= |u - v|``.
    v
        ``0 <= phi_eps(u) <= <grad_eps(u), u>``.
    vi
        ``<grad_eps(u) - grad_delta(v), u - v>
        >= -(eps + delta) <grad_eps(u), grad_delta(v)>``.
    """
    rng = np.random.default_rng() if rng is None else rng
    u = _as_state(u, phi.dim)
    v = _as_state(v, phi.dim)
    u, v = np.broadcast_arrays(u, v)
    batch = u.shape[:-1]
    eps = np.broadcast_to(_as_eps(eps), batch)
    delta = np.broadcast_to(_as_eps(delta, "delta"), batch)

    yu = yosida(phi, eps, u)
    yv = yosida(phi, eps, v)
    yv_d = yosida(phi, delta, v)
    du = u - v
    ndu = _norm(du)

    margins = {}

    # (i)
    lip = _rel(ndu / eps, _norm(yu.gradient - yv.gradient))
    conv = []
    for lam in (0.25, 0.5, 0.75):
        mid = yosida(phi, eps, lam * u + (1 - lam) * v).envelope
        conv.append(_rel(lam * yu.envelope + (1 - lam) * yv.envelope, mid))
    margins["i"] = min(lip.min(), *(c.min() for c in conv))

    # (ii)
    margins["ii"] = _rel(phi.value(u), yu.envelope).min()

    # (iii)
    ident = -np.abs(yu.gradient - (u - yu.resolvent) / eps[..., None]).max()
    w = _witnesses(phi, yu.resolvent, n_witnesses, rng)
    phi_w = phi.value(w)
    phi_j = phi.value(yu.resolvent)
    lin = np.sum(yu.gradient * (w - yu.resolvent), axis=-1)
    slack = 1e-10 * (1.0 + np.abs(phi_j)
                     + _norm(yu.gradient) * _norm(w - yu.resolvent))
    with np.errstate(invalid="ignore"):
        memb = np.where(np.isinf(phi_w), np.inf,
                        (phi_w - phi_j - lin + slack) / (1.0 + np.abs(phi_w)
                        + np.abs(phi_j) + np.abs(lin)))
    margins["iii"] = min(ident, memb.min())

    # (iv)
    margins["iv"] = _rel(ndu, _norm(yu.resolvent - yv.resolvent)).min()

    # (v)
    inner = np.sum(yu.gradient * u, axis=-1)
    pos = yu.envelope / (1.0 + np.abs(yu.envelope))
    margins["v"] = min(pos.min(), _rel(inner, yu.envelope).min())

    # (vi)
    ga, gb = yu.gradient, yv_d.gradient
    lhs = np.sum((ga - gb) * du, axis=-1)
    cross = (eps + delta) * np.sum(ga * gb, axis=-1)
    scale = (_norm(ga) + _norm(gb)) * ndu + (eps + delta) * _norm(ga) * _norm(gb)
    margins["vi"] = (((lhs + cross) / (1.0 + scale))).min()

    items = {k: ItemResult(bool(m >= -tol), float(m)) for k, m in margins.items()}
    return YosidaPropertiesReport(items, tol)
