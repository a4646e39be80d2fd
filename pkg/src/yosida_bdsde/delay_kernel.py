"""Delay measures on ``[-T, 0)`` and the delayed-segment functionals.

Processes are stored on a uniform grid ``t_i = i * h``; values at negative
times are zero by convention, so every functional below reads only grid
indices ``>= 0``. A measure is discretised once into lag weights
``w_l`` attached to ``theta = -l * h`` for ``l = 1..N``:

* ``Dirac(r)`` puts its unit mass on the lag nearest to ``r`` (at least one
  step, since the support excludes 0);
* ``LebesgueScaled(c)`` uses the left-endpoint rule, ``w_l = c * h``;
* ``Atoms`` snaps every atom to its nearest lag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "DelayMeasure", "Dirac", "LebesgueScaled", "Atoms", "GridSegment",
    "lag_weights", "snap_distance", "alpha_tilde", "grid_alpha_tilde",
    "delayed_quadratic", "delayed_average", "delayed_quadratic_path",
    "change_of_order_check", "ChangeOfOrderReport",
]

_GRID_TOL = 1e-9


class DelayMeasure:
    """Finite non-random measure supported on ``[-T, 0)``."""

    T: float

    def total_mass(self) -> float:
        raise NotImplementedError

    def atoms(self):
        """``(theta, weight)`` pairs for atomic kinds, else ``None``."""
        return None


@dataclass(frozen=True)
class Dirac(DelayMeasure):
    """Unit mass at ``theta = -r``."""

    r: float
    T: float

    def __post_init__(self):
        if not 0 < self.r <= self.T:
            raise InvalidArgumentError("Dirac lag r must lie in (0, T]")

    def total_mass(self):
        return 1.0

    def atoms(self):
        return [(-self.r, 1.0)]


@dataclass(frozen=True)
class LebesgueScaled(DelayMeasure):
    """``c`` times Lebesgue measure on ``[-T, 0)``."""

    c: float
    T: float

    def __post_init__(self):
        if not self.c > 0 or not self.T > 0:
            raise InvalidArgumentError("c and T must be > 0")

    def total_mass(self):
        return self.c * self.T


@dataclass(frozen=True)
class Atoms(DelayMeasure):
    """Finite sum of point masses ``sum_j w_j delta_{theta_j}``."""

    thetas: tuple
    weights: tuple
    T: float

    def __post_init__(self):
        th = tuple(float(x) for x in self.thetas)
        w = tuple(float(x) for x in self.weights)
        if len(th) != len(w) or not th:
            raise InvalidArgumentError("thetas and weights must be non-empty and equal length")
        if any(not -self.T <= x < 0 for x in th):
            raise InvalidArgumentError("atoms must lie in [-T, 0)")
        if any(x < 0 for x in w):
            raise InvalidArgumentError("atom weights must be >= 0")
        object.__setattr__(self, "thetas", th)
        object.__setattr__(self, "weights", w)

    def total_mass(self):
        return float(sum(self.weights))

    def atoms(self):
        return list(zip(self.thetas, self.weights))


def alpha_tilde(alpha: DelayMeasure, beta: float) -> float:
    """Exponential moment ``int e^{-beta theta} alpha(d theta)`` in closed form."""
    if beta < 0:
        raise InvalidArgumentError("beta must be >= 0")
    if isinstance(alpha, LebesgueScaled):
        # c (e^{beta T} - 1) / beta, written to stay accurate as beta -> 0
        x = beta * alpha.T
        factor = math.expm1(x) / x if x > 1e-8 else 1.0 + 0.5 * x
        return alpha.c * alpha.T * max(factor, 1.0)
    return float(sum(w * math.exp(-beta * th) for th, w in alpha.atoms()))


def _snap(theta, h, n):
    lag = int(round(-theta / h))
    return min(max(lag, 1), n)


def lag_weights(alpha: DelayMeasure, h: float, n: int) -> np.ndarray:
    """Weights ``w[l]`` for lags ``l = 0..n`` (``w[0]`` is always 0)."""
    w = np.zeros(n + 1)
    if isinstance(alpha, LebesgueScaled):
        # lags beyond the measure's own horizon carry no mass
        n_lags = min(n, int(round(alpha.T / h)))
        w[1:n_lags + 1] = alpha.c * h
        return w
    for th, wt in alpha.atoms():
        w[_snap(th, h, n)] += wt
    return w


def snap_distance(alpha: DelayMeasure, h: float, n: int) -> float:
    """Largest distance between an atom and the grid lag it was snapped to."""
    atoms = alpha.atoms()
    if atoms is None:
        return 0.0
    return max(abs(-th - _snap(th, h, n) * h) for th, _ in atoms)


def grid_alpha_tilde(alpha: DelayMeasure, beta: float, h: float, n: int) -> float:
    """``alpha_tilde`` of the discretised measure (exact for on-grid atoms)."""
    w = lag_weights(alpha, h, n)
    lags = np.arange(n + 1)
    return float(np.sum(w * np.exp(beta * lags * h)))


@dataclass(frozen=True)
class GridSegment:
    """Grid history ``values[j] = x(t_j)`` for ``j = 0..n``; zero before 0."""

    values: np.ndarray
    h: float

    def at(self, j):
        if j < 0:
            return np.zeros_like(np.asarray(self.values[0], dtype=float))
        return np.asarray(self.values[j], dtype=float)


def _grid_index(t, h):
    i = t / h
    j = int(round(i))
    if abs(i - j) > _GRID_TOL * max(1.0, abs(i)):
        raise InvalidArgumentError(f"time {t} is not on the grid of step {h}")
    return j


def delayed_quadratic(alpha: DelayMeasure, segment: GridSegment, t: float) -> float:
    """``int |x(t + theta)|^2 alpha(d theta)`` on the grid, zero-extended."""
    i = _grid_index(t, segment.h)
    if i < 0 or i >= len(segment.values):
        raise InvalidArgumentError("t outside the segment's grid")
    n = len(segment.values) - 1
    w = lag_weights(alpha, segment.h, max(n, 1))
    total = 0.0
    for lag in np.nonzero(w)[0]:
        x = segment.at(i - lag)
        total += w[lag] * float(np.sum(x * x))
    return total


def delayed_average(weights: np.ndarray, x: np.ndarray, axis: int = 1) -> np.ndarray:
    """Delayed linear functional ``D_i = sum_l w_l x_{i-l}`` for every ``i``.

    ``x`` holds a process along ``axis`` (grid index ``0..len-1``); indices
    ``i - l < 0`` contribute zero. The result has the same shape as ``x``.
    """
    x = np.moveaxis(np.asarray(x, dtype=float), axis, 0)
    out = np.zeros_like(x)
    n = x.shape[0]
    for lag in np.nonzero(weights)[0]:
        if lag >= n:
            continue
        out[lag:] += weights[lag] * x[:n - lag]
    return np.moveaxis(out, 0, axis)


def delayed_quadratic_path(weights: np.ndarray, x: np.ndarray, axis: int = 1) -> np.ndarray:
    """Vectorised ``delayed_quadratic`` at every grid index of ``x``.

    ``x`` has the grid along ``axis`` and state components on the trailing
    axes; the squared norm is taken over all axes after ``axis``.
    """
    x = np.asarray(x, dtype=float)
    sq = np.sum(x.reshape(x.shape[:axis + 1] + (-1,)) ** 2, axis=-1)
    return delayed_average(weights, sq, axis=axis)


@dataclass
class ChangeOfOrderReport:
    lhs: float
    rhs_integral: float
    rhs_sup: float
    alpha_tilde: float
    margin: float

    @property
    def passed(self):
        return self.margin >= -1e-9


def change_of_order_check(alpha: DelayMeasure, beta: float, x, h: float) -> ChangeOfOrderReport:
    r"""Check the change-of-order bounds on a grid path.

    With left-endpoint sums over ``s = t_0..t_{N-1}``,

    .. math::

        \int_0^T e^{\beta s}\int |x(s+\theta)|^2\alpha(d\theta)\,ds
        \le \min\Big(\tilde\alpha\int_0^T e^{\beta t}|x(t)|^2dt,\;
        T\tilde\alpha\sup_t e^{\beta t}|x(t)|^2\Big)

    where ``alpha_tilde`` is that of the discretised measure (it coincides
    with the closed form when atoms sit on the grid). ``x`` has shape
    ``(N+1,)`` or ``(N+1, k)``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0] - 1
    if n < 1:
        raise InvalidArgumentError("path needs at least two grid points")
    w = lag_weights(alpha, h, n)
    t = np.arange(n + 1) * h
    sq = np.sum(x * x, axis=1)
    weight = np.exp(beta * t)
    dq = delayed_average(w, sq, axis=0)
    lhs = float(np.sum(h * weight[:n] * dq[:n]))
    at = grid_alpha_tilde(alpha, beta, h, n)
    rhs_int = at * float(np.sum(h * weight[:n] * sq[:n]))
    rhs_sup = n * h * at * float(np.max(weight * sq))
    rhs = min(rhs_int, rhs_sup)
    margin = (rhs - lhs) / (1.0 + abs(lhs) + abs(rhs))
    return ChangeOfOrderReport(lhs, rhs_int, rhs_sup, at, margin)
