"""Backward recursion for delayed BDSDEs with an optional Yosida penalty.

One Picard sweep, given the previous iterate ``(Y^m, Z^m)`` from which all
delayed functionals are read, runs ``i = N-1, ..., 0``::

    G_{i+1}  = g(t_{i+1}, Y_{i+1}, Z_{i+1}, Yd^m_{i+1}, Zd^m_{i+1})   (Z_N = 0)
    X_i      = Y_{i+1} + G_{i+1} dB_i
    Ytil_i   = E_i[X_i]
    Z_i      = E_i[X_i dW_i^T] / h
    F_i      = f(t_i, Ytil_i, Z_i, Yd^m_i, Zd^m_i)     (projected by E_i if delayed)
    Y_i + h grad phi_eps(Y_i) = Ytil_i + h F_i,   U_i = grad phi_eps(Y_i)

``E_i`` conditions on ``(dW_0..dW_{i-1}, dB_i..dB_{N-1})``: exactly on a
Rademacher tree, by least squares on a polynomial basis otherwise.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import delay_kernel
from .delay_kernel import DelayMeasure
from .errors import InvalidArgumentError
from .noise_grid import PathEnsemble, TimeGrid
from .prox_core import ConvexSpec, semi_implicit_step, yosida_gradient

__all__ = [
    "Coefficients", "Tree", "Regression", "SolverConfig", "ProcessTriple",
    "PicardTrace", "ContractionDiagnostics", "AprioriReport",
    "TreeEstimator", "RegressionEstimator", "make_estimator",
    "contraction_margin", "contraction_constants", "solve",
    "apriori_bound_check", "data_moment", "weighted_norms",
    "export_solution_csv", "export_trace_csv",
]

log = logging.getLogger(__name__)


@dataclass
class Coefficients:
    """Generator ``f``, backward-noise coefficient ``g`` and terminal value.

    ``f(t, y, z, yd, zd)`` returns shape ``(M, k)`` and ``g`` returns
    ``(M, k, d)``, with ``y: (M, k)``, ``z: (M, k, d)`` and ``yd, zd`` the
    delayed linear functionals ``int Y(t+theta) alpha(d theta)`` and
    ``int Z(t+theta) alpha(d theta)`` of the same shapes. Scalars and other
    broadcastable returns are accepted. ``terminal(W, B)`` maps full paths of
    shape ``(M, N+1, d)`` to ``xi`` of shape ``(M, k)``.

    ``K``, ``R`` and ``L`` are the declared Lipschitz constants: ``K`` for
    ``f`` in the present state, ``R`` for ``g`` in the present state, ``L``
    for the squared delayed increments of both. ``delayed`` must be true
    whenever ``f`` or ``g`` reads ``yd`` or ``zd``.
    """

    f: Callable
    g: Callable
    terminal: Callable
    k: int = 1
    d: int = 1
    K: float = 0.0
    R: float = 0.0
    L: float = 0.0
    delayed: bool = False
    name: str = ""

    def drift(self, t, y, z, yd, zd):
        m = y.shape[0]
        if t < 0:
            return np.zeros((m, self.k))
        return np.broadcast_to(np.asarray(self.f(t, y, z, yd, zd), dtype=float),
                               (m, self.k))

    def diffusion(self, t, y, z, yd, zd):
        m = y.shape[0]
        if t < 0:
            return np.zeros((m, self.k, self.d))
        return np.broadcast_to(np.asarray(self.g(t, y, z, yd, zd), dtype=float),
                               (m, self.k, self.d))

    def xi(self, ensemble: PathEnsemble):
        out = np.asarray(self.terminal(ensemble.W(), ensemble.B()), dtype=float)
        return np.broadcast_to(out, (ensemble.M, self.k)).copy()


@dataclass(frozen=True)
class Tree:
    """Exact conditional expectations on a Rademacher tree ensemble."""


@dataclass(frozen=True)
class Regression:
    """Least-squares conditional expectations.

    Regressors at step ``i`` are ``W(t_i)``, ``B_T - B(t_{i+1})`` and
    ``dB_i`` (each standardised), expanded into all monomials of total
    degree ``<= degree``.
    """

    degree: int = 2


@dataclass
class SolverConfig:
    grid: TimeGrid
    beta: float = 1.0
    gamma: float = 1.0
    picard_tol: float | None = None
    picard_max: int = 50
    estimator: Tree | Regression = field(default_factory=Tree)
    delay: DelayMeasure | None = None

    def __post_init__(self):
        if self.picard_tol is None:
            self.picard_tol = 1e-8 if isinstance(self.estimator, Tree) else 1e-4
        if not self.picard_tol > 0:
            raise InvalidArgumentError("picard_tol must be > 0")
        if self.picard_max < 1:
            raise InvalidArgumentError("picard_max must be >= 1")
        if self.beta < 0 or not self.gamma > 0:
            raise InvalidArgumentError("need beta >= 0 and gamma > 0")

    def lag_weights(self):
        n = self.grid.N
        if self.delay is None:
            return np.zeros(n + 1)
        return delay_kernel.lag_weights(self.delay, self.grid.h, n)


# --------------------------------------------------------------------------
# conditional expectation estimators


class TreeEstimator:
    """Exact ``E_i`` by averaging over the unobserved increments."""

    def __init__(self, ensemble: PathEnsemble):
        if not ensemble.is_tree:
            raise InvalidArgumentError("TreeEstimator needs a tree ensemble")
        self.n = ensemble.grid.N
        self.m = ensemble.M

    def cond_exp(self, i, x):
        x = np.asarray(x, dtype=float)
        n = self.n
        trail = x.shape[1:]
        y = x.reshape((2,) * (2 * n) + trail)
        hidden = list(range(i, n)) + list(range(n, n + i))
        for ax in hidden:
            # pairwise halving keeps averages of equal values bit-exact
            y = 0.5 * (y.take([0], axis=ax) + y.take([1], axis=ax))
        return np.broadcast_to(y, (2,) * (2 * n) + trail).reshape(x.shape)

    def adaptedness_violation(self, i, x):
        """``max |x - E_i[x]|``; zero iff ``x`` is measurable at step ``i``."""
        return float(np.max(np.abs(x - self.cond_exp(i, x))))


def _monomials(n_vars, degree):
    out = []
    for deg in range(degree + 1):
        out.extend(itertools.combinations_with_replacement(range(n_vars), deg))
    return out


class RegressionEstimator:
    """Least-squares projection onto polynomials of the step-``i`` regressors."""

    RANK_RTOL = 1e-10

    def __init__(self, ensemble: PathEnsemble, degree: int = 2):
        if degree < 0:
            raise InvalidArgumentError("degree must be >= 0")
        self.ensemble = ensemble
        self.degree = degree
        self._q = {}
        self.degree_used = {}

    def _regressors(self, i):
        ens = self.ensemble
        g = ens.grid
        W = ens.W()[:, i]
        B = ens.B()
        S = B[:, -1] - B[:, i + 1]
        dB = ens.dB[:, i]
        cols = []
        for x, var in ((W, g.times[i]), (S, g.T - g.times[i + 1]), (dB, g.h)):
            if var > 0:
                cols.append(x / math.sqrt(var))
        if not cols:
            return np.zeros((ens.M, 0))
        return np.concatenate(cols, axis=1)

    def _basis(self, i):
        if i in self._q:
            return self._q[i]
        X = self._regressors(i)
        for deg in range(self.degree, -1, -1):
            cols = [np.prod(X[:, list(mono)], axis=1) if mono else np.ones(X.shape[0])
                    for mono in _monomials(X.shape[1], deg)]
            A = np.stack(cols, axis=1)
            q, r = np.linalg.qr(A)
            diag = np.abs(np.diag(r))
            # a wide basis is rank deficient whatever its R diagonal says
            if A.shape[1] <= A.shape[0] and diag.min() > self.RANK_RTOL * diag.max():
                break
            warnings.warn(
                f"regression basis rank deficient at step {i} with degree "
                f"{deg}; falling back to degree {deg - 1}", RuntimeWarning)
        self._q[i] = q
        self.degree_used[i] = deg
        return q

    def cond_exp(self, i, x):
        x = np.asarray(x, dtype=float)
        q = self._basis(i)
        flat = x.reshape(x.shape[0], -1)
        return (q @ (q.T @ flat)).reshape(x.shape)


def make_estimator(config: SolverConfig, ensemble: PathEnsemble):
    if isinstance(config.estimator, Tree):
        return TreeEstimator(ensemble)
    return RegressionEstimator(ensemble, config.estimator.degree)


# --------------------------------------------------------------------------
# contraction constants


@dataclass
class ContractionDiagnostics:
    K1: float
    K2: float
    K3: float
    K4: float
    alpha_tilde: float
    beta: float
    gamma: float
    feasible: bool
    best: dict | None = None  # grid-search optimum when infeasible

    @property
    def margin(self):
        return min(self.K1, self.K2, self.K3, self.K4)


def contraction_constants(beta, gamma, K, L, R, at):
    """The four weighted-norm constants; works elementwise on arrays."""
    d1 = 6 * K**2 / gamma + 3 * L * at / gamma + 3 * L * at + 6 * R**2
    d3 = 4 * K**2 / gamma + 2 * L * at / gamma + 2 * L * at + 4 * R**2
    return beta - gamma - d1, 1 - d1, beta - gamma - d3, 1 - d3


def _alpha_tilde(delay, beta):
    return 0.0 if delay is None else delay_kernel.alpha_tilde(delay, beta)


def contraction_margin(coeffs: Coefficients, config: SolverConfig, *,
                       beta_grid=None, gamma_grid=None) -> ContractionDiagnostics:
    """Evaluate K1..K4 at ``(config.beta, config.gamma)``.

    When any of them is non-positive, a grid search over
    ``beta in [0, 100]``, ``gamma in (0, 20]`` records the pair maximising
    ``min(K1..K4)`` in ``best``.
    """
    at = _alpha_tilde(config.delay, config.beta)
    ks = contraction_constants(config.beta, config.gamma, coeffs.K, coeffs.L,
                               coeffs.R, at)
    feasible = all(k > 0 for k in ks)
    diag = ContractionDiagnostics(*map(float, ks), at, config.beta,
                                  config.gamma, feasible)
    if not feasible:
        betas = np.linspace(0, 100, 401) if beta_grid is None else np.asarray(beta_grid)
        gammas = np.linspace(0.05, 20, 400) if gamma_grid is None else np.asarray(gamma_grid)
        ats = np.array([_alpha_tilde(config.delay, b) for b in betas])
        bb, gg = np.meshgrid(betas, gammas, indexing="ij")
        with np.errstate(over="ignore", invalid="ignore"):
            k = contraction_constants(bb, gg, coeffs.K, coeffs.L, coeffs.R, ats[:, None])
            worst = np.nan_to_num(np.minimum.reduce(k), nan=-np.inf)
        idx = np.unravel_index(np.argmax(worst), worst.shape)
        best = {
            "beta": float(betas[idx[0]]), "gamma": float(gammas[idx[1]]),
            "margin": float(worst[idx]),
            "K": [float(x[idx]) for x in k],
        }
        best["feasible"] = best["margin"] > 0
        diag.best = best
    return diag


# --------------------------------------------------------------------------
# solver


@dataclass
class ProcessTriple:
    """Grid solution of the (penalised) equation.

    Attributes
    ----------
    Y : (M, N+1, k)
    Z : (M, N, k, d)
    U : (M, N, k)
        Yosida gradient ``grad phi_eps(Y_i)``; zero without penalty.
    drift : (M, N, k)
        Generator values ``F_i`` actually used at each step.
    backward_noise : (M, N, k)
        ``G_{i+1} dB_i``.
    """

    Y: np.ndarray
    Z: np.ndarray
    U: np.ndarray
    drift: np.ndarray
    backward_noise: np.ndarray
    ensemble: PathEnsemble
    eps: float | None = None

    @property
    def grid(self):
        return self.ensemble.grid

    def pathwise_y0(self):
        """``xi + sum_i (h F_i - h U_i + G_{i+1} dB_i)`` per path.

        Its mean equals the mean of ``Y_0`` for both estimators, so its
        spread is the Monte Carlo error of the ``E[Y_0]`` estimate.
        """
        h = self.grid.h
        return self.Y[:, -1] + np.sum(h * (self.drift - self.U) + self.backward_noise, axis=1)

    def y0_estimate(self):
        """``(E[Y_0], standard error)`` per component."""
        mean = self.ensemble.expectation(self.Y[:, 0])
        se = self.ensemble.standard_error(self.pathwise_y0())
        return mean, se


@dataclass
class PicardTrace:
    dY: list = field(default_factory=list)
    dZ: list = field(default_factory=list)
    converged: bool = False
    advisory: bool = False

    @property
    def distances(self):
        return [a + b for a, b in zip(self.dY, self.dZ)]

    @property
    def iterations(self):
        return len(self.dY)

    def ratios(self):
        d = self.distances
        return [d[j + 1] / d[j] if d[j] > 0 else 0.0 for j in range(len(d) - 1)]


def weighted_norms(ensemble: PathEnsemble, beta, Y=None, Z=None):
    """``(E sup_i e^{beta t_i}|Y_i|^2, E sum_i e^{beta t_i}|Z_i|^2 h)``.

    ``Y`` is indexed on grid times, ``Z`` on steps; either may be ``None``.
    """
    g = ensemble.grid
    t = g.times
    out = []
    if Y is not None:
        sq = np.sum(Y.reshape(Y.shape[:2] + (-1,)) ** 2, axis=-1)
        out.append(float(ensemble.expectation(np.max(np.exp(beta * t[:sq.shape[1]]) * sq, axis=1))))
    else:
        out.append(0.0)
    if Z is not None:
        sq = np.sum(Z.reshape(Z.shape[:2] + (-1,)) ** 2, axis=-1)
        out.append(float(ensemble.expectation(np.sum(g.h * np.exp(beta * t[:sq.shape[1]]) * sq, axis=1))))
    else:
        out.append(0.0)
    return tuple(out)


def _sweep(coeffs, config, ensemble, est, Yprev, Zprev, penalty, xi):
    g = config.grid
    n, h = g.N, g.h
    t = g.times
    m, k, d = ensemble.M, coeffs.k, coeffs.d
    w = config.lag_weights()
    Yd = delay_kernel.delayed_average(w, Yprev, axis=1)
    Zpad = np.concatenate([Zprev, np.zeros((m, 1, k, d))], axis=1)
    Zd = delay_kernel.delayed_average(w, Zpad, axis=1)

    Y = np.empty((m, n + 1, k))
    Z = np.empty((m, n, k, d))
    U = np.zeros((m, n, k))
    F = np.empty((m, n, k))
    GdB = np.empty((m, n, k))
    Y[:, n] = xi
    z_next = np.zeros((m, k, d))
    for i in range(n - 1, -1, -1):
        G = coeffs.diffusion(t[i + 1], Y[:, i + 1], z_next, Yd[:, i + 1], Zd[:, i + 1])
        gdb = np.einsum("mkd,md->mk", G, ensemble.dB[:, i])
        X = Y[:, i + 1] + gdb
        dw = ensemble.dW[:, i]
        both = est.cond_exp(i, np.concatenate(
            [X[:, :, None], X[:, :, None] * dw[:, None, :]], axis=2))
        ytil = both[:, :, 0]
        Z[:, i] = both[:, :, 1:] / h
        f = coeffs.drift(t[i], ytil, Z[:, i], Yd[:, i], Zd[:, i])
        if coeffs.delayed:
            f = est.cond_exp(i, f)
        rhs = ytil + h * f
        if penalty is None:
            Y[:, i] = rhs
        else:
            phi, eps = penalty
            Y[:, i] = semi_implicit_step(phi, eps, h, rhs)
            U[:, i] = yosida_gradient(phi, eps, Y[:, i])
        F[:, i] = f
        GdB[:, i] = gdb
        z_next = Z[:, i]
    return Y, Z, U, F, GdB


def solve(coeffs: Coefficients, config: SolverConfig, ensemble: PathEnsemble,
          penalty: tuple[ConvexSpec, float] | None = None, *, estimator=None):
    """Solve the delayed BDSDE, penalised by ``grad phi_eps`` when given.

    Returns
    -------
    (ProcessTriple, PicardTrace)
        Picard non-convergence is reported through ``trace.converged``;
        ``trace.advisory`` is set when the contraction constants are not all
        positive.
    """
    if ensemble.grid != config.grid:
        raise InvalidArgumentError("ensemble grid does not match the solver grid")
    if ensemble.d != coeffs.d:
        raise InvalidArgumentError("ensemble dimension does not match coefficients")
    if isinstance(config.estimator, Tree) and not ensemble.is_tree:
        raise InvalidArgumentError("Tree estimator requires a tree ensemble")
    if penalty is not None:
        phi, eps = penalty
        if phi.dim != coeffs.k:
            raise InvalidArgumentError("phi dimension does not match the state")
        if not eps > 0:
            raise InvalidArgumentError("penalty eps must be > 0")
    est = make_estimator(config, ensemble) if estimator is None else estimator

    trace = PicardTrace()
    trace.advisory = not contraction_margin(coeffs, config).feasible
    n = config.grid.N
    m, k, d = ensemble.M, coeffs.k, coeffs.d
    xi = coeffs.xi(ensemble)
    Yp = np.zeros((m, n + 1, k))
    Zp = np.zeros((m, n, k, d))
    out = None
    for _ in range(config.picard_max):
        out = _sweep(coeffs, config, ensemble, est, Yp, Zp, penalty, xi)
        dY, dZ = weighted_norms(ensemble, config.beta, out[0] - Yp, out[1] - Zp)
        trace.dY.append(dY)
        trace.dZ.append(dZ)
        Yp, Zp = out[0], out[1]
        if not coeffs.delayed or dY + dZ <= config.picard_tol:
            # without delay the sweep does not read the previous iterate
            trace.converged = True
            break
    if not trace.converged:
        log.warning("Picard iteration stopped after %d sweeps (distance %.3e)",
                    trace.iterations, trace.distances[-1])
    eps = None if penalty is None else float(penalty[1])
    return ProcessTriple(*out, ensemble=ensemble, eps=eps), trace


# --------------------------------------------------------------------------
# a priori bound


def data_moment(coeffs: Coefficients, ensemble: PathEnsemble, beta: float) -> float:
    """``E[e^{beta T}|xi|^2 + int e^{beta s}(|f(s,0,..)|^2 + |g(s,0,..)|^2) ds]``.

    Time integrals use left-endpoint sums on the ensemble grid.
    """
    g = ensemble.grid
    m, k, d = ensemble.M, coeffs.k, coeffs.d
    xi = coeffs.xi(ensemble)
    total = math.exp(beta * g.T) * float(ensemble.expectation(np.sum(xi * xi, axis=1)))
    y0 = np.zeros((m, k))
    z0 = np.zeros((m, k, d))
    for i in range(g.N):
        t = g.times[i]
        f0 = coeffs.drift(t, y0, z0, y0, z0)
        g0 = coeffs.diffusion(t, y0, z0, y0, z0)
        sq = np.sum(f0 * f0, axis=1) + np.sum(g0 * g0, axis=(1, 2))
        total += g.h * math.exp(beta * t) * float(ensemble.expectation(sq))
    return total


@dataclass
class AprioriReport:
    sup_norm_Y: float
    H2_norm_Z: float
    M1: float
    ratio: float
    consistent: bool

    @property
    def lhs(self):
        return self.sup_norm_Y + self.H2_norm_Z


def apriori_bound_check(solution: ProcessTriple, coeffs: Coefficients,
                        config: SolverConfig) -> AprioriReport:
    """Ratio of the weighted solution norms to the data moment ``M1``."""
    ens = solution.ensemble
    sy, hz = weighted_norms(ens, config.beta, solution.Y, solution.Z)
    m1 = data_moment(coeffs, ens, config.beta)
    lhs = sy + hz
    if m1 == 0:
        return AprioriReport(sy, hz, m1, 0.0 if lhs == 0 else math.inf, lhs == 0)
    return AprioriReport(sy, hz, m1, lhs / m1, True)


# --------------------------------------------------------------------------
# CSV export


def _fmt(x):
    return repr(float(x))


def export_solution_csv(solution: ProcessTriple, path, max_paths=None) -> None:
    """Rows ``path, time, Y_*, Z_*_*, U_*``; ``Z`` and ``U`` are blank at ``T``."""
    Y, Z, U = solution.Y, solution.Z, solution.U
    m, n1, k = Y.shape
    d = Z.shape[3]
    times = solution.grid.times
    header = (["path", "time"] + [f"Y_{a}" for a in range(k)]
              + [f"Z_{a}_{b}" for a in range(k) for b in range(d)]
              + [f"U_{a}" for a in range(k)])
    rows = m if max_paths is None else min(m, max_paths)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for p in range(rows):
            for i in range(n1):
                row = [p, _fmt(times[i])] + [_fmt(x) for x in Y[p, i]]
                if i < n1 - 1:
                    row += [_fmt(x) for x in Z[p, i].ravel()] + [_fmt(x) for x in U[p, i]]
                else:
                    row += [""] * (k * d + k)
                w.writerow(row)


def export_trace_csv(trace: PicardTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "dY", "dZ"])
        for j, (a, b) in enumerate(zip(trace.dY, trace.dZ), start=1):
            w.writerow([j, _fmt(a), _fmt(b)])
