"""Penalisation along a decreasing eps-schedule and the empirical checks.

Every run of a schedule consumes the same ensemble, so differences between
runs at ``eps`` and ``delta`` are free of sampling noise between runs
(common random numbers). The smallest-eps run stands in for the limit
triple ``(Y, Z, U)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .bdsde_engine import (Coefficients, PicardTrace, ProcessTriple,
                           SolverConfig, data_moment, make_estimator, solve,
                           weighted_norms)
from .errors import BDSDEError, DataAssumptionError, InvalidArgumentError
from .noise_grid import PathEnsemble
from .prox_core import ConvexSpec, resolvent, yosida

__all__ = [
    "DEFAULT_SCHEDULE", "PenalizedRun", "CauchyEntry", "LimitTriple",
    "run_schedule", "penalty_moment", "apriori_uniformity_check", "penalty_bounds_check",
    "cauchy_check", "subgradient_check", "AprioriUniformityReport", "PenaltyBoundsReport",
    "CauchyReport", "SubgradientReport", "export_schedule_csv",
]

DEFAULT_SCHEDULE = tuple(2.0 ** -j for j in range(2, 9))


@dataclass
class PenalizedRun:
    eps: float
    solution: ProcessTriple
    trace: PicardTrace
    diagnostics: dict


@dataclass
class CauchyEntry:
    eps: float
    delta: float
    dist_Y: float  # E sup_t e^{beta t}|Y^eps - Y^delta|^2
    dist_Z: float  # E int e^{beta s}|Z^eps - Z^delta|^2 ds
    se_Y: float


@dataclass
class LimitTriple:
    Y: np.ndarray
    Z: np.ndarray
    U: np.ndarray
    eps: float
    solution: ProcessTriple
    cauchy_table: list = field(default_factory=list)


def penalty_moment(phi: ConvexSpec, coeffs: Coefficients, ensemble: PathEnsemble,
                   beta: float) -> float:
    """``E[e^{beta T} phi(xi)]``; aborts when ``phi(xi)`` is infinite on a path."""
    xi = coeffs.xi(ensemble)
    vals = phi.value(xi)
    if not np.all(np.isfinite(vals)):
        bad = int(np.sum(~np.isfinite(vals)))
        raise DataAssumptionError(
            f"terminal value lies outside dom(phi) on {bad} path(s)")
    return math.exp(beta * ensemble.grid.T) * float(ensemble.expectation(vals))


def _diagnostics(sol: ProcessTriple, phi, eps, beta, m1, m2):
    ens = sol.ensemble
    g = ens.grid
    t = g.times
    wt = np.exp(beta * t)
    y = sol.Y
    ev = yosida(phi, eps, y)
    dist2 = np.sum((y - ev.resolvent) ** 2, axis=-1)
    sup_y, h2_z = weighted_norms(ens, beta, sol.Y, sol.Z)
    _, h2_u = weighted_norms(ens, beta, None, sol.U)
    return {
        "M1": m1,
        "M2": m2,
        "sup_norm_Y": sup_y,
        "H2_norm_Z": h2_z,
        "H2_norm_U": h2_u,
        "envelope_integral": float(np.sum(
            g.h * wt[:-1] * ens.expectation(ev.envelope[:, :-1]))),
        "domain_distance_curve": wt * ens.expectation(dist2),
        "phi_J_curve": wt * ens.expectation(phi.value(ev.resolvent)),
    }


def run_schedule(coeffs: Coefficients, config: SolverConfig, ensemble: PathEnsemble,
                 phi: ConvexSpec, schedule=DEFAULT_SCHEDULE):
    """Solve the penalised equation for each ``eps`` of a decreasing schedule.

    Returns
    -------
    (LimitTriple, list of PenalizedRun)
    """
    schedule = [float(e) for e in schedule]
    if not schedule or any(e <= 0 for e in schedule):
        raise InvalidArgumentError("schedule must be non-empty with all eps > 0")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise InvalidArgumentError("schedule must be strictly decreasing")
    m1 = data_moment(coeffs, ensemble, config.beta)
    m2 = m1 + penalty_moment(phi, coeffs, ensemble, config.beta)
    est = make_estimator(config, ensemble)

    runs = []
    for eps in schedule:
        try:
            sol, trace = solve(coeffs, config, ensemble, (phi, eps), estimator=est)
        except BDSDEError as exc:
            exc.args = (f"solve failed at eps={eps}: {exc}",) + exc.args[1:]
            raise
        runs.append(PenalizedRun(eps, sol, trace,
                                 _diagnostics(sol, phi, eps, config.beta, m1, m2)))

    table = []
    w = np.exp(config.beta * config.grid.times)
    for a, b in zip(runs, runs[1:]):
        dy = a.solution.Y - b.solution.Y
        path_sup = np.max(w * np.sum(dy * dy, axis=-1), axis=1)
        dist_y = float(ensemble.expectation(path_sup))
        _, dist_z = weighted_norms(ensemble, config.beta, None,
                                   a.solution.Z - b.solution.Z)
        table.append(CauchyEntry(a.eps, b.eps, dist_y, dist_z,
                                 float(ensemble.standard_error(path_sup))))
    last = runs[-1].solution
    limit = LimitTriple(last.Y, last.Z, last.U, runs[-1].eps, last, table)
    return limit, runs


# --------------------------------------------------------------------------
# checks


def _spread(values):
    v = np.asarray(values, dtype=float)
    if np.all(v == 0):
        return 1.0
    if np.any(v <= 0):
        return math.inf
    return float(v.max() / v.min())


def _growth(values):
    """``max(values) / values[0]``: how far a bound grows as eps decreases."""
    v = np.asarray(values, dtype=float)
    if np.all(v == 0):
        return 1.0
    if v[0] <= 0 or not np.all(np.isfinite(v)):
        return math.inf
    return float(v.max() / v[0])


@dataclass
class AprioriUniformityReport:
    ratios: list
    spread: float
    bound: float
    passed: bool


def apriori_uniformity_check(runs, bound=10.0) -> AprioriUniformityReport:
    """Uniform-in-eps bound on ``(E sup e^{bt}|Y|^2 + E int e^{bs}|Z|^2) / M1``."""
    ratios = []
    for r in runs:
        d = r.diagnostics
        num = d["sup_norm_Y"] + d["H2_norm_Z"]
        ratios.append(0.0 if num == 0 else (num / d["M1"] if d["M1"] > 0 else math.inf))
    spread = _spread(ratios)
    return AprioriUniformityReport(ratios, spread, bound,
                                   bool(spread <= bound and all(np.isfinite(ratios))))


@dataclass
class PenaltyBoundsReport:
    gradient_ratio: list      # E int e^{bs}|U|^2 ds / M2
    phi_J_sup_ratio: list     # sup_t E[e^{bt} phi(J Y)] / M2
    phi_J_int_ratio: list     # E int e^{bs} phi(J Y) ds / M2
    domain_ratio: list        # sup_t E[e^{bt}|Y - J Y|^2] / (eps M2)
    domain_over_eps: list     # sup_t E[e^{bt}|Y - J Y|^2] / eps
    spreads: dict             # max / min across the schedule
    growth: dict              # max / (value at the largest eps)
    bound: float
    passed: bool
    domain_step_ratio: float = 1.0  # largest ratio of domain_over_eps between consecutive eps


def penalty_bounds_check(runs, phi: ConvexSpec = None, bound=10.0) -> PenaltyBoundsReport:
    """Boundedness across the schedule of the three penalty estimates.

    The estimates are upper bounds, so a family passes when it does not grow
    by more than ``bound`` as eps decreases (its maximum over the schedule
    relative to its value at the largest eps). Decay is allowed: a smooth
    penalty gives a domain distance of order ``eps^2``. The two-sided
    max/min spreads are reported as well.
    """
    grad, sup_j, int_j, dom, dom_eps = [], [], [], [], []
    for r in runs:
        d = r.diagnostics
        m2 = d["M2"]
        h = r.solution.grid.h
        curve = d["domain_distance_curve"]
        pj = d["phi_J_curve"]
        s = float(np.max(curve))
        dom_eps.append(s / r.eps)
        if m2 == 0:
            zero = d["H2_norm_U"] == 0 and s == 0
            val = 0.0 if zero else math.inf
            grad.append(val); sup_j.append(val); int_j.append(val); dom.append(val)
            continue
        grad.append(d["H2_norm_U"] / m2)
        sup_j.append(float(np.max(pj)) / m2)
        int_j.append(float(np.sum(h * pj[:-1])) / m2)
        dom.append(s / (r.eps * m2))
    spreads = {
        "gradient": _spread(grad),
        "phi_J": max(_spread(sup_j), _spread(int_j)),
        "domain": _spread(dom),
    }
    growth = {
        "gradient": _growth(grad),
        "phi_J": max(_growth(sup_j), _growth(int_j)),
        "domain": _growth(dom),
    }
    passed = all(g <= bound for g in growth.values())
    step = max((_spread(pair) for pair in zip(dom_eps, dom_eps[1:])), default=1.0)
    return PenaltyBoundsReport(grad, sup_j, int_j, dom, dom_eps, spreads, growth,
                               bound, passed, step)


@dataclass
class CauchyReport:
    slope: float
    intercept: float
    monotone: bool
    trivial: bool
    band: tuple
    passed: bool


def cauchy_check(limit: LimitTriple, band=(0.7, 1.5), n_se=3.0) -> CauchyReport:
    """Fit ``log dist_Y = slope * log(eps + delta) + c`` over the Cauchy table.

    Passes when the slope lies in ``band`` and ``dist_Y`` is nonincreasing
    along the schedule up to ``n_se`` standard errors.
    """
    table = limit.cauchy_table
    if len(table) < 4:
        raise InvalidArgumentError("Cauchy table needs at least 4 entries")
    d = np.array([e.dist_Y for e in table])
    se = np.array([e.se_Y for e in table])
    if np.all(d == 0):
        return CauchyReport(math.nan, math.nan, True, True, band, True)
    monotone = bool(np.all(d[1:] <= d[:-1] + n_se * np.hypot(se[1:], se[:-1])))
    if np.any(d <= 0):
        return CauchyReport(math.nan, math.nan, monotone, False, band, False)
    x = np.log([e.eps + e.delta for e in table])
    slope, icpt = np.polyfit(x, np.log(d), 1)
    ok = band[0] <= slope <= band[1] and monotone
    return CauchyReport(float(slope), float(icpt), monotone, False, band, bool(ok))


@dataclass
class SubgradientReport:
    violation_rate: float
    worst_violation: float
    interior_gradient: float   # max |U| where J_eps(Y) is strictly interior
    monotonicity_min: float | None = None
    y0_difference: float | None = None
    y0_tolerance: float | None = None
    passed: bool = True


def subgradient_check(limit: LimitTriple, phi: ConvexSpec, other: LimitTriple = None,
                      *, rng=None, n_witnesses=8, tol=1e-8, n_se=3.0,
                       interior_c=10.0) -> SubgradientReport:
    """Sampled check that ``(J_eps Y, U)`` lies in the graph of ``d phi``.

    (a) the subgradient inequality
    ``phi(w) >= phi(J Y) + <U, w - J Y> - tol * scale`` at random witnesses
    ``w`` per path and step; (b) when ``other`` (an independently seeded
    solution of the same problem) is given, ``<Y1 - Y2, U1 - U2> >= -tol``
    at every path/step and ``|E Y0^1 - E Y0^2|`` within ``n_se`` combined
    standard errors. For indicators, ``|U|`` at points where ``J_eps Y`` is
    strictly interior must stay below ``interior_c * eps``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    sol = limit.solution
    eps = limit.eps
    y = limit.Y[:, :-1]
    u = limit.U
    j = resolvent(phi, eps, y)
    scale = 1.0 + np.abs(j).max(axis=-1, keepdims=True)
    w = j + rng.standard_normal((n_witnesses,) + j.shape) * scale
    half = n_witnesses // 2
    w[:half] = resolvent(phi, 1.0, w[:half])
    phi_w = phi.value(w)
    phi_j = phi.value(j)
    lin = np.sum(u * (w - j), axis=-1)
    slack = tol * (1.0 + np.abs(phi_j) + np.linalg.norm(u, axis=-1)
                   * np.linalg.norm(w - j, axis=-1))
    with np.errstate(invalid="ignore"):
        gap = np.where(np.isinf(phi_w), np.inf, phi_w - phi_j - lin + slack)
    rate = float(np.mean(gap < 0))
    worst = float(np.min(gap))

    # interior points of the domain carry a zero subgradient for indicators
    interior = 0.0
    if phi.is_indicator():
        # fixed probe length, well above the membership tolerance
        direction = rng.standard_normal(j.shape)
        direction /= np.maximum(np.linalg.norm(direction, axis=-1, keepdims=True), 1e-300)
        probe = 1e-6 * scale * direction
        inner = np.isfinite(phi.value(j + probe)) & np.isfinite(phi.value(j - probe))
        if np.any(inner):
            interior = float(np.max(np.abs(u[inner])))
    report = SubgradientReport(rate, worst, interior)
    report.passed = rate == 0.0 and interior <= interior_c * eps

    if other is not None:
        dy = limit.Y[:, :-1] - other.Y[:, :-1]
        du = limit.U - other.U
        mono = float(np.min(np.sum(dy * du, axis=-1)))
        m1, s1 = sol.y0_estimate()
        m2, s2 = other.solution.y0_estimate()
        diff = float(np.max(np.abs(m1 - m2)))
        tol_y0 = float(n_se * np.max(np.hypot(s1, s2)))
        report.monotonicity_min = mono
        report.y0_difference = diff
        report.y0_tolerance = tol_y0
        report.passed = report.passed and mono >= -tol and diff <= tol_y0
    return report


def export_schedule_csv(runs, limit: LimitTriple, path) -> None:
    """One row per eps: ``eps, M1, M2, supY, H2Z, H2U, domain_distance_over_eps,
    cauchy_distance`` (the last column pairs ``eps`` with the next eps and is
    blank on the final row)."""
    cauchy = {e.eps: e.dist_Y for e in limit.cauchy_table}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "M1", "M2", "supY", "H2Z", "H2U",
                    "domain_distance_over_eps", "cauchy_distance"])
        for r in runs:
            d = r.diagnostics
            dd = float(np.max(d["domain_distance_curve"])) / r.eps
            c = cauchy.get(r.eps)
            w.writerow([repr(r.eps), repr(d["M1"]), repr(d["M2"]),
                        repr(d["sup_norm_Y"]), repr(d["H2_norm_Z"]),
                        repr(d["H2_norm_U"]), repr(dd),
                        "" if c is None else repr(c)])
