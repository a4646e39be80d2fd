"""Seeded invariant suites, one per module.

Each check yields a :class:`CheckResult` with a signed margin: non-negative
means the invariant held, and its size is the slack left. The same seed
always produces the same report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import bdsde_engine as eng
from .. import delay_kernel as dk
from .. import noise_grid as ng
from .. import prox_core as pc
from .. import yosida_scheme as ys
from ..errors import InvalidArgumentError
from .catalog import build_coefficients, build_delay, build_penalty, builtin

__all__ = ["CheckResult", "SuiteReport", "SELECTORS", "run_property_suite"]


@dataclass
class CheckResult:
    module: str
    name: str
    margin: float
    passed: bool

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.module:7s} {self.name:48s} margin={self.margin:.3e}"


@dataclass
class SuiteReport:
    selector: str
    seed: int
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def text(self):
        lines = [c.line() for c in self.checks]
        n_fail = sum(not c.passed for c in self.checks)
        lines.append(f"{len(self.checks)} checks, {n_fail} failed "
                     f"(selector={self.selector}, seed={self.seed})")
        return "\n".join(lines)


def _check(module, name, margin, tol=0.0):
    margin = float(margin)
    return CheckResult(module, name, margin, bool(margin >= -tol))


# --------------------------------------------------------------------------


def prox_suite(rng, n=1000):
    """The six structural properties for every catalog kind, ``n`` tuples each."""
    out = []
    for dim in (1, 3):
        for kind, phi in pc.standard_catalog(dim).items():
            u = rng.normal(scale=2.0, size=(n, dim))
            v = rng.normal(scale=2.0, size=(n, dim))
            eps = np.exp(rng.uniform(np.log(1e-3), np.log(10.0), n))
            delta = np.exp(rng.uniform(np.log(1e-3), np.log(10.0), n))
            rep = pc.yosida_properties_check(phi, eps, delta, u, v, rng=rng)
            for item, r in rep.items.items():
                out.append(CheckResult("prox", f"{kind}[dim={dim}] item {item}",
                                       r.margin, r.passed))
    return out


def delay_suite(rng, n_paths=200):
    out = []
    T, N = 1.0, 20
    h = T / N
    measures = {
        "dirac": dk.Dirac(0.35, T),
        "lebesgue": dk.LebesgueScaled(0.7, T),
        "atoms": dk.Atoms((-0.1, -0.45, -0.9), (0.5, 0.2, 1.0), T),
    }
    for name, alpha in measures.items():
        for beta in (0.0, 1.0, 3.0):
            worst = math.inf
            for _ in range(n_paths):
                x = rng.normal(size=(N + 1, 2)) * rng.exponential()
                worst = min(worst, dk.change_of_order_check(alpha, beta, x, h).margin)
            out.append(_check("delay", f"change of order {name} beta={beta}", worst, 1e-9))
    # closed-form exponential moment against fine-grid quadrature
    for name, alpha in measures.items():
        for beta in (0.0, 2.0):
            exact = dk.alpha_tilde(alpha, beta)
            n_fine = 4000
            approx = dk.grid_alpha_tilde(alpha, beta, T / n_fine, n_fine)
            if name == "dirac":
                approx = dk.grid_alpha_tilde(alpha, beta, 0.05, 20)  # r on the grid
            out.append(_check("delay", f"alpha_tilde quadrature {name} beta={beta}",
                              1e-3 - abs(approx - exact) / (1 + abs(exact))))
    return out


def noise_suite(rng):
    out = []
    seed = int(rng.integers(2**31))
    grid = ng.TimeGrid(1.0, 5)
    tree = ng.generate(grid, mode="tree")
    h = grid.h
    out.append(_check("noise", "tree E[dW] = 0",
                      -np.max(np.abs(tree.expectation(tree.dW))), 1e-14))
    out.append(_check("noise", "tree E[dW^2] = h",
                      -np.max(np.abs(tree.expectation(tree.dW ** 2) - h)), 1e-14))
    # Ito isometry for an adapted integrand
    Z = np.tanh(tree.W()[:, :-1])
    lhs = tree.expectation(ng.forward_integral(Z, tree) ** 2)
    rhs = tree.expectation(np.sum(Z ** 2 * h, axis=1))
    out.append(_check("noise", "tree Ito isometry", -np.max(np.abs(lhs - rhs)), 1e-13))
    # backward integrand read at the right endpoint has zero mean
    B = tree.B()
    G = np.cos(B[:, -1:] - B)
    out.append(_check("noise", "tree E[backward integral] = 0",
                      -np.max(np.abs(tree.expectation(ng.backward_integral(G, tree)))), 1e-14))

    a = ng.generate(grid, M=20_000, seed=seed)
    b = ng.generate(grid, M=20_000, seed=seed)
    out.append(_check("noise", "gaussian reproducible from seed",
                      0.0 if np.array_equal(a.dW, b.dW) and np.array_equal(a.dB, b.dB) else -1.0))
    n = a.dW.size
    se = h * math.sqrt(2.0 / n)
    for nm, x in (("dW", a.dW), ("dB", a.dB)):
        out.append(_check("noise", f"gaussian var({nm}) within 5 SE",
                          5 * se - abs(float(np.mean(x * x)) - h)))
    corr = float(np.mean(a.dW * a.dB)) / h
    out.append(_check("noise", "gaussian W, B uncorrelated within 5 SE",
                      5 / math.sqrt(n) - abs(corr)))
    return out


def engine_suite(rng):
    out = []
    c = float(rng.uniform(-1, 1))
    grid = ng.TimeGrid(1.0, 6)
    ens = ng.generate(grid, mode="tree")
    cfg = eng.SolverConfig(grid)
    t = grid.times

    def co(f, g, term):
        return eng.Coefficients(f=f, g=g, terminal=term)

    sol, _ = eng.solve(co(lambda *a: 0.0, lambda *a: 0.0, lambda W, B: 1.0 + c), cfg, ens)
    err = max(np.max(np.abs(sol.Y - (1.0 + c))), np.max(np.abs(sol.Z)))
    out.append(_check("engine", "constant terminal is exact", -err))

    sol, _ = eng.solve(co(lambda *a: 1.0, lambda *a: 0.0, lambda W, B: c), cfg, ens)
    err = np.max(np.abs(sol.Y[..., 0] - (c + (1.0 - t))))
    out.append(_check("engine", "unit drift adds remaining time", 1e-12 - err))

    sol, _ = eng.solve(co(lambda *a: 0.0, lambda *a: c, lambda W, B: 0.0), cfg, ens)
    B = ens.B()[..., 0]
    err = np.max(np.abs(sol.Y[..., 0] - c * (B[:, -1:] - B)))
    out.append(_check("engine", "constant backward noise is pathwise", 1e-12 - err))

    # martingale property with f = g = 0
    sol, _ = eng.solve(co(lambda *a: 0.0, lambda *a: 0.0,
                          lambda W, B: np.sin(W[:, -1]) + W[:, -1] ** 2), cfg, ens)
    est = eng.TreeEstimator(ens)
    err = max(np.max(np.abs(sol.Y[:, i] - est.cond_exp(i, sol.Y[:, i + 1])))
              for i in range(grid.N))
    out.append(_check("engine", "martingale property", 1e-13 - err))

    spec = builtin("backward-noise")
    coeffs = build_coefficients(spec.coefficients, spec.terminal, None)
    sol, _ = eng.solve(coeffs, cfg, ens)
    viol = max(max(est.adaptedness_violation(i, sol.Y[:, i]),
                   est.adaptedness_violation(i, sol.Z[:, i])) for i in range(grid.N))
    out.append(_check("engine", "tree adaptedness of (Y, Z)", 1e-13 - viol))

    spec = builtin("dirac-delay")
    delay = build_delay(spec.delay, spec.T)
    coeffs = build_coefficients(spec.coefficients, spec.terminal, delay)
    cfg = eng.SolverConfig(ng.TimeGrid(spec.T, spec.N), beta=spec.beta,
                           gamma=spec.gamma, delay=delay)
    diag = eng.contraction_margin(coeffs, cfg)
    out.append(_check("engine", "contraction constants positive", diag.margin))
    dens = ng.generate(cfg.grid, mode="tree")
    _, trace = eng.solve(coeffs, cfg, dens)
    ratios = trace.ratios()
    worst = max(ratios) if ratios else 0.0
    out.append(_check("engine", "Picard distances contract", 1.0 - worst))
    out.append(_check("engine", "Picard converged", 0.0 if trace.converged else -1.0))
    return out


def yosida_suite(rng):
    out = []
    spec = builtin("reflected")
    coeffs = build_coefficients(spec.coefficients, spec.terminal, None)
    phi = build_penalty(spec.phi)
    grid = ng.TimeGrid(spec.T, spec.N)
    ens = ng.generate(grid, mode="tree")
    cfg = eng.SolverConfig(grid, beta=spec.beta, gamma=spec.gamma)
    limit, runs = ys.run_schedule(coeffs, cfg, ens, phi, spec.schedule)

    err = max(np.max(np.abs(r.solution.U - pc.yosida_gradient(phi, r.eps, r.solution.Y[:, :-1])))
              for r in runs)
    out.append(_check("yosida", "U equals the Yosida gradient of Y", -err))
    envs = min(r.diagnostics["envelope_integral"] for r in runs)
    out.append(_check("yosida", "envelope integral nonnegative", envs))
    pj = min(float(np.min(r.diagnostics["phi_J_curve"])) for r in runs)
    out.append(_check("yosida", "E phi(J Y) nonnegative", pj))

    plain, _ = eng.solve(coeffs, cfg, ens)
    _, zero_runs = ys.run_schedule(coeffs, cfg, ens, pc.Zero(1), spec.schedule[:2])
    same = all(np.array_equal(r.solution.Y, plain.Y) and np.array_equal(r.solution.Z, plain.Z)
               for r in zero_runs)
    out.append(_check("yosida", "zero penalty reduces to the plain solve", 0.0 if same else -1.0))

    uni = ys.apriori_uniformity_check(runs)
    out.append(_check("yosida", "a priori ratio spread <= 10", uni.bound - uni.spread))
    pen = ys.penalty_bounds_check(runs, phi)
    for key, g in pen.growth.items():
        out.append(_check("yosida", f"penalty bound growth ({key}) <= 10", pen.bound - g))
    cau = ys.cauchy_check(limit)
    lo, hi = cau.band
    out.append(_check("yosida", "Cauchy slope in band",
                      min(cau.slope - lo, hi - cau.slope)))
    out.append(_check("yosida", "Cauchy distances nonincreasing", 0.0 if cau.monotone else -1.0))
    sub = ys.subgradient_check(limit, phi, rng=rng)
    out.append(_check("yosida", "subgradient inequality at witnesses", -sub.violation_rate))
    out.append(_check("yosida", "zero gradient at interior points",
                      10 * limit.eps - sub.interior_gradient))
    return out


SELECTORS = {
    "prox": prox_suite,
    "delay": delay_suite,
    "noise": noise_suite,
    "engine": engine_suite,
    "yosida": yosida_suite,
}


def run_property_suite(selector: str, seed: int = 0) -> SuiteReport:
    """Run the invariant suite(s) named by ``selector`` (a module or ``all``)."""
    if selector == "all":
        names = list(SELECTORS)
    elif selector in SELECTORS:
        names = [selector]
    else:
        raise InvalidArgumentError(
            f"unknown selector {selector!r}; choose from {', '.join(SELECTORS)}, all")
    report = SuiteReport(selector, seed)
    ss = np.random.SeedSequence(seed)
    for name, child in zip(SELECTORS, ss.spawn(len(SELECTORS))):
        if name in names:
            report.checks += SELECTORS[name](np.random.default_rng(child))
    return report
