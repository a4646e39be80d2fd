"""Run one experiment end to end and write its reports.

Outputs, all under ``<output>/<name>/``:

``solution.csv``
    Grid solution (smallest eps when penalised), at most ``max_paths`` paths.
``trace.csv``
    Picard distances of that solve.
``schedule.csv``
    One row per eps (penalised runs only).
``manifest.txt``
    Flat ``key=value`` record of the seed, version, derived constants and
    the outcome of every enabled check.

Every file is a pure function of the spec (seed included) and the package
version, so repeated runs produce identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..bdsde_engine import (Regression, SolverConfig, Tree, apriori_bound_check,
                            contraction_margin, export_solution_csv,
                            export_trace_csv, make_estimator, solve)
from ..delay_kernel import snap_distance
from ..errors import NumericFailureError
from ..noise_grid import TimeGrid, generate
from ..yosida_scheme import (subgradient_check, export_schedule_csv,
                             apriori_uniformity_check, penalty_bounds_check, cauchy_check,
                             run_schedule)
from .catalog import ExperimentSpec, build_coefficients, build_delay, build_penalty

__all__ = ["RunResult", "run_experiment", "EXIT_OK", "EXIT_CHECK_FAILED",
           "EXIT_INVALID", "EXIT_NUMERIC"]

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3


@dataclass
class RunResult:
    status: int
    directory: Path
    checks: dict = field(default_factory=dict)   # name -> bool
    skipped: dict = field(default_factory=dict)  # name -> bool, not gating
    values: dict = field(default_factory=dict)   # manifest entries
    files: list = field(default_factory=list)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.ndarray):
        return ",".join(repr(float(x)) for x in v.ravel())
    return str(v)


def _write_manifest(path, values, checks, skipped, status):
    with open(path, "w", newline="\n") as fh:
        for k, v in values.items():
            fh.write(f"{k}={_fmt(v)}\n")
        for k, ok in checks.items():
            fh.write(f"check.{k}={'pass' if ok else 'fail'}\n")
        for k, ok in skipped.items():
            fh.write(f"check.{k}=skipped ({'pass' if ok else 'fail'})\n")
        fh.write(f"status={status}\n")


def run_experiment(spec: ExperimentSpec, out=None, *, max_paths: int = 1000) -> RunResult:
    """Run ``spec`` and write its reports.

    Parameters
    ----------
    spec : ExperimentSpec
    out : path-like, optional
        Root output directory, overriding ``spec.output``.
    max_paths : int
        Cap on the number of paths written to ``solution.csv``.

    Returns
    -------
    RunResult
        ``status`` follows the exit-code contract: 0 all checks pass, 1 some
        check failed, 3 numeric failure (the manifest then carries the error).
    """
    spec.validate()
    directory = Path(spec.output if out is None else out) / spec.name
    directory.mkdir(parents=True, exist_ok=True)
    res = RunResult(EXIT_OK, directory)
    v = res.values
    v.update(name=spec.name, version=__version__, seed=spec.seed, mode=spec.mode,
             paths=spec.paths if spec.mode == "mc" else 4 ** spec.N,
             coefficients=spec.coefficients, terminal=spec.terminal, phi=spec.phi,
             delay=spec.delay, T=float(spec.T), N=spec.N, beta=float(spec.beta),
             gamma=float(spec.gamma))
    manifest = directory / "manifest.txt"
    try:
        _run(spec, directory, res, max_paths)
    except NumericFailureError as exc:
        v["error"] = str(exc).replace("\n", " ")
        res.status = EXIT_NUMERIC
    for name in spec.skip:
        if name in res.checks:
            res.skipped[name] = res.checks.pop(name)
    if res.status != EXIT_NUMERIC:
        res.status = EXIT_OK if all(res.checks.values()) else EXIT_CHECK_FAILED
    _write_manifest(manifest, v, res.checks, res.skipped, res.status)
    res.files.append(manifest)
    return res


def _run(spec, directory, res, max_paths):
    v, checks = res.values, res.checks
    grid = TimeGrid(spec.T, spec.N)
    delay = build_delay(spec.delay, spec.T)
    coeffs = build_coefficients(spec.coefficients, spec.terminal, delay)
    estimator = Tree() if spec.mode == "tree" else Regression(spec.degree)
    config = SolverConfig(grid, beta=spec.beta, gamma=spec.gamma,
                          picard_tol=spec.picard_tol, picard_max=spec.picard_max,
                          estimator=estimator, delay=delay)
    if spec.mode == "tree":
        ens = generate(grid, mode="tree")
    else:
        ens = generate(grid, M=spec.paths, mode="gaussian", seed=spec.seed)

    diag = contraction_margin(coeffs, config)
    v.update(alpha_tilde=diag.alpha_tilde, K1=diag.K1, K2=diag.K2, K3=diag.K3,
             K4=diag.K4, contraction_feasible=diag.feasible)
    if delay is not None:
        v["delay_snap_distance"] = snap_distance(delay, grid.h, grid.N)
    if diag.best is not None:
        v.update(best_beta=diag.best["beta"], best_gamma=diag.best["gamma"],
                 best_margin=diag.best["margin"])

    if spec.schedule:
        phi = build_penalty(spec.phi)
        limit, runs = run_schedule(coeffs, config, ens, phi, spec.schedule)
        sol, trace = limit.solution, runs[-1].trace
        traces = [r.trace for r in runs]
        v.update(M1=runs[0].diagnostics["M1"], M2=runs[0].diagnostics["M2"],
                 schedule=np.array(spec.schedule))
    else:
        sol, trace = solve(coeffs, config, ens, estimator=make_estimator(config, ens))
        traces = [trace]
        apr = apriori_bound_check(sol, coeffs, config)
        v.update(M1=apr.M1, apriori_ratio=apr.ratio)
        checks["apriori_ratio_finite"] = bool(math.isfinite(apr.ratio))

    mean, se = sol.y0_estimate()
    v.update(y0_mean=np.asarray(mean), y0_se=np.asarray(se),
             picard_iterations=max(t.iterations for t in traces))
    checks["picard_converged"] = all(t.converged for t in traces)
    if coeffs.delayed and diag.feasible:
        checks["picard_contracts"] = all(all(r < 1 for r in t.ratios()) for t in traces)

    if spec.schedule:
        uni = apriori_uniformity_check(runs)
        pen = penalty_bounds_check(runs, phi)
        v.update(apriori_spread=uni.spread,
                 gradient_growth=pen.growth["gradient"], phi_J_growth=pen.growth["phi_J"],
                 domain_growth=pen.growth["domain"], domain_spread=pen.spreads["domain"],
                 domain_step_ratio=pen.domain_step_ratio)
        checks["apriori_uniform"] = uni.passed
        checks["penalty_bounds"] = pen.passed
        if len(limit.cauchy_table) >= 4:
            cau = cauchy_check(limit)
            v.update(cauchy_slope=cau.slope, cauchy_monotone=cau.monotone)
            checks["cauchy"] = cau.passed
        sub = subgradient_check(limit, phi, rng=np.random.default_rng(spec.seed))
        v.update(subgradient_violation_rate=sub.violation_rate,
                 interior_gradient=sub.interior_gradient)
        checks["subgradient"] = sub.passed

    export_solution_csv(sol, directory / "solution.csv", max_paths=max_paths)
    export_trace_csv(trace, directory / "trace.csv")
    res.files += [directory / "solution.csv", directory / "trace.csv"]
    if spec.schedule:
        export_schedule_csv(runs, limit, directory / "schedule.csv")
        res.files.append(directory / "schedule.csv")
