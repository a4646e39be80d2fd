"""Named building blocks for experiments.

Problems are assembled from three independent registries (generator
coefficients, terminal values, convex penalties) plus an optional delay
measure, so a config file can refer to each piece by id. The built-in
problems below pin one combination each, with grids and weights chosen so
every check in the package can be run by name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..bdsde_engine import Coefficients
from ..delay_kernel import DelayMeasure, Dirac, LebesgueScaled
from ..errors import InvalidArgumentError
from ..prox_core import HalfSquaredNorm, IndicatorHalfSpace, Zero
from ..yosida_scheme import DEFAULT_SCHEDULE

__all__ = [
    "COEFFICIENTS", "TERMINALS", "PENALTIES", "DelaySpec", "ExperimentSpec",
    "BUILTIN", "CHECK_NAMES", "builtin", "build_coefficients", "build_penalty",
    "build_delay", "describe_catalog",
]


# --------------------------------------------------------------------------
# generator coefficients
#
# Each entry maps an id to (description, factory). The factory receives the
# delay measure (or None) and returns Coefficients; delayed entries scale
# their delay constant by the measure's mass.


def _zero(delay):
    return Coefficients(f=lambda t, y, z, yd, zd: 0.0, g=lambda t, y, z, yd, zd: 0.0,
                        terminal=None, name="zero")


def _unit_drift(delay):
    return Coefficients(f=lambda t, y, z, yd, zd: 1.0, g=lambda t, y, z, yd, zd: 0.0,
                        terminal=None, name="unit-drift")


def _linear_backward_noise(delay):
    # f = -0.2 y + 0.1 z,  g = 0.3 y + 0.2
    return Coefficients(
        f=lambda t, y, z, yd, zd: -0.2 * y + 0.1 * z[..., 0],
        g=lambda t, y, z, yd, zd: (0.3 * y + 0.2)[..., None],
        terminal=None, K=math.hypot(0.2, 0.1), R=0.3, name="linear-backward-noise")


def _linear_delay(delay):
    # f = 0.1 y + 0.1 * int y(t+theta) alpha(dtheta),  g = 0.1 y
    if delay is None:
        raise InvalidArgumentError("coefficients 'linear-delay' need a delay measure")
    return Coefficients(
        f=lambda t, y, z, yd, zd: 0.1 * y + 0.1 * yd,
        g=lambda t, y, z, yd, zd: (0.1 * y)[..., None],
        terminal=None, K=0.1, R=0.1, L=0.01 * delay.total_mass(), delayed=True,
        name="linear-delay")


def _obstacle_drift(delay):
    # constant downward drift pushing Y against the constraint
    return Coefficients(f=lambda t, y, z, yd, zd: -0.5, g=lambda t, y, z, yd, zd: 0.5,
                        terminal=None, name="obstacle-drift")


def _mean_reverting(delay):
    return Coefficients(f=lambda t, y, z, yd, zd: -0.5 * y, g=lambda t, y, z, yd, zd: 0.2,
                        terminal=None, K=0.5, name="mean-reverting")


COEFFICIENTS = {
    "zero": ("f = 0, g = 0", _zero),
    "unit-drift": ("f = 1, g = 0", _unit_drift),
    "linear-backward-noise": ("f = -0.2 y + 0.1 z, g = 0.3 y + 0.2", _linear_backward_noise),
    "linear-delay": ("f = 0.1 y + 0.1 y(delayed), g = 0.1 y", _linear_delay),
    "obstacle-drift": ("f = -0.5, g = 0.5", _obstacle_drift),
    "mean-reverting": ("f = -0.5 y, g = 0.2", _mean_reverting),
}

# --------------------------------------------------------------------------
# terminal values, as functions of the full paths W, B of shape (M, N+1, d)

TERMINALS = {
    "one": ("xi = 1", lambda W, B: np.ones((W.shape[0], 1))),
    "brownian": ("xi = W_T", lambda W, B: W[:, -1, :1]),
    "shifted-brownian": ("xi = 1 + W_T", lambda W, B: 1.0 + W[:, -1, :1]),
    "call": ("xi = max(W_T, 0)", lambda W, B: np.maximum(W[:, -1, :1], 0.0)),
}

# --------------------------------------------------------------------------
# convex penalties

PENALTIES = {
    "zero": ("phi = 0", lambda: Zero(1)),
    "nonnegative": ("indicator of [0, inf)", lambda: IndicatorHalfSpace.nonnegative(1)),
    "half-squared-norm": ("phi(u) = |u|^2 / 2", lambda: HalfSquaredNorm(1.0, 1)),
}


@dataclass(frozen=True)
class DelaySpec:
    """``kind`` is ``none``, ``dirac`` (``value`` = lag r) or ``lebesgue``
    (``value`` = density c); the measure lives on ``[-T, 0)``."""

    kind: str = "none"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "dirac", "lebesgue"):
            raise InvalidArgumentError(f"unknown delay kind {self.kind!r}")

    def __str__(self):
        return "none" if self.kind == "none" else f"{self.kind}:{self.value!r}"

    @classmethod
    def parse(cls, text: str) -> "DelaySpec":
        text = text.strip()
        if text == "none":
            return cls()
        kind, sep, val = text.partition(":")
        if not sep:
            raise InvalidArgumentError(
                f"delay must be 'none', 'dirac:<r>' or 'lebesgue:<c>' (got {text!r})")
        try:
            value = float(val)
        except ValueError:
            raise InvalidArgumentError(f"delay parameter {val!r} is not a number") from None
        return cls(kind.strip(), value)


def build_delay(spec: DelaySpec, T: float) -> DelayMeasure | None:
    if spec.kind == "none":
        return None
    if spec.kind == "dirac":
        return Dirac(spec.value, T)
    return LebesgueScaled(spec.value, T)


def build_coefficients(coeff_id: str, terminal_id: str,
                       delay: DelayMeasure | None) -> Coefficients:
    try:
        _, factory = COEFFICIENTS[coeff_id]
    except KeyError:
        raise InvalidArgumentError(f"unknown coefficients id {coeff_id!r}") from None
    try:
        _, terminal = TERMINALS[terminal_id]
    except KeyError:
        raise InvalidArgumentError(f"unknown terminal id {terminal_id!r}") from None
    return replace(factory(delay), terminal=terminal)


def build_penalty(phi_id: str):
    try:
        return PENALTIES[phi_id][1]()
    except KeyError:
        raise InvalidArgumentError(f"unknown phi id {phi_id!r}") from None


# --------------------------------------------------------------------------
# experiment description


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce one run.

    ``mode`` is ``tree`` (exact, needs ``N <= 10``) or ``mc`` (Gaussian
    paths with regression of the given ``degree``). An empty ``schedule``
    means a single unpenalised solve. Checks named in ``skip`` are still
    computed and their values recorded, but do not affect the exit status.
    """

    name: str
    coefficients: str
    terminal: str
    phi: str = "zero"
    delay: DelaySpec = field(default_factory=DelaySpec)
    T: float = 1.0
    N: int = 6
    beta: float = 1.0
    gamma: float = 0.5
    picard_tol: float | None = None
    picard_max: int = 50
    schedule: tuple = DEFAULT_SCHEDULE
    mode: str = "tree"
    paths: int = 10_000
    degree: int = 2
    seed: int = 0
    output: str = "out"
    skip: tuple = ()

    def validate(self) -> "ExperimentSpec":
        """Raise :class:`InvalidArgumentError` on the first problem found.

        The error's ``field`` attribute names the offending field.
        """
        for name, msg in self._problems():
            exc = InvalidArgumentError(msg)
            exc.field = name
            raise exc
        return self

    def _problems(self):
        for key, reg in (("coefficients", COEFFICIENTS), ("terminal", TERMINALS),
                         ("phi", PENALTIES)):
            if getattr(self, key) not in reg:
                yield key, f"unknown {key} id {getattr(self, key)!r}"
        if self.mode not in ("tree", "mc"):
            yield "mode", f"mode must be 'tree' or 'mc' (got {self.mode!r})"
        if not self.T > 0:
            yield "T", "T must be > 0"
        if self.N < 1:
            yield "N", "N must be >= 1"
        if self.mode == "tree" and self.N > 10:
            yield "N", "tree mode requires N <= 10"
        if self.mode == "mc" and self.paths < 2:
            yield "paths", "mc mode needs at least 2 paths"
        if self.degree < 0:
            yield "degree", "degree must be >= 0"
        if self.beta < 0:
            yield "beta", "beta must be >= 0"
        if not self.gamma > 0:
            yield "gamma", "gamma must be > 0"
        if self.picard_max < 1:
            yield "picard_max", "picard_max must be >= 1"
        if self.picard_tol is not None and not self.picard_tol > 0:
            yield "picard_tol", "picard_tol must be > 0"
        s = tuple(self.schedule)
        if any(e <= 0 for e in s) or any(b >= a for a, b in zip(s, s[1:])):
            yield "schedule", "schedule must be strictly decreasing and positive"
        if self.phi != "zero" and not s:
            yield "schedule", "a penalised problem needs a non-empty schedule"
        if self.delay.kind == "dirac" and not 0 < self.delay.value <= self.T:
            yield "delay", "dirac lag must lie in (0, T]"
        if self.delay.kind == "lebesgue" and not self.delay.value > 0:
            yield "delay", "lebesgue density must be > 0"
        unknown = set(self.skip) - set(CHECK_NAMES)
        if unknown:
            yield "skip", f"unknown check name(s) in skip: {sorted(unknown)}"
        if self.coefficients == "linear-delay" and self.delay.kind == "none":
            yield "delay", "coefficients 'linear-delay' need a delay"


CHECK_NAMES = ("apriori_ratio_finite", "picard_converged", "picard_contracts",
               "apriori_uniform", "penalty_bounds", "cauchy", "subgradient")

BUILTIN = {
    "smoke": ExperimentSpec(
        "smoke", "zero", "one", "zero", T=1.0, N=2, schedule=()),
    "deterministic-drift": ExperimentSpec(
        "deterministic-drift", "unit-drift", "brownian", "zero", N=6, schedule=()),
    "backward-noise": ExperimentSpec(
        "backward-noise", "linear-backward-noise", "shifted-brownian", "zero",
        N=6, schedule=()),
    "dirac-delay": ExperimentSpec(
        "dirac-delay", "linear-delay", "shifted-brownian", "zero",
        DelaySpec("dirac", 0.5), N=6, beta=4.0, gamma=1.0, schedule=()),
    "lebesgue-delay": ExperimentSpec(
        "lebesgue-delay", "linear-delay", "shifted-brownian", "zero",
        DelaySpec("lebesgue", 0.5), N=6, beta=4.0, gamma=1.0, schedule=()),
    "reflected": ExperimentSpec(
        "reflected", "obstacle-drift", "call", "nonnegative", T=0.5, N=6),
    "quadratic-penalty": ExperimentSpec(
        "quadratic-penalty", "mean-reverting", "shifted-brownian",
        "half-squared-norm", N=6,
        # a smooth penalty converges like (eps + delta)^2, above the slope band
        skip=("cauchy",)),
}


def builtin(name: str) -> ExperimentSpec:
    try:
        return BUILTIN[name]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown built-in problem {name!r}; known: {', '.join(BUILTIN)}") from None


def describe_catalog() -> str:
    lines = ["problems:"]
    for name, s in BUILTIN.items():
        lines.append(f"  {name:20s} coefficients={s.coefficients} terminal={s.terminal} "
                     f"phi={s.phi} delay={s.delay} T={s.T!r} N={s.N}")
    for title, reg in (("coefficients", COEFFICIENTS), ("terminals", TERMINALS),
                       ("phi", PENALTIES)):
        lines.append(f"{title}:")
        lines += [f"  {k:24s} {desc}" for k, (desc, _) in reg.items()]
    lines.append("delay:\n  none | dirac:<r> | lebesgue:<c>")
    return "\n".join(lines)
