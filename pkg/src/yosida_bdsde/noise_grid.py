"""Time grid, Brownian drivers ``W`` and ``B``, and discrete stochastic integrals.

Two ensemble modes are supported:

``gaussian``
    ``M`` i.i.d. paths with ``N(0, h)`` increments drawn from two Philox
    streams spawned from one seed, one stream per driver.
``tree``
    Exact enumeration for ``d = 1``: each of the ``2N`` increments
    ``dW_0..dW_{N-1}, dB_0..dB_{N-1}`` is ``+-sqrt(h)``, giving ``4^N``
    equally weighted scenarios. Scenario ``s`` reshaped to ``(2,)*2N`` in
    C order has the ``W`` signs on the first ``N`` axes and the ``B`` signs
    on the last ``N``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NumericFailureError

__all__ = [
    "TimeGrid", "PathEnsemble", "generate", "forward_integral",
    "backward_integral", "export_ensemble_csv", "TREE_MAX_STEPS",
]

TREE_MAX_STEPS = 10


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise InvalidArgumentError("horizon T must be > 0")
        if int(self.N) != self.N or self.N < 1:
            raise InvalidArgumentError("N must be a positive integer")

    @property
    def h(self):
        return self.T / self.N

    @property
    def times(self):
        return np.arange(self.N + 1) * self.h


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Increments of ``W`` and ``B`` on a grid, one row per path/scenario.

    Attributes
    ----------
    dW, dB : ndarray, shape (M, N, d)
    weights : ndarray, shape (M,)
        Probability weights (uniform in both modes).
    """

    grid: TimeGrid
    dW: np.ndarray
    dB: np.ndarray
    mode: str
    seed: int | None = None
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.dW.shape != self.dB.shape or self.dW.ndim != 3:
            raise InvalidArgumentError("dW and dB must both have shape (M, N, d)")
        if self.dW.shape[1] != self.grid.N:
            raise InvalidArgumentError("increment count does not match the grid")
        if self.weights is None:
            m = self.dW.shape[0]
            object.__setattr__(self, "weights", np.full(m, 1.0 / m))

    @property
    def M(self):
        return self.dW.shape[0]

    @property
    def d(self):
        return self.dW.shape[2]

    @property
    def is_tree(self):
        return self.mode == "tree"

    def W(self):
        """Path values ``W(t_0..t_N)``, shape ``(M, N+1, d)``."""
        return _cumulate(self.dW)

    def B(self):
        return _cumulate(self.dB)

    def expectation(self, x):
        """Weighted mean over the path axis (axis 0)."""
        x = np.asarray(x, dtype=float)
        return np.tensordot(self.weights, x, axes=(0, 0))

    def standard_error(self, x):
        """Monte Carlo standard error of :meth:`expectation`; 0 on a tree."""
        if self.is_tree:
            return np.zeros(np.shape(x)[1:]) if np.ndim(x) > 1 else 0.0
        x = np.asarray(x, dtype=float)
        return x.std(axis=0, ddof=1) / np.sqrt(self.M)


def _cumulate(dx):
    out = np.zeros((dx.shape[0], dx.shape[1] + 1, dx.shape[2]))
    np.cumsum(dx, axis=1, out=out[:, 1:])
    return out


def _tree_increments(n, h):
    total = 2 * n
    bits = (np.arange(4 ** n)[:, None] >> np.arange(total - 1, -1, -1)) & 1
    signs = 1.0 - 2.0 * bits  # bit 0 -> +1, bit 1 -> -1
    inc = signs * np.sqrt(h)
    return inc[:, :n, None], inc[:, n:, None]


def generate(grid: TimeGrid, M: int | None = None, mode: str = "gaussian",
             seed: int | None = 0, d: int = 1) -> PathEnsemble:
    """Build a reproducible ensemble of ``(dW, dB)`` increments.

    Parameters
    ----------
    grid : TimeGrid
    M : int
        Number of paths (ignored in tree mode, where it is ``4^N``).
    mode : {"gaussian", "tree"}
    seed : int
        Seed of the Philox streams; recorded on the ensemble.
    d : int
        Dimension of each Brownian motion.
    """
    if mode == "tree":
        if d != 1:
            raise InvalidArgumentError("tree mode requires d = 1")
        if grid.N > TREE_MAX_STEPS:
            raise InvalidArgumentError(
                f"tree mode requires N <= {TREE_MAX_STEPS} (got {grid.N})")
        dW, dB = _tree_increments(grid.N, grid.h)
        return PathEnsemble(grid, dW, dB, "tree", None)
    if mode != "gaussian":
        raise InvalidArgumentError(f"unknown ensemble mode {mode!r}")
    if M is None or M < 1:
        raise InvalidArgumentError("gaussian mode needs M >= 1 paths")
    if d < 1:
        raise InvalidArgumentError("d must be >= 1")
    ss_w, ss_b = np.random.SeedSequence(seed).spawn(2)
    gen_w = np.random.Generator(np.random.Philox(ss_w))
    gen_b = np.random.Generator(np.random.Philox(ss_b))
    sd = np.sqrt(grid.h)
    dW = gen_w.standard_normal((M, grid.N, d)) * sd
    dB = gen_b.standard_normal((M, grid.N, d)) * sd
    ens = PathEnsemble(grid, dW, dB, "gaussian", seed)
    _validate_variance(ens)
    return ens


def _validate_variance(ens):
    n = ens.dW.size
    if n < 100:
        return
    h = ens.grid.h
    # var(x^2) = 2 h^2 for x ~ N(0, h)
    se = h * np.sqrt(2.0 / n)
    for name, x in (("dW", ens.dW), ("dB", ens.dB)):
        v = float(np.mean(x * x))
        if abs(v - h) > 5 * se:
            raise NumericFailureError(
                f"{name} sample variance {v:.4g} deviates from h={h:.4g} "
                f"by more than 5 standard errors")


def forward_integral(Z, ensemble: PathEnsemble, i: int = 0, j: int | None = None):
    """Ito sum ``sum_{l=i}^{j-1} Z_l dW_l`` (integrand at the left endpoint).

    ``Z`` has shape ``(M, N, d)`` (scalar integral) or ``(M, N, k, d)``.
    """
    j = ensemble.grid.N if j is None else j
    Z = np.asarray(Z, dtype=float)
    dW = ensemble.dW[:, i:j]
    return np.einsum("ml...d,mld->m...", Z[:, i:j], dW)


def backward_integral(G, ensemble: PathEnsemble, i: int = 0, j: int | None = None):
    """Backward Ito sum ``sum_{l=i}^{j-1} G_{l+1} dB_l``.

    ``G`` is indexed by grid time and has shape ``(M, N+1, d)`` or
    ``(M, N+1, k, d)``; the integrand over ``[t_l, t_{l+1}]`` is read at the
    right endpoint.
    """
    j = ensemble.grid.N if j is None else j
    G = np.asarray(G, dtype=float)
    dB = ensemble.dB[:, i:j]
    return np.einsum("ml...d,mld->m...", G[:, i + 1:j + 1], dB)


def export_ensemble_csv(ensemble: PathEnsemble, path) -> None:
    """Write ``path, step, dW_0.., dB_0..`` rows (header, LF endings)."""
    d = ensemble.d
    header = ["path", "step"] + [f"dW_{c}" for c in range(d)] + [f"dB_{c}" for c in range(d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for p in range(ensemble.M):
            for s in range(ensemble.grid.N):
                w.writerow([p, s] + [repr(float(x)) for x in ensemble.dW[p, s]]
                           + [repr(float(x)) for x in ensemble.dB[p, s]])
