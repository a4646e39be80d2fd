"""Yosida penalisation for backward doubly stochastic equations with delay.

Modules
-------
prox_core
    Resolvents, Moreau envelopes and Yosida gradients of convex penalties.
delay_kernel
    Delay measures and the delayed functionals of grid processes.
noise_grid
    Time grids, Brownian ensembles (Gaussian or exact tree) and integrals.
bdsde_engine
    Backward recursion with Picard iteration over the delayed terms.
yosida_scheme
    Penalisation along an eps-schedule and its empirical checks.
experiment
    Problem catalog, config files, report writing and property suites.
"""

__version__ = "0.1.0"

from .errors import (BDSDEError, DataAssumptionError, InvalidArgumentError,
                     NumericFailureError)

__all__ = ["__version__", "BDSDEError", "DataAssumptionError",
           "InvalidArgumentError", "NumericFailureError"]
