"""fbplab: a numerical laboratory for a free-boundary heat equation
driven by current reservoirs.

Subpackages cover the deterministic side (profiles, Neumann kernels,
barrier dynamics, the moving-edge solver) and the stochastic side
(Brownian particles with teleportation, lattice walkers with
reservoirs, model variants), plus a CLI harness (``fbplab``).
"""

__version__ = "0.1.0"

from .errors import (BracketFailure, ConfigInvalid, EdgeOutOfDomain,
                     FbpLabError, MassMismatch, MassTooSmall, NoConvergence,
                     NonPositiveTime, NotOrdered, UnstableStep,
                     WindowTooSmall)
from .profile import DensityProfile, FluxParams, Grid

__all__ = [
    "DensityProfile", "FluxParams", "Grid", "FbpLabError", "ConfigInvalid",
    "MassTooSmall", "NotOrdered", "MassMismatch", "NonPositiveTime",
    "EdgeOutOfDomain", "UnstableStep", "BracketFailure", "WindowTooSmall",
    "NoConvergence", "__version__",
]
