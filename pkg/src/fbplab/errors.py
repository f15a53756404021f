"""Exception types shared across the package."""


class FbpLabError(Exception):
    """Base class for all package errors."""


class MassTooSmall(FbpLabError):
    """Cut would remove more mass than the profile owns."""


class NotOrdered(FbpLabError):
    """Transport map requested for an unordered pair of profiles."""


class MassMismatch(FbpLabError):
    """Transport map requested for profiles of different total mass."""


class NonPositiveTime(FbpLabError):
    """Kernel or evolution requested with t <= 0."""


class EdgeOutOfDomain(FbpLabError):
    """Edge trajectory leaves (0, R_max]."""


class UnstableStep(FbpLabError):
    """Time step incompatible with the solver."""


class BracketFailure(FbpLabError):
    """Velocity bisection could not bracket the mass-loss target."""

    def __init__(self, msg, lo=None, hi=None, delta_lo=None, delta_hi=None):
        super().__init__(msg)
        self.lo, self.hi = lo, hi
        self.delta_lo, self.delta_hi = delta_lo, delta_hi


class WindowTooSmall(FbpLabError):
    """Relaxation window t* shorter than two solver steps."""


class NoConvergence(FbpLabError):
    """Dyadic refinement hit max depth with gap above tolerance."""

    def __init__(self, msg, gap=None, n_levels=None):
        super().__init__(msg)
        self.gap = gap
        self.n_levels = n_levels


class ConfigInvalid(FbpLabError):
    """Run configuration failed validation; message names the field."""
