"""Free evolution, upper/lower barrier iterations and dyadic refinement.

The upper barrier alternates cut-then-evolve, the lower one
evolve-then-cut; both conserve total mass step by step.  Refining the
step dyadically squeezes the two families onto a single separating
profile, which is the package's notion of the true evolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence, NonPositiveTime
from .green import (HALF_LINE, INTERVAL, KernelSpec, convolve, flux_source,
                    uniform_transfer)
from .profile import (
    DensityProfile,
    FluxParams,
    cut,
    tail_at_nodes,
    total_mass,
)

UPPER = "upper"
LOWER = "lower"


@dataclass(frozen=True)
class BarrierConfig:
    delta: float
    side: str = UPPER
    variant: str = HALF_LINE
    p: FluxParams = field(default_factory=FluxParams)

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.side not in (UPPER, LOWER):
            raise ValueError(f"side must be 'upper' or 'lower', got {self.side!r}")
        if self.variant not in (HALF_LINE, INTERVAL):
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass
class SeparatingResult:
    profile: DensityProfile
    n_levels: int
    gap: float
    levels: list = field(default_factory=list)  # (n, delta, gap_sup, gap_l1, mass)


def _cut_with_info(u: DensityProfile, delta: float, p: FluxParams):
    """Cut plus the sub-cell layout of the crossing cell.

    Returns (profile, (cell, a, b, density)): after the cut, cell i
    really holds uniform density `density` on [a, b] only; a plain
    convolution would smear it over the whole cell, an O(h^2/sqrt(delta))
    error that breaks the dyadic tail monotonicity at the 1e-8 level.
    """
    out = cut(u, delta, p)
    target = p.j * delta
    tails = tail_at_nodes(u)
    i_star = int(np.argmax(tails <= target))
    i_cell = i_star - 1
    a = u.grid.nodes[i_cell]
    dens = u.values[i_cell]
    if dens <= 0.0:
        return out, None
    b = a + out.values[i_cell] * u.grid.h / dens
    return out, (i_cell, float(a), min(float(b), float(a) + u.grid.h), dens)


def free_evolve(u: DensityProfile, delta: float, p: FluxParams,
                cut_info=None) -> DensityProfile:
    """One free-evolution step: Neumann convolution plus boundary injection.

    Adds exactly j*delta of mass (up to the monitored tail loss).  When
    cut_info from _cut_with_info is given, the crossing cell's layer is
    convolved at its true sub-cell position.
    """
    if not delta > 0:
        raise NonPositiveTime(f"delta must be positive, got {delta}")
    spec = KernelSpec(HALF_LINE, delta)
    out = convolve(spec, u)
    if cut_info is not None:
        i_cell, a, b, dens = cut_info
        h = u.grid.h
        corr = (dens * uniform_transfer(delta, a, b, u.grid)
                - u.values[i_cell] * uniform_transfer(delta, a, a + h, u.grid))
        out.values = np.maximum(out.values + corr / h, 0.0)
    out.values = out.values + flux_source(delta, p, u.grid).values
    return out


def _fv_evolve(u: DensityProfile, delta: float) -> DensityProfile:
    """Finite-volume free evolution on [0,1]: pure Neumann convolution."""
    return convolve(KernelSpec(INTERVAL, delta), u)


def _fv_cut(u: DensityProfile, delta: float, p: FluxParams) -> DensityProfile:
    """Finite-volume cut: remove j*delta at the right, lump it at the origin."""
    out = cut(u, delta, p)
    out.values[0] += p.j * delta / u.grid.h
    return out


def barrier_step(u: DensityProfile, cfg: BarrierConfig) -> DensityProfile:
    d, p = cfg.delta, cfg.p
    if cfg.variant == HALF_LINE:
        if cfg.side == UPPER:
            return free_evolve(cut(u, d, p), d, p)
        return cut(free_evolve(u, d, p), d, p)
    if cfg.side == UPPER:
        return _fv_evolve(_fv_cut(u, d, p), d)
    return _fv_cut(_fv_evolve(u, d), d, p)


def barrier_evolve(u: DensityProfile, k: int, cfg: BarrierConfig) -> DensityProfile:
    """k alternating cut/evolve steps in the side's order.

    On the half line the sub-cell position of each cut is threaded into
    the following convolution, keeping the node tails exact.
    """
    out = u
    if cfg.variant != HALF_LINE:
        for _ in range(k):
            out = barrier_step(out, cfg)
        return out
    d, p = cfg.delta, cfg.p
    info = None
    for _ in range(k):
        if cfg.side == UPPER:
            out, info = _cut_with_info(out, d, p)
            out = free_evolve(out, d, p, info)
            info = None
        else:
            out = free_evolve(out, d, p, info)
            out, info = _cut_with_info(out, d, p)
    return out


def finite_volume_barrier(u: DensityProfile, k: int, cfg: BarrierConfig) -> DensityProfile:
    """Part-II barrier on [0,1]: image-summed kernel, injection lumped at 0."""
    if cfg.variant != INTERVAL:
        raise ValueError("finite_volume_barrier requires the interval variant")
    return barrier_evolve(u, k, cfg)


def separating_element(
    u: DensityProfile,
    t: float,
    tol: float,
    cfg: BarrierConfig,
    max_depth: int = 14,
    min_depth: int = 2,
) -> SeparatingResult:
    """Dyadic refinement squeezing upper and lower barriers at time t.

    Doubles the depth until sup_r |F(r;S+) - F(r;S-)| <= tol, returning
    the midpoint profile.  Monotonicity of the tail functions along the
    refinement is asserted (1e-8 slack) as it is exact for the cell
    scheme up to roundoff.
    """
    if not t > 0:
        raise NonPositiveTime("t must be positive")
    mass = total_mass(u)
    # first level with u in U_delta, delta = 2^-n t
    n0 = min_depth
    while cfg.p.j * t / 2**n0 >= mass and n0 < max_depth:
        n0 += 1

    prev_up = prev_lo = None
    levels = []
    result = None
    for n in range(n0, max_depth + 1):
        k = 2**n
        delta = t / k
        upper = barrier_evolve(u, k, BarrierConfig(delta, UPPER, cfg.variant, cfg.p))
        lower = barrier_evolve(u, k, BarrierConfig(delta, LOWER, cfg.variant, cfg.p))
        f_up, f_lo = tail_at_nodes(upper), tail_at_nodes(lower)
        gap_sup = float((f_up - f_lo).max())
        gap_l1 = u.grid.h * float(np.abs(upper.values - lower.values).sum())
        levels.append((n, delta, gap_sup, gap_l1, total_mass(upper)))
        if prev_up is not None:
            if float((f_up - prev_up).max()) > 1e-8:
                raise AssertionError("upper tails failed to decrease with depth")
            if float((prev_lo - f_lo).max()) > 1e-8:
                raise AssertionError("lower tails failed to increase with depth")
        prev_up, prev_lo = f_up, f_lo
        mid = DensityProfile(
            u.grid, 0.5 * (upper.values + lower.values), u.tail_tolerance
        )
        result = SeparatingResult(mid, n, gap_sup, levels)
        if gap_sup <= tol:
            return result
    raise NoConvergence(
        f"gap {result.gap:.3e} above tol {tol:.3e} at depth {max_depth}",
        gap=result.gap,
        n_levels=max_depth,
    )
