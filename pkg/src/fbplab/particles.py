"""Event-driven N-particle simulator with injection/removal at the edge.

Particles are reflected Brownian motions on the half-line.  At the jumps
of a Poisson clock of intensity j*N the rightmost particle teleports to
the origin — equivalently, a particle is injected at 0 while the current
maximum is removed.  Between clock events the motion is sampled exactly
(the endpoint of reflected Brownian motion over a gap of length g is
|x + sqrt(g) * normal|), so the basic simulator carries no discretization
error.

The coupled-barrier simulator builds, on one shared clock, a lower and an
upper companion system whose sorted configurations sandwich the main one
at every window boundary.  Pairs of companion/main particles are coupled
increasingly: independent until they meet, identical afterwards.  Meeting
times need path resolution, so those couplings (and only those) advance
on substeps; that is the single, documented source of bias.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .profile import DensityProfile, FluxParams, tail_at_nodes, total_mass

log = logging.getLogger(__name__)

_ORDER_TOL = 1e-12


@dataclass(frozen=True)
class ParticleState:
    """Sorted particle positions at a given clock time."""

    positions: np.ndarray
    clock: float

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float)
        if np.any(x < 0):
            raise ValueError("particle positions must be non-negative")
        object.__setattr__(self, "positions", np.sort(x))

    @property
    def n(self) -> int:
        return self.positions.size


@dataclass
class ParticleTrajectory:
    n: int
    states: list
    n_events: int
    seed_key: tuple

    def at(self, t: float) -> ParticleState:
        best = min(self.states, key=lambda s: abs(s.clock - t))
        if abs(best.clock - t) > 1e-9:
            raise KeyError(f"no saved state near t={t}")
        return best


def _rng(seed_key) -> np.random.Generator:
    # counter-based generator so replica streams are independent by key
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed_key)))


def _sample_initial(rho0: DensityProfile, N: int,
                    rng: np.random.Generator) -> np.ndarray:
    """N i.i.d. draws from rho0 normalized, by inverse CDF on the grid."""
    h = rho0.grid.h
    cum = np.concatenate(([0.0], np.cumsum(rho0.values) * h))
    total = cum[-1]
    if not total > 0:
        raise ValueError("initial profile carries no mass")
    q = rng.random(N) * total
    idx = np.searchsorted(cum, q, side="right") - 1
    idx = np.clip(idx, 0, rho0.grid.n - 1)
    frac = (q - cum[idx]) / np.maximum(cum[idx + 1] - cum[idx], 1e-300)
    return (idx + frac) * h


def _reflect_step(x: np.ndarray, dt: float,
                  rng: np.random.Generator) -> np.ndarray:
    return np.abs(x + math.sqrt(dt) * rng.standard_normal(x.size))


def _argmax_last(x: np.ndarray) -> int:
    """Index of the maximum; ties resolved by the largest index."""
    return x.size - 1 - int(np.argmax(x[::-1]))


def simulate_basic(N: int, rho0: DensityProfile, p: FluxParams, T: float,
                   save_times: Sequence[float] = (), seed: int = 0,
                   replica: int = 0) -> ParticleTrajectory:
    """Exact simulation of the teleport-the-maximum particle system."""
    if N < 1:
        raise ValueError("need at least one particle")
    seed_key = (seed, replica)
    rng = _rng(seed_key)
    x = _sample_initial(rho0, N, rng)
    save = sorted(float(s) for s in save_times)
    for s in save:
        if s < 0 or s > T + 1e-12:
            raise ValueError(f"save time {s} outside [0, {T}]")
    states = []
    k_save = 0
    t = 0.0
    if save and save[0] <= 1e-15:
        states.append(ParticleState(x.copy(), 0.0))
        k_save += 1
    rate = p.j * N
    n_events = 0
    while t < T:
        gap = rng.exponential(1.0 / rate) if rate > 0 else math.inf
        t_next = t + gap
        horizon = min(t_next, T)
        while k_save < len(save) and save[k_save] <= horizon + 1e-15:
            s = save[k_save]
            if s > t + 1e-15:
                x = _reflect_step(x, s - t, rng)
                t = s
            states.append(ParticleState(x.copy(), s))
            k_save += 1
        if t_next > T:
            break
        if t_next > t:
            x = _reflect_step(x, t_next - t, rng)
        t = t_next
        x[_argmax_last(x)] = 0.0
        n_events += 1
    return ParticleTrajectory(N, states, n_events, seed_key)


def empirical_tail(state: ParticleState, r) -> np.ndarray:
    """Fraction of particles at position >= r (vectorized in r)."""
    xs = state.positions
    idx = np.searchsorted(xs, np.asarray(r, dtype=float), side="left")
    return (state.n - idx) / state.n


# ---------------------------------------------------------------- barriers

@dataclass
class BarrierWindow:
    """Snapshot of the coupled triple at a window boundary k*delta."""

    t: float
    lower: np.ndarray
    main: np.ndarray
    upper: np.ndarray
    order_lower: bool
    order_upper: bool
    degenerate: bool = False


@dataclass
class BarrierTriple:
    n: int
    delta: float
    windows: list
    n_events: int
    seed_key: tuple

    @property
    def all_ordered(self) -> bool:
        return all(w.order_lower and w.order_upper for w in self.windows)

    @property
    def any_degenerate(self) -> bool:
        return any(w.degenerate for w in self.windows)


def _sorted_leq(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all(np.sort(a) <= np.sort(b) + _ORDER_TOL))


class _CoupledPairs:
    """Main process plus two increasingly-coupled companion arrays.

    lower[i] <= x[i] <= upper[i] pairwise; each unmet pair advances with
    its own noise and is glued to the main path at the first substep where
    the order would flip.  Met pairs and the lower system's extra
    particles (injected during the window) move exactly.
    """

    def __init__(self, x0: np.ndarray, rng: np.random.Generator):
        self.x = x0.copy()
        self.lo = x0.copy()
        self.up = x0.copy()
        self.met_lo = np.ones(x0.size, dtype=bool)
        self.met_up = np.ones(x0.size, dtype=bool)
        self.extras: list = []
        self.rng = rng

    def advance(self, duration: float, substep: float):
        n_sub = max(1, int(math.ceil(duration / substep)))
        dt = duration / n_sub
        for _ in range(n_sub):
            self._substep(dt)

    def _substep(self, dt: float):
        rng = self.rng
        sq = math.sqrt(dt)
        n = self.x.size
        x_new = np.abs(self.x + sq * rng.standard_normal(n))
        lo_new = np.where(self.met_lo, x_new,
                          np.abs(self.lo + sq * rng.standard_normal(n)))
        cross = ~self.met_lo & (lo_new >= x_new)
        lo_new[cross] = x_new[cross]
        self.met_lo |= cross
        up_new = np.where(self.met_up, x_new,
                          np.abs(self.up + sq * rng.standard_normal(n)))
        cross = ~self.met_up & (up_new <= x_new)
        up_new[cross] = x_new[cross]
        self.met_up |= cross
        self.x, self.lo, self.up = x_new, lo_new, up_new
        if self.extras:
            ex = np.abs(np.asarray(self.extras)
                        + sq * rng.standard_normal(len(self.extras)))
            self.extras = list(ex)


def simulate_barriers(N: int, rho0: DensityProfile, p: FluxParams,
                      delta: float, K: int, substep: Optional[float] = None,
                      seed: int = 0, replica: int = 0) -> BarrierTriple:
    """Run the main system with its coupled lower/upper barrier companions.

    Lower companion: clock events inject a fresh particle at the origin
    (label beyond N) while the paired particle of the teleported label
    moves to 0; at each window end the rightmost N-excess particles are
    removed, broken pairs inheriting the earliest surviving extra.

    Upper companion: at each window start the particles destined to be
    removed (as many as the window will see clock events, taken rightmost)
    are painted red but kept as fictitious partners; each clock event
    turns one red blue again, handing the teleported pair's old partner
    position to the rightmost red.  If a window sees >= N events the
    upper system is undefined; the window is flagged degenerate and the
    red repainting is simply capped.
    """
    if N < 1 or K < 1 or delta <= 0:
        raise ValueError("need N >= 1, K >= 1, delta > 0")
    if substep is None:
        substep = delta / 32.0
    seed_key = (seed, replica)
    rng = _rng(seed_key)
    sys = _CoupledPairs(_sample_initial(rho0, N, rng), rng)
    rate = p.j * N
    windows = []
    n_events_total = 0
    for k in range(K):
        t0 = k * delta
        m = rng.poisson(rate * delta) if rate > 0 else 0
        ev = np.sort(rng.random(m)) * delta + t0
        n_events_total += m
        degenerate = m >= N
        n_red = min(m, N - 1) if degenerate else m
        # paint the n_red rightmost upper particles red (ties: largest index)
        color_red = np.zeros(N, dtype=bool)
        if n_red > 0:
            order = np.argsort(sys.up, kind="stable")
            color_red[order[N - n_red:]] = True
        t_cur = t0
        for t_e in ev:
            if t_e > t_cur:
                sys.advance(t_e - t_cur, substep)
                t_cur = t_e
            i = _argmax_last(sys.x)
            # lower: the displaced partner position survives as an extra
            sys.extras.append(sys.lo[i])
            sys.lo[i] = 0.0
            sys.met_lo[i] = True
            # upper: one red turns blue per event
            reds = np.flatnonzero(color_red)
            if reds.size:
                j_lab = reds[_argmax_last(sys.x[reds])]
                if j_lab != i:
                    sys.up[j_lab] = sys.up[i]
                    sys.met_up[j_lab] = sys.up[j_lab] <= sys.x[j_lab] + _ORDER_TOL
                    if sys.met_up[j_lab]:
                        sys.up[j_lab] = sys.x[j_lab]
                    color_red[j_lab] = False
                else:
                    color_red[i] = False
            sys.up[i] = 0.0
            sys.met_up[i] = True
            sys.x[i] = 0.0
        if (k + 1) * delta > t_cur:
            sys.advance((k + 1) * delta - t_cur, substep)
        # lower window end: drop the m rightmost among paired + extras,
        # broken pairs adopt the earliest surviving extra
        for _ in range(m):
            # each pass consumes exactly one extra, so the list cannot run dry
            top_extra = max(sys.extras)
            i_max = _argmax_last(sys.lo)
            if top_extra >= sys.lo[i_max]:
                sys.extras.remove(top_extra)
                continue
            adopted = sys.extras.pop(0)
            sys.lo[i_max] = adopted
            sys.met_lo[i_max] = adopted >= sys.x[i_max] - _ORDER_TOL
            if sys.met_lo[i_max]:
                sys.lo[i_max] = sys.x[i_max]
        assert not sys.extras
        windows.append(BarrierWindow(
            (k + 1) * delta,
            np.sort(sys.lo), np.sort(sys.x), np.sort(sys.up),
            _sorted_leq(sys.lo, sys.x), _sorted_leq(sys.x, sys.up),
            degenerate))
        if degenerate:
            log.warning("window %d degenerate: %d events >= N=%d", k, m, N)
    return BarrierTriple(N, delta, windows, n_events_total, seed_key)


# ---------------------------------------------------------------- seminorm

@dataclass(frozen=True)
class PartitionSeminorm:
    """Uniform partition of [0, r_max] into cells of length n**(-beta)."""

    n: int
    beta: float
    r_max: float

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.n < 1 or self.r_max <= 0:
            raise ValueError("need n >= 1 and r_max > 0")

    @property
    def cell_length(self) -> float:
        return self.n ** (-self.beta)

    @property
    def edges(self) -> np.ndarray:
        k = int(math.ceil(self.r_max / self.cell_length))
        return self.cell_length * np.arange(k + 1)


def counting_cells(positions: np.ndarray, part: PartitionSeminorm) -> np.ndarray:
    e = part.edges
    counts, _ = np.histogram(np.minimum(positions, e[-1] - 1e-15), bins=e)
    return counts.astype(float)


def profile_cells(u: DensityProfile, part: PartitionSeminorm) -> np.ndarray:
    """Per-cell mass of a density profile (mass measure used as-is)."""
    h = u.grid.h
    cum = np.concatenate(([0.0], np.cumsum(u.values) * h))
    r = np.minimum(part.edges, u.grid.r_max)
    at = np.interp(r, h * np.arange(u.grid.n + 1), cum)
    out = np.diff(at)
    out[-1] += cum[-1] - at[-1]      # overflow mass folded into the last cell
    return out


def seminorm_cells(mu_cells: np.ndarray, nu_cells: np.ndarray) -> float:
    m = np.floor(np.minimum(mu_cells, nu_cells))
    m = np.maximum(m, 0.0)
    return float(np.sum(mu_cells - m) + np.sum(nu_cells - m))


def seminorm(mu, nu, part: PartitionSeminorm) -> float:
    """Partition seminorm between a particle configuration and a mass measure.

    mu: ParticleState or position array (counting measure); nu: a
    DensityProfile taken at face value (scale it to particle units first).
    """
    pos = mu.positions if isinstance(mu, ParticleState) else np.asarray(mu)
    mu_cells = counting_cells(pos, part)
    nu_cells = nu if isinstance(nu, np.ndarray) else profile_cells(nu, part)
    if mu_cells.size != nu_cells.size:
        raise ValueError("cell arrays disagree; use the same partition")
    return seminorm_cells(mu_cells, nu_cells)


# ------------------------------------------------------------- hydro check

@dataclass
class HydroReport:
    t: float
    tol: float
    sup_distances: np.ndarray
    median: float
    q90: float
    pass_fraction: float

    def passed(self, quantile: float = 0.95) -> bool:
        return self.pass_fraction >= quantile


def hydro_check(trajectories, rho0: DensityProfile, t: float, tol: float,
                p: Optional[FluxParams] = None,
                reference: Optional[DensityProfile] = None) -> HydroReport:
    """Compare empirical tails at time t against the continuum evolution.

    reference defaults to the dyadically refined barrier midpoint of rho0
    at time t (computed once and shared across replicas).
    """
    if reference is None:
        from .barriers import BarrierConfig, separating_element
        cfg = BarrierConfig(t, p=p if p is not None else FluxParams())
        reference = separating_element(rho0, t, min(tol / 4, 5e-3), cfg).profile
    mass = total_mass(rho0)
    nodes = reference.grid.nodes
    ref_tail = tail_at_nodes(reference) / mass
    if not isinstance(trajectories, (list, tuple)):
        trajectories = [trajectories]
    sups = np.empty(len(trajectories))
    for k, traj in enumerate(trajectories):
        emp = empirical_tail(traj.at(t), nodes)
        sups[k] = np.max(np.abs(emp - ref_tail))
    return HydroReport(t, tol, sups, float(np.median(sups)),
                       float(np.quantile(sups, 0.9)),
                       float(np.mean(sups <= tol)))
