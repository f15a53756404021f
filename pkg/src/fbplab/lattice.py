"""Random walkers on {0,...,N} with current reservoirs at the ends.

Each particle attempts a nearest-neighbour jump after an exponential
mean-1 waiting time, left/right with equal probability, attempts leading
outside [0, N] being suppressed.  A reservoir injects a particle at site 0
at rate j/N and removes one from the rightmost occupied site at rate j/N
(suppressed on the empty configuration).  The simulation is exact
event-driven (Gillespie); particles are stored as a position list, which
represents the same occupation-number dynamics while keeping uniform
particle selection O(1).

Total particle count |xi_t| moves only at reservoir events, by +-1 with
equal probability while non-empty: a simple random walk at rate 2j/N,
reflected at 0.  On the N^3 time scale |xi_{N^3 t}|/N approaches a
reflected Brownian motion with variance 2jt, which is the oracle used by
the super-hydrodynamic checks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numba import njit

from .profile import DensityProfile, FluxParams, tail_at_nodes

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LatticeState:
    """Occupation counts on sites 0..N at a given (microscopic) time."""

    xi: np.ndarray
    clock: float

    def __post_init__(self):
        xi = np.asarray(self.xi)
        if np.any(xi < 0):
            raise ValueError("occupation numbers must be non-negative")
        object.__setattr__(self, "xi", xi.astype(np.int64))

    @property
    def total(self) -> int:
        return int(self.xi.sum())

    def rightmost(self) -> int:
        occ = np.flatnonzero(self.xi)
        if occ.size == 0:
            raise ValueError("empty configuration has no rightmost site")
        return int(occ[-1])


@dataclass
class LatticeTrajectory:
    N: int
    snapshots: list
    mass_times: np.ndarray     # reservoir event times
    mass_signs: np.ndarray     # +1 injection / -1 removal
    initial_total: int
    n_bulk_events: int
    seed_key: tuple

    def at(self, t: float) -> LatticeState:
        best = min(self.snapshots, key=lambda s: abs(s.clock - t))
        if abs(best.clock - t) > 1e-6 * max(1.0, t):
            raise KeyError(f"no saved state near t={t}")
        return best


@njit(cache=True)
def _run_kernel(pos, n0, N, jrate, T, save_t, snaps, mass_t, mass_s, seed):
    # pos: position per particle (int64 buffer); returns
    # (status, n_final, n_bulk, n_mass); status -1 signals buffer overflow
    np.random.seed(seed)
    n = n0
    t = 0.0
    k_save = 0
    n_mass = 0
    n_bulk = 0
    while True:
        r_out = jrate if n > 0 else 0.0
        R = n + jrate + r_out
        t_next = t + np.random.exponential(1.0 / R)
        while k_save < save_t.size and save_t[k_save] <= t_next:
            for i in range(n):
                snaps[k_save, pos[i]] += 1
            k_save += 1
        if t_next > T:
            return 0, n, n_bulk, n_mass
        t = t_next
        u = np.random.random() * R
        if u < n:
            i = int(u)
            if np.random.random() < 0.5:
                if pos[i] > 0:
                    pos[i] -= 1
            else:
                if pos[i] < N:
                    pos[i] += 1
            n_bulk += 1
        elif u < n + jrate:
            if n >= pos.size or n_mass >= mass_t.size:
                return -1, n, n_bulk, n_mass
            pos[n] = 0
            n += 1
            mass_t[n_mass] = t
            mass_s[n_mass] = 1
            n_mass += 1
        else:
            # removal targets the rightmost occupied site, by construction
            if n_mass >= mass_t.size:
                return -1, n, n_bulk, n_mass
            bi = 0
            for i in range(n):
                if pos[i] >= pos[bi]:
                    bi = i
            pos[bi] = pos[n - 1]
            n -= 1
            mass_t[n_mass] = t
            mass_s[n_mass] = -1
            n_mass += 1


def _positions_from_counts(xi: np.ndarray, cap: int) -> np.ndarray:
    pos = np.zeros(cap, dtype=np.int64)
    k = 0
    for x, c in enumerate(xi):
        pos[k:k + c] = x
        k += c
    return pos


def simulate_lattice(N: int, xi0: np.ndarray, p: FluxParams, T_micro: float,
                     save_times: Sequence[float] = (), seed: int = 0,
                     replica: int = 0) -> LatticeTrajectory:
    """Exact event-driven run up to microscopic time T_micro."""
    if N < 1:
        raise ValueError("need N >= 1")
    xi0 = np.asarray(xi0, dtype=np.int64)
    if xi0.size != N + 1 or np.any(xi0 < 0):
        raise ValueError("xi0 must hold non-negative counts on sites 0..N")
    n0 = int(xi0.sum())
    seed_key = (seed, replica)
    kseed = int(np.random.SeedSequence(seed_key).generate_state(1)[0])
    save = np.asarray(sorted(float(s) for s in save_times))
    if save.size and (save[0] < 0 or save[-1] > T_micro):
        raise ValueError("save times must lie in [0, T_micro]")
    mean_res = 2.0 * p.j * T_micro / N
    margin = int(10 * math.sqrt(mean_res + 1) + 64)
    for attempt in range(4):
        cap = n0 + int(mean_res) + margin
        cap_ev = int(mean_res) + margin
        pos = _positions_from_counts(xi0, cap)
        snaps = np.zeros((save.size, N + 1), dtype=np.int64)
        mass_t = np.zeros(cap_ev)
        mass_s = np.zeros(cap_ev, dtype=np.int8)
        status, n_fin, n_bulk, n_mass = _run_kernel(
            pos, n0, N, p.j / N, T_micro, save, snaps, mass_t, mass_s, kseed)
        if status == 0:
            break
        margin *= 4
        log.info("lattice buffers overflowed, retrying with margin %d", margin)
    else:
        raise RuntimeError("lattice buffers kept overflowing")
    states = [LatticeState(snaps[k], float(save[k])) for k in range(save.size)]
    return LatticeTrajectory(N, states, mass_t[:n_mass].copy(),
                             mass_s[:n_mass].astype(np.int64), n0,
                             n_bulk, seed_key)


def total_mass_series(traj: LatticeTrajectory):
    """(times, |xi|) series over the reservoir events, including t=0."""
    times = np.concatenate(([0.0], traj.mass_times))
    values = traj.initial_total + np.concatenate(
        ([0], np.cumsum(traj.mass_signs)))
    return times, values


# ----------------------------------------------------- macro <-> micro maps

def xi_from_macro(N: int, rho: DensityProfile) -> np.ndarray:
    """Deterministic occupation numbers approximating N * rho(x/N).

    Cumulative rounding of the macroscopic tail keeps the total within one
    particle of N * mass(rho) and every partial sum within one particle.
    """
    nodes = rho.grid.nodes
    tails = tail_at_nodes(rho)
    r = np.arange(N + 2) / N
    t_at = np.interp(r, nodes, tails, right=0.0)
    c = np.round(N * t_at)
    xi = (c[:-1] - c[1:]).astype(np.int64)
    if np.any(xi < 0):            # rounding can locally invert on flat tails
        xi = np.maximum(xi, 0)
    return xi


def macro_tail(state: LatticeState, N: int, r: np.ndarray) -> np.ndarray:
    """(1/N) * #{particles at sites >= r*N}, the macroscopic tail."""
    from_right = np.concatenate((np.cumsum(state.xi[::-1])[::-1], [0]))
    x = np.ceil(np.asarray(r) * N - 1e-9).astype(np.int64)
    x = np.clip(x, 0, N + 1)
    return from_right[x] / N


def reflected_bm_abs_moment(a: float, var: float) -> float:
    """E|a + sqrt(var) Z| for standard normal Z."""
    if var <= 0:
        return abs(a)
    s = math.sqrt(var)
    return (s * math.sqrt(2.0 / math.pi) * math.exp(-a * a / (2 * var))
            + a * math.erf(a / (s * math.sqrt(2.0))))


def reflected_bm_variance(a: float, var: float) -> float:
    """Variance of |a + sqrt(var) Z| (reflected Brownian endpoint law)."""
    m1 = reflected_bm_abs_moment(a, var)
    return a * a + var - m1 * m1


# ------------------------------------------------------------- experiments

@dataclass
class SuperHydroReport:
    N: int
    M: float
    t: float
    replicas: int
    final_masses: np.ndarray       # |xi_{N^3 t}| / N per replica
    sample_variance: float
    oracle_variance: float
    plus_fraction: float
    n_sign_events: int
    ks_statistic: float
    ks_pvalue: float

    @property
    def variance_rel_error(self) -> float:
        return abs(self.sample_variance - self.oracle_variance) / self.oracle_variance


def superhydro_experiment(N: int, M: float, p: FluxParams, t: float,
                          replicas: int, seed: int = 0,
                          rho0: Optional[DensityProfile] = None) -> SuperHydroReport:
    """Mass law on the N^3 scale: variance vs the reflected-BM oracle,
    +-1 jump frequencies, and a KS test of the reservoir gap times."""
    from .stationary import trapezoid_profile
    from scipy import stats

    if rho0 is None:
        from .profile import Grid
        g = Grid(1.0 / 256, 512)
        rho0 = trapezoid_profile(M, p, g)
    xi0 = xi_from_macro(N, rho0)
    T = (N ** 3) * t
    finals = np.empty(replicas)
    signs = []
    gaps = []
    for r in range(replicas):
        traj = simulate_lattice(N, xi0, p, T, save_times=[T],
                                seed=seed, replica=r)
        finals[r] = traj.at(T).total / N
        signs.append(traj.mass_signs)
        te = np.concatenate(([0.0], traj.mass_times))
        gaps.append(np.diff(te))
    signs = np.concatenate(signs)
    gaps = np.concatenate(gaps)
    ks = stats.kstest(gaps, "expon", args=(0.0, N / (2.0 * p.j)))
    return SuperHydroReport(
        N, M, t, replicas, finals,
        float(np.var(finals, ddof=1)),
        reflected_bm_variance(M, 2.0 * p.j * t),
        float(np.mean(signs > 0)), signs.size,
        float(ks.statistic), float(ks.pvalue))


@dataclass
class ScalingReport:
    regime: str
    N_list: list
    sup_distances: list        # per N: mean over replicas
    measured_masses: list      # per N: mean |xi|/N at measurement time
    details: dict


def scaling_experiment(N_list: Sequence[int], regime: str, M: float,
                       p: FluxParams, seed: int = 0, t: float = 0.05,
                       replicas: int = 4,
                       r_grid: Optional[np.ndarray] = None) -> ScalingReport:
    """Relaxation toward the finite-volume stationary profile.

    subcritical: run to N^2 * lnln(N) and compare the macroscopic tail to
    the stationary tail with the initial mass M (mass has not moved yet).
    critical: run to N^3 * t and compare against the stationary profile
    with the *measured* mass at the final time.
    """
    from .profile import Grid
    from .stationary import trapezoid_profile, trapezoid_tail

    if regime not in ("subcritical", "critical"):
        raise ValueError(f"unknown regime {regime!r}")
    if r_grid is None:
        r_grid = np.linspace(0.0, 1.5, 301)
    g = Grid(1.0 / 256, 512)
    # start away from stationarity: triangle of the same mass
    tri = DensityProfile(g, np.maximum(2.0 * M * (1.0 - g.centers), 0.0))
    sups, masses, per_rep = [], [], {}
    for N in N_list:
        xi0 = xi_from_macro(N, tri)
        if regime == "subcritical":
            T = (N ** 2) * math.log(math.log(max(N, 8)))
        else:
            T = (N ** 3) * t
        ds, ms = [], []
        for r in range(replicas):
            traj = simulate_lattice(N, xi0, p, T, save_times=[T],
                                    seed=seed, replica=r)
            st = traj.at(T)
            m_meas = st.total / N
            ref_mass = M if regime == "subcritical" else m_meas
            ref = trapezoid_tail(r_grid, ref_mass, p)
            ds.append(float(np.max(np.abs(macro_tail(st, N, r_grid) - ref))))
            ms.append(m_meas)
        sups.append(float(np.mean(ds)))
        masses.append(float(np.mean(ms)))
        per_rep[N] = ds
        log.info("scaling %s N=%d sup=%.4f mass=%.4f", regime, N,
                 sups[-1], masses[-1])
    return ScalingReport(regime, list(N_list), sups, masses,
                         {"per_replica": per_rep, "t": t, "M": M})
