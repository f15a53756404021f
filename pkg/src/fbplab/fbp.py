"""Moving-edge heat solver and the relaxed free-boundary construction.

The dynamics on the fluid region (0, X_t): half-Laplacian heat flow,
constant influx j through the origin (Neumann slope -2j), absorption at
the moving edge (Dirichlet zero at X_t).  A Crank-Nicolson scheme on a
fixed node grid handles the interior; the edge lands between nodes and is
treated with a one-sided cut-cell stencil, so the edge can move freely
without remeshing.

The relaxed construction chops [0, T] into windows of width eps/j and, on
each window, bisects a constant edge velocity until the mass lost through
the edge matches the influx j * (window length).  The resulting edge path
is piecewise linear and the profile dissipates exactly what is injected,
window by window.
"""

from __future__ import annotations

import logging
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .errors import (
    BracketFailure,
    EdgeOutOfDomain,
    MassMismatch,
    NonPositiveTime,
    UnstableStep,
    WindowTooSmall,
)
from .profile import (DensityProfile, FluxParams, Grid, support_radius,
                      total_mass)

log = logging.getLogger(__name__)

_CLIP_FLOOR = -1e-12


@dataclass(frozen=True)
class EdgePath:
    """Piecewise-linear edge trajectory on a uniform time grid."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != x.shape or t.size < 2:
            raise ValueError("edge path needs matching 1-d times/values, >= 2 points")
        if np.any(np.diff(t) <= 0):
            raise ValueError("edge path times must be strictly increasing")
        if np.any(x <= 0):
            raise EdgeOutOfDomain("edge path must stay strictly positive")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", x)

    @classmethod
    def constant(cls, x0: float, t0: float, t1: float) -> "EdgePath":
        return cls(np.array([t0, t1]), np.array([x0, x0]))

    @classmethod
    def from_segments(cls, t0: float, x0: float,
                      durations: Sequence[float],
                      velocities: Sequence[float]) -> "EdgePath":
        ts = [t0]
        xs = [x0]
        for d, v in zip(durations, velocities):
            ts.append(ts[-1] + d)
            xs.append(xs[-1] + v * d)
        return cls(np.array(ts), np.array(xs))

    def at(self, t) -> np.ndarray:
        return np.interp(t, self.times, self.values)

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])


@dataclass
class PdeRun:
    """Output of a moving-edge heat solve.

    times / mass / lam are per-step series (lam = edge flux -rho'(X)/2).
    snapshots maps requested save times to cell-average profiles.
    clipped_mass accumulates whatever tiny negative undershoot was zeroed.
    """

    grid: Grid
    p: FluxParams
    edge: EdgePath
    times: np.ndarray
    mass: np.ndarray
    lam: np.ndarray
    snapshots: dict = field(default_factory=dict)
    clipped_mass: float = 0.0

    def mass_at(self, t) -> np.ndarray:
        return np.interp(t, self.times, self.mass)

    def lam_at(self, t) -> np.ndarray:
        return np.interp(t, self.times, self.lam)

    def mass_loss(self, t1: float, t2: float) -> float:
        """Mass absorbed at the edge over [t1, t2] (balance identity)."""
        if t2 < t1:
            raise NonPositiveTime(f"need t1 <= t2, got [{t1}, {t2}]")
        return float(self.mass_at(t1) - self.mass_at(t2) + self.p.j * (t2 - t1))


def _nodes_from_cells(u: DensityProfile) -> np.ndarray:
    """Node samples on the solver grid (r_i = i*h) from cell averages.

    Interior nodes average the two neighbouring cells; the origin node is
    linearly extrapolated, which is exact for piecewise-linear data.
    """
    v = u.values
    rho = np.empty(u.grid.n + 1)
    rho[1:-1] = 0.5 * (v[:-1] + v[1:])
    rho[0] = max(1.5 * v[0] - 0.5 * v[1], 0.0)
    rho[-1] = max(1.5 * v[-1] - 0.5 * v[-2], 0.0)
    return rho


def _cells_from_nodes(grid: Grid, rho: np.ndarray) -> DensityProfile:
    v = 0.5 * (rho[:-1] + rho[1:])
    return DensityProfile(grid, np.maximum(v, 0.0))


class _MovingHeat:
    """Crank-Nicolson stepper with a cut-cell Dirichlet edge.

    Nodes are r_i = i*h, i = 0..n.  Origin: ghost node rho_{-1} = rho_1 +
    4jh, encoding slope -2j.  Edge X between nodes i* and i*+1: the stencil
    at i* uses the zero value at X itself (Shortley-Weller), nodes at or
    beyond X are held at zero.
    """

    def __init__(self, grid: Grid, p: FluxParams, rho0: np.ndarray):
        self.grid = grid
        self.p = p
        self.rho = np.asarray(rho0, dtype=float).copy()
        if self.rho.shape != (grid.n + 1,):
            raise ValueError("node vector must have n+1 entries")
        self.clipped = 0.0

    def _edge_cell(self, x: float):
        h = self.grid.h
        if not 2 * h < x:
            raise EdgeOutOfDomain(f"edge {x} too close to the origin (h={h})")
        if x > self.grid.r_max - 2 * h:
            raise EdgeOutOfDomain(
                f"edge {x} too close to the outer boundary {self.grid.r_max}")
        i = int(math.floor(x / h))
        theta = x / h - i
        if theta < 1e-9:
            # edge effectively on a node: use a full cell ending one node in
            i -= 1
            theta = 1.0
        return i, theta

    def _apply_operator(self, rho: np.ndarray, x: float) -> np.ndarray:
        """(1/2) d^2/dr^2 with the boundary conditions folded in."""
        h = self.grid.h
        i, theta = self._edge_cell(x)
        out = np.zeros_like(rho)
        out[1:i] = (rho[:i - 1] - 2 * rho[1:i] + rho[2:i + 1]) / (2 * h * h)
        out[0] = (2 * rho[1] - 2 * rho[0] + 4 * self.p.j * h) / (2 * h * h)
        out[i] = (rho[i - 1] / (1 + theta) - rho[i] / theta) / (h * h)
        return out

    def _build_system(self, x: float, dt: float):
        """Banded matrix for (I - dt/4 L) and the constant source vector."""
        n = self.grid.n
        h = self.grid.h
        c = dt / (4 * h * h)                      # (dt/2) * (1/(2h^2))
        i, theta = self._edge_cell(x)
        lower = np.zeros(n + 1)
        diag = np.ones(n + 1)
        upper = np.zeros(n + 1)
        diag[1:i] = 1 + 2 * c
        lower[0:i - 1] = -c
        upper[2:i + 1] = -c
        diag[0] = 1 + 2 * c
        upper[1] = -2 * c
        diag[i] = 1 + 2 * c / theta
        lower[i - 1] = -2 * c / (1 + theta)
        source = np.zeros(n + 1)
        source[0] = self.p.j * dt / h
        ab = np.zeros((3, n + 1))
        ab[0, 1:] = upper[1:]
        ab[1, :] = diag
        ab[2, :-1] = lower[:-1]
        return ab, source, i

    def step(self, t: float, dt: float, edge_at: Callable[[float], float]):
        if not dt > 0 or not math.isfinite(dt):
            raise NonPositiveTime(f"time step must be positive, got {dt}")
        x_mid = float(edge_at(t + 0.5 * dt))
        rhs = self.rho + (0.5 * dt) * self._apply_operator(self.rho, x_mid)
        ab, source, i = self._build_system(x_mid, dt)
        rhs = rhs + source
        rhs[i + 1:] = 0.0
        new = solve_banded((1, 1), ab, rhs)
        new[i + 1:] = 0.0
        if not np.all(np.isfinite(new)):
            raise UnstableStep(f"non-finite values after step at t={t}")
        neg = new < 0
        if np.any(neg):
            undershoot = float(new[neg].sum()) * self.grid.h
            if new.min() < _CLIP_FLOOR:
                self.clipped += -undershoot
            new[neg] = 0.0
        self.rho = new

    def mass(self, x: float) -> float:
        """Trapezoid over active nodes plus the triangle up to the edge."""
        h = self.grid.h
        i, theta = self._edge_cell(x)
        r = self.rho
        m = h * (0.5 * r[0] + r[1:i].sum() + 0.5 * r[i])
        m += 0.5 * theta * h * r[i]
        return float(m)

    def edge_flux(self, x: float) -> float:
        """-rho'(X)/2 from the quadratic through (X, 0) and two nodes."""
        h = self.grid.h
        i, theta = self._edge_cell(x)
        r = self.rho
        drho = r[i - 1] * theta / ((1 + theta) * h) - r[i] * (1 + theta) / (theta * h)
        return -0.5 * drho


def heat_solve_moving(u0: DensityProfile, edge: EdgePath, p: FluxParams,
                      dt: float, save_times: Sequence[float] = ()) -> PdeRun:
    """Run the edge-absorbing heat flow along a prescribed edge path."""
    if not dt > 0:
        raise NonPositiveTime(f"time step must be positive, got {dt}")
    t0, t1 = edge.t0, edge.t1
    n_steps = max(1, int(round((t1 - t0) / dt)))
    dt = (t1 - t0) / n_steps
    stepper = _MovingHeat(u0.grid, p, _nodes_from_cells(u0))

    save = sorted(float(s) for s in save_times)
    for s in save:
        if s < t0 - 1e-12 or s > t1 + 1e-12:
            raise NonPositiveTime(f"save time {s} outside [{t0}, {t1}]")
    snapshots = {}

    times = np.empty(n_steps + 1)
    mass = np.empty(n_steps + 1)
    lam = np.empty(n_steps + 1)
    times[0] = t0
    mass[0] = stepper.mass(float(edge.at(t0)))
    lam[0] = stepper.edge_flux(float(edge.at(t0)))
    k_save = 0
    while k_save < len(save) and save[k_save] <= t0 + 1e-12:
        snapshots[save[k_save]] = _cells_from_nodes(u0.grid, stepper.rho)
        k_save += 1
    for k in range(n_steps):
        t = t0 + k * dt
        stepper.step(t, dt, edge.at)
        t_new = t0 + (k + 1) * dt
        x_new = float(edge.at(t_new))
        times[k + 1] = t_new
        mass[k + 1] = stepper.mass(x_new)
        lam[k + 1] = stepper.edge_flux(x_new)
        while k_save < len(save) and save[k_save] <= t_new + 1e-12:
            snapshots[save[k_save]] = _cells_from_nodes(u0.grid, stepper.rho)
            k_save += 1
    return PdeRun(u0.grid, p, edge, times, mass, lam,
                  snapshots, stepper.clipped)


def mass_loss(u0: DensityProfile, edge: EdgePath, interval, p: FluxParams,
              dt: float = 1e-3) -> float:
    """Edge absorption over a sub-interval of the edge path's time range."""
    t1, t2 = float(interval[0]), float(interval[1])
    run = heat_solve_moving(u0, edge, p, dt)
    return run.mass_loss(t1, t2)


def mc_exit(u0: DensityProfile, edge: EdgePath, interval, p: FluxParams,
            n_paths: int = 20000, dt: float = 2e-4,
            seed: int = 0) -> tuple:
    """Monte-Carlo estimate of the edge absorption over an interval.

    Two independent parts: paths launched from the initial density
    (weighted by its total mass) and paths injected at the origin at a
    uniform random time (weighted by j * horizon).  Each path is a
    reflected random walk absorbed on crossing the edge.  Returns
    (estimate, standard error).
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    t_lo, t_hi = float(interval[0]), float(interval[1])
    t_end = t_hi
    n_steps = int(math.ceil((t_end - edge.t0) / dt))

    def run_batch(x0: np.ndarray, start: np.ndarray) -> np.ndarray:
        """Absorption times (inf if never absorbed by t_end)."""
        x = x0.copy()
        hit = np.full(x.shape, np.inf)
        alive = np.ones(x.shape, dtype=bool)
        sqdt = math.sqrt(dt)
        t = edge.t0
        for _ in range(n_steps):
            t_next = min(t + dt, t_end)
            active = alive & (start <= t + 1e-15)
            if np.any(active):
                x[active] = np.abs(
                    x[active] + sqdt * rng.standard_normal(active.sum()))
                xb = float(edge.at(t_next))
                crossed = active & (x >= xb)
                hit[crossed] = t_next
                alive[crossed] = False
            t = t_next
        return hit

    total = total_mass(u0)
    cum = np.concatenate(([0.0], np.cumsum(u0.values) * u0.grid.h))
    q = rng.random(n_paths) * total
    idx = np.searchsorted(cum, q, side="right") - 1
    idx = np.clip(idx, 0, u0.grid.n - 1)
    frac = (q - cum[idx]) / np.maximum(cum[idx + 1] - cum[idx], 1e-300)
    x_init = (idx + frac) * u0.grid.h
    hit1 = run_batch(x_init, np.full(n_paths, edge.t0))
    ind1 = ((hit1 >= t_lo) & (hit1 <= t_hi)).astype(float)
    est1 = total * ind1.mean()
    var1 = total ** 2 * ind1.var() / n_paths

    if p.j > 0:
        horizon = t_end - edge.t0
        s_in = edge.t0 + horizon * rng.random(n_paths)
        hit2 = run_batch(np.zeros(n_paths), s_in)
        ind2 = ((hit2 >= t_lo) & (hit2 <= t_hi)).astype(float)
        est2 = p.j * horizon * ind2.mean()
        var2 = (p.j * horizon) ** 2 * ind2.var() / n_paths
    else:
        est2, var2 = 0.0, 0.0
    return est1 + est2, math.sqrt(var1 + var2)


@dataclass
class RelaxedSolution:
    """Profile path whose edge dissipates j per unit time, window by window."""

    eps: float
    window: float
    edge: EdgePath
    run: PdeRun
    window_velocities: np.ndarray
    window_masses: np.ndarray

    def profile_at(self, t: float) -> DensityProfile:
        keys = sorted(self.run.snapshots)
        k = bisect_right(keys, t + 1e-12) - 1
        if k < 0:
            raise KeyError(f"no snapshot at or before t={t}")
        return self.run.snapshots[keys[k]]


def relaxed_solve(u0: DensityProfile, T: float, eps: float, p: FluxParams,
                  x0: Optional[float] = None, steps_per_window: int = 64,
                  delta_tol: float = 1e-8, save_times: Sequence[float] = (),
                  max_bisect: int = 60) -> RelaxedSolution:
    """Solve the free-boundary flow up to time T at relaxation scale eps.

    Windows have width eps/j.  On each one the edge moves at a constant
    velocity, found by bisection so the absorbed mass equals j times the
    window width; the absorbed mass is a decreasing function of the
    velocity, with limits that pin it between jump-to-the-origin (absorb
    everything in front) and run-away (absorb nothing).
    """
    if p.j <= 0:
        raise WindowTooSmall("relaxed solve needs a positive flux j")
    if eps <= 0 or T <= 0:
        raise NonPositiveTime(f"need positive eps and T, got {eps}, {T}")
    tw = eps / p.j
    if T < tw - 1e-12:
        raise WindowTooSmall(
            f"horizon {T} shorter than one window eps/j = {tw}")
    n_win = int(round(T / tw))
    if abs(n_win * tw - T) > 1e-9 * max(T, 1.0):
        raise WindowTooSmall(
            f"horizon {T} is not a whole number of windows eps/j = {tw}")
    dt = tw / steps_per_window
    target = p.j * tw

    if x0 is None:
        x0 = support_radius(u0)
        if x0 <= 2 * u0.grid.h:
            raise EdgeOutOfDomain("initial profile has (numerically) empty support")

    grid = u0.grid
    rho = _nodes_from_cells(u0)
    save = sorted(float(s) for s in save_times)

    all_times = [np.array([0.0])]
    all_mass = []
    all_lam = []
    snapshots = {}
    velocities = []
    masses = []
    clipped = 0.0
    edge_x = [x0]
    t_cur = 0.0
    x_cur = x0

    probe0 = _MovingHeat(grid, p, rho)
    all_mass.append(np.array([probe0.mass(x_cur)]))
    all_lam.append(np.array([probe0.edge_flux(x_cur)]))
    k_save = 0
    while k_save < len(save) and save[k_save] <= 1e-12:
        snapshots[save[k_save]] = _cells_from_nodes(grid, rho)
        k_save += 1

    def window_run(v: float):
        """Evolve one window at edge velocity v from the stored state."""
        st = _MovingHeat(grid, p, rho)
        m = np.empty(steps_per_window)
        lm = np.empty(steps_per_window)
        edge_fn = lambda s: x_cur + v * (s - t_cur)
        for k in range(steps_per_window):
            st.step(t_cur + k * dt, dt, edge_fn)
            xk = edge_fn(t_cur + (k + 1) * dt)
            m[k] = st.mass(xk)
            lm[k] = st.edge_flux(xk)
        m0 = all_mass[-1][-1]
        delta = m0 - m[-1] + target
        return st, m, lm, delta

    for w in range(n_win):
        v_star = -x_cur / tw
        eta = 0.01 * x_cur / tw
        v_lo = v_star + eta
        v_hi = 8.0 * math.sqrt(1.0 / tw) * max(1.0, x_cur)
        while x_cur + v_hi * tw > grid.r_max - 2 * grid.h and v_hi > 1e-6:
            v_hi *= 0.5
        try:
            _, _, _, d_lo = window_run(v_lo)
        except EdgeOutOfDomain:
            # edge collapsed below grid resolution: absorbs (essentially)
            # everything, certainly more than one window's worth
            d_lo = math.inf
        st_hi, m_hi, lm_hi, d_hi = window_run(v_hi)
        grow = 0
        while d_hi > target and grow < 12:
            v_hi *= 2.0
            if x_cur + v_hi * tw > grid.r_max - 2 * grid.h:
                break
            st_hi, m_hi, lm_hi, d_hi = window_run(v_hi)
            grow += 1
        if not (d_lo >= target >= d_hi):
            raise BracketFailure(v_lo, v_hi, d_lo, d_hi)
        best = (st_hi, m_hi, lm_hi, d_hi, v_hi)
        lo, hi = v_lo, v_hi
        for _ in range(max_bisect):
            mid = 0.5 * (lo + hi)
            try:
                st_m, m_m, lm_m, d_m = window_run(mid)
            except EdgeOutOfDomain:
                lo = mid
                continue
            if abs(d_m - target) < abs(best[3] - target):
                best = (st_m, m_m, lm_m, d_m, mid)
            if abs(d_m - target) <= delta_tol * max(target, 1e-30):
                break
            if d_m > target:
                lo = mid
            else:
                hi = mid
        st_w, m_w, lm_w, d_w, v_w = best
        if abs(d_w - target) > 1e-4 * max(target, 1e-30):
            raise MassMismatch(
                f"window {w}: absorbed {d_w}, target {target}")
        rho = st_w.rho
        clipped += st_w.clipped
        t_grid = t_cur + dt * np.arange(1, steps_per_window + 1)
        all_times.append(t_grid)
        all_mass.append(m_w)
        all_lam.append(lm_w)
        velocities.append(v_w)
        masses.append(m_w[-1])
        t_cur += tw
        x_cur += v_w * tw
        edge_x.append(x_cur)
        while k_save < len(save) and save[k_save] <= t_cur + 1e-12:
            snapshots[save[k_save]] = _cells_from_nodes(grid, rho)
            k_save += 1
        log.debug("window %d: v=%.6g edge=%.6g mass=%.9g", w, v_w, x_cur, m_w[-1])

    edge = EdgePath(tw * np.arange(n_win + 1), np.array(edge_x))
    run = PdeRun(grid, p, edge,
                 np.concatenate(all_times), np.concatenate(all_mass),
                 np.concatenate(all_lam), snapshots, clipped)
    return RelaxedSolution(eps, tw, edge, run,
                           np.array(velocities), np.array(masses))


@dataclass(frozen=True)
class SqueezeReport:
    t: float
    delta: float
    modulus: float
    lower_holds: bool
    upper_holds: bool
    lower_margin: float
    upper_margin: float

    @property
    def holds(self) -> bool:
        return self.lower_holds and self.upper_holds


def squeeze_check(sol: RelaxedSolution, u0: DensityProfile, t: float,
                  delta: float, p: FluxParams,
                  kappa: float = 10.0) -> SqueezeReport:
    """Check the relaxed profile sits between the two barrier envelopes.

    Envelopes are the alternating cut/evolve compositions at scale delta;
    the comparison is in the mass-transport order, loosened by the
    relaxation budget 2*t*eps/delta plus a grid term kappa*h.
    """
    from .barriers import LOWER, UPPER, BarrierConfig, barrier_evolve
    from .profile import order_leq_mod

    k = int(round(t / delta))
    if abs(k * delta - t) > 1e-9:
        raise NonPositiveTime(f"t={t} is not a multiple of delta={delta}")
    rho_t = sol.profile_at(t)
    up = barrier_evolve(u0, k, BarrierConfig(delta, UPPER, p=p))
    lo = barrier_evolve(u0, k, BarrierConfig(delta, LOWER, p=p))
    modulus = 2 * t * sol.eps / delta + kappa * u0.grid.h
    ok_lo, viol_lo = order_leq_mod(lo, rho_t, modulus)
    ok_up, viol_up = order_leq_mod(rho_t, up, modulus)
    return SqueezeReport(t, delta, modulus, ok_lo, ok_up, -viol_lo, -viol_up)
