"""Topological-selection variants: diffuse injection, duplicate-and-cull,
and nonlocal branching with static states.

All three keep the particle count constant by pairing each birth with the
removal of an extreme particle — rightmost for the first two, leftmost
for the third.  The module also carries a deterministic time-stepping
oracle for the nonlocal model: grow by the branching kernel, then cut at
the left edge to restore the mass, mirroring the lower-barrier pattern of
the main scheme.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .profile import DensityProfile, FluxParams
from .particles import _argmax_last, _rng, _sample_initial

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InjectionLaw:
    """Probability density on a uniform grid, cells [lo + k*h, lo + (k+1)*h).

    Used both for the birth-state density f (support in [0, inf)) and for
    branching displacement kernels (support may be negative).
    """

    lo: float
    h: float
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("injection density must be non-negative")
        mass = float(w.sum() * self.h)
        if abs(mass - 1.0) > 1e-10:
            raise ValueError(f"injection density must integrate to 1, got {mass}")
        object.__setattr__(self, "weights", w)

    @property
    def hi(self) -> float:
        return self.lo + self.h * self.weights.size

    def sample(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        cum = np.concatenate(([0.0], np.cumsum(self.weights) * self.h))
        q = rng.random(size) * cum[-1]
        idx = np.searchsorted(cum, q, side="right") - 1
        idx = np.clip(idx, 0, self.weights.size - 1)
        frac = (q - cum[idx]) / np.maximum(cum[idx + 1] - cum[idx], 1e-300)
        return self.lo + (idx + frac) * self.h

    def cumulative(self, x) -> np.ndarray:
        """phi(x) = integral of the density up to x."""
        cum = np.concatenate(([0.0], np.cumsum(self.weights) * self.h))
        grid = self.lo + self.h * np.arange(self.weights.size + 1)
        return np.interp(x, grid, cum)

    @classmethod
    def from_profile(cls, u: DensityProfile) -> "InjectionLaw":
        mass = float(np.sum(u.values) * u.grid.h)
        return cls(0.0, u.grid.h, u.values / mass)

    @classmethod
    def bump(cls, center: float, width: float, h: float) -> "InjectionLaw":
        """Triangular bump of the given half-width, mass 1."""
        lo = center - width
        n = max(2, int(round(2 * width / h)))
        r = lo + h * (np.arange(n) + 0.5)
        w = np.maximum(1.0 - np.abs(r - center) / width, 0.0)
        return cls(lo, h, w / (w.sum() * h))


@dataclass(frozen=True)
class VariantState:
    positions: np.ndarray
    clock: float

    def __post_init__(self):
        object.__setattr__(self, "positions",
                           np.sort(np.asarray(self.positions, dtype=float)))

    @property
    def n(self) -> int:
        return self.positions.size


@dataclass
class VariantTrajectory:
    model: str
    n: int
    states: list
    n_events: int
    seed_key: tuple

    def at(self, t: float) -> VariantState:
        best = min(self.states, key=lambda s: abs(s.clock - t))
        if abs(best.clock - t) > 1e-9:
            raise KeyError(f"no saved state near t={t}")
        return best


def _emit_saves(states, x, t, horizon, save, k_save, advance):
    """Advance to each save time <= horizon, recording snapshots."""
    while k_save < len(save) and save[k_save] <= horizon + 1e-15:
        s = save[k_save]
        if s > t + 1e-15:
            x = advance(x, s - t)
            t = s
        states.append(VariantState(x.copy(), s))
        k_save += 1
    return x, t, k_save


def _event_loop(model, N, x, rate, T, save_times, rng, seed_key,
                advance, on_event):
    save = sorted(float(s) for s in save_times)
    states = []
    k_save = 0
    t = 0.0
    if save and save[0] <= 1e-15:
        states.append(VariantState(x.copy(), 0.0))
        k_save += 1
    n_events = 0
    while t < T:
        t_next = t + rng.exponential(1.0 / rate)
        x, t, k_save = _emit_saves(states, x, t, min(t_next, T),
                                   save, k_save, advance)
        if t_next > T:
            break
        if t_next > t:
            x = advance(x, t_next - t)
        t = t_next
        x = on_event(x)
        n_events += 1
    return VariantTrajectory(model, N, states, n_events, seed_key)


def diffuse_simulate(N: int, rho0: DensityProfile, f: InjectionLaw, T: float,
                     save_times: Sequence[float] = (), seed: int = 0,
                     replica: int = 0) -> VariantTrajectory:
    """Environment-driven births: at rate N a new cell appears with law f
    and the rightmost cell (possibly the newborn itself) is removed.
    Cells are reflected Brownian motions on the half-line."""
    if N < 1:
        raise ValueError("need at least one particle")
    if f.lo < -1e-12:
        raise ValueError("birth density must be supported in [0, inf)")
    seed_key = (seed, replica)
    rng = _rng(seed_key)
    x = _sample_initial(rho0, N, rng)

    def advance(x, dt):
        return np.abs(x + math.sqrt(dt) * rng.standard_normal(x.size))

    def on_event(x):
        born = float(f.sample(rng, 1)[0])
        i = _argmax_last(x)
        if born < x[i]:
            x[i] = born          # otherwise the newborn is itself removed
        return x

    return _event_loop("diffuse", N, x, float(N), T, save_times, rng,
                       seed_key, advance, on_event)


def bd_simulate(N: int, rho0, T: float,
                save_times: Sequence[float] = (), seed: int = 0,
                replica: int = 0) -> VariantTrajectory:
    """Duplicate-and-cull: at rate N a uniform cell duplicates in place and
    the rightmost cell is deleted.  Free Brownian motion on the line.

    Culling the maximum sends the front leftward; the mirror image
    (culling the minimum) travels right along the analytic wave profile.
    rho0 may be a DensityProfile to sample from, or an explicit position
    array (useful for mirrored initial data on the full line).
    """
    if N < 1:
        raise ValueError("need at least one particle")
    seed_key = (seed, replica)
    rng = _rng(seed_key)
    if isinstance(rho0, DensityProfile):
        x = _sample_initial(rho0, N, rng)
    else:
        x = np.asarray(rho0, dtype=float).copy()
        if x.size != N:
            raise ValueError("initial positions must have length N")

    def advance(x, dt):
        return x + math.sqrt(dt) * rng.standard_normal(x.size)

    def on_event(x):
        parent = int(rng.integers(x.size))
        child_pos = x[parent]
        x[_argmax_last(x)] = child_pos
        return x

    return _event_loop("bd", N, x, float(N), T, save_times, rng,
                       seed_key, advance, on_event)


def dr_simulate(N: int, x0: np.ndarray, kappa: InjectionLaw, T: float,
                save_times: Sequence[float] = (), seed: int = 0,
                replica: int = 0) -> VariantTrajectory:
    """Static states: at rate N a uniform parent spawns a child displaced
    by a kappa-sample and the leftmost cell is erased."""
    if N < 1:
        raise ValueError("need at least one particle")
    x0 = np.asarray(x0, dtype=float)
    if x0.size != N:
        raise ValueError("x0 must hold N positions")
    seed_key = (seed, replica)
    rng = _rng(seed_key)

    def advance(x, dt):
        return x                 # cells do not change their states

    def on_event(x):
        parent = int(rng.integers(x.size))
        child = x[parent] + float(kappa.sample(rng, 1)[0])
        x[int(np.argmin(x))] = child
        return x

    return _event_loop("dr", N, x0.copy(), float(N), T, save_times, rng,
                       seed_key, advance, on_event)


def median_speed(traj: VariantTrajectory, t0: float, t1: float) -> float:
    """Drift velocity of the empirical median, least-squares over the saved
    states in [t0, t1].  The bulk observable for front-speed measurements
    (edge order statistics fluctuate too much)."""
    pts = [(s.clock, float(np.median(s.positions)))
           for s in traj.states if t0 - 1e-12 <= s.clock <= t1 + 1e-12]
    if len(pts) < 2:
        raise ValueError("need at least two saved states in the window")
    t = np.array([q[0] for q in pts])
    m = np.array([q[1] for q in pts])
    return float(np.polyfit(t, m, 1)[0])


# ----------------------------------------------------------- nonlocal oracle

@dataclass
class NonlocalRun:
    """Deterministic evolution of the static-state branching model.

    Every step grows the profile by the branching kernel and cuts at the
    left edge to restore the initial mass (lower-barrier pattern).
    """

    lo: float
    h: float
    times: np.ndarray
    profiles: np.ndarray         # one row per time
    mass: float

    def tail(self, k: int, r: np.ndarray) -> np.ndarray:
        v = self.profiles[k]
        cum = np.concatenate(([0.0], np.cumsum(v[::-1]) * self.h))[::-1]
        grid = self.lo + self.h * np.arange(v.size + 1)
        return np.interp(r, grid, cum)


def dr_evolve(rho0_vals: np.ndarray, lo: float, h: float,
              kappa: InjectionLaw, T: float, n_steps: int,
              save_every: int = 1) -> NonlocalRun:
    """Time-step d rho/dt = kappa-correlation of rho with a left-edge cut.

    The growth half-step is Heun (2nd order); the cut removes exactly the
    mass produced, so the total is conserved to roundoff by construction.
    """
    d_min = int(math.floor(kappa.lo / h)) - 1
    d_max = int(math.ceil(kappa.hi / h)) + 1
    # cell-transfer law: probability that a child lands d cells from its
    # parent's cell, parent uniform in-cell.  Built from the kernel CDF's
    # antiderivative W, so the weights telescope to exactly 1.
    z = h * np.arange(d_min - 1, d_max + 2)
    phi = kappa.cumulative(z)
    w_anti = np.concatenate(([0.0], np.cumsum(0.5 * (phi[:-1] + phi[1:]) * h)))
    trans = (w_anti[2:] - 2.0 * w_anti[1:-1] + w_anti[:-2]) / h
    assert abs(trans.sum() - 1.0) < 1e-9

    v = np.asarray(rho0_vals, dtype=float).copy()
    mass0 = float(v.sum() * h)
    dt = T / n_steps
    times = [0.0]
    rows = [v.copy()]

    def growth(u):
        full = np.convolve(u, trans)
        out = np.zeros_like(u)
        # conv index k = i + (d - d_min): cell p receives k = p - d_min
        a = max(0, d_min)
        b = min(u.size, full.size + d_min)
        out[a:b] = full[a - d_min:b - d_min]
        return out

    def cut_left(u):
        excess = u.sum() * h - mass0
        if excess <= 0:
            return u
        cum = np.cumsum(u) * h
        i = int(np.searchsorted(cum, excess, side="left"))
        u[:i] = 0.0
        u[i] = (cum[i] - excess) / h
        return u

    for k in range(n_steps):
        g1 = growth(v)
        g2 = growth(v + dt * g1)
        v = v + 0.5 * dt * (g1 + g2)
        v = cut_left(v)
        if (k + 1) % save_every == 0 or k == n_steps - 1:
            times.append((k + 1) * dt)
            rows.append(v.copy())
    return NonlocalRun(lo, h, np.array(times), np.array(rows), mass0)
