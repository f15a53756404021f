"""Discrete densities on a uniform grid and the mass-transport partial order.

A profile stores cell-averaged values on [0, R_max], so every mass
functional (total mass, tail mass, cut) is exact piecewise-linear
arithmetic on cumulative sums rather than quadrature.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MassMismatch, MassTooSmall, NotOrdered

DEFAULT_TAIL_TOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform cell grid on [0, n*h); cell i is [i*h, (i+1)*h)."""

    h: float
    n: int

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"cell width must be positive, got {self.h}")
        if self.n < 2:
            raise ValueError(f"need at least 2 cells, got {self.n}")

    @property
    def r_max(self) -> float:
        return self.n * self.h

    @property
    def nodes(self) -> np.ndarray:
        """Cell boundaries r_i = i*h, i = 0..n."""
        return np.arange(self.n + 1) * self.h

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h

    def compatible(self, other: "Grid") -> bool:
        return self.n == other.n and abs(self.h - other.h) <= 1e-14 * self.h


@dataclass(frozen=True)
class FluxParams:
    """Boundary flux j >= 0 injected at the origin.

    j = 0 is allowed so that pure-Dirichlet reference runs can share the
    same plumbing; operations that need a genuine reservoir (cut with a
    positive target, relaxed solving) check positivity themselves.
    """

    j: float = 1.0

    def __post_init__(self):
        if self.j < 0:
            raise ValueError(f"flux j must be non-negative, got {self.j}")


@dataclass
class DensityProfile:
    grid: Grid
    values: np.ndarray
    tail_tolerance: float = DEFAULT_TAIL_TOL

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid n={self.grid.n}"
            )
        if np.any(self.values < -1e-12):
            raise ValueError("profile values must be non-negative")

    def copy(self) -> "DensityProfile":
        return DensityProfile(self.grid, self.values.copy(), self.tail_tolerance)

    def __eq__(self, other):
        return (
            isinstance(other, DensityProfile)
            and self.grid == other.grid
            and np.array_equal(self.values, other.values)
        )


def zeros_like(u: DensityProfile) -> DensityProfile:
    return DensityProfile(u.grid, np.zeros(u.grid.n), u.tail_tolerance)


def total_mass(u: DensityProfile) -> float:
    return u.grid.h * float(u.values.sum())


def tail_at_nodes(u: DensityProfile) -> np.ndarray:
    """F(r_i; u) = integral of u over [r_i, R_max], at every grid node."""
    out = np.zeros(u.grid.n + 1)
    out[:-1] = u.grid.h * np.cumsum(u.values[::-1])[::-1]
    return out


def tail_mass(u: DensityProfile, r: float) -> float:
    """F(r; u) with linear interpolation inside the cell containing r."""
    if r <= 0.0:
        return total_mass(u)
    if r >= u.grid.r_max:
        return 0.0
    h = u.grid.h
    i = min(int(r / h), u.grid.n - 1)
    tails = tail_at_nodes(u)
    return float(tails[i] - u.values[i] * (r - i * h))


def l1_distance(u: DensityProfile, v: DensityProfile) -> float:
    u, v = common_grid(u, v)
    return u.grid.h * float(np.abs(u.values - v.values).sum())


def sup_distance(u: DensityProfile, v: DensityProfile) -> float:
    u, v = common_grid(u, v)
    return float(np.abs(u.values - v.values).max())


def resample(u: DensityProfile, grid: Grid) -> DensityProfile:
    """Conservative (mass-preserving cell overlap) resampling onto `grid`.

    Mass beyond the new R_max is dropped; a warning fires when the drop
    exceeds the profile's tail tolerance.
    """
    if u.grid.compatible(grid):
        return DensityProfile(grid, u.values.copy(), u.tail_tolerance)
    # cumulative mass from 0, piecewise linear in r
    cum = np.zeros(u.grid.n + 1)
    cum[1:] = u.grid.h * np.cumsum(u.values)
    new_nodes = grid.nodes
    cum_new = np.interp(new_nodes, u.grid.nodes, cum, right=cum[-1])
    vals = np.diff(cum_new) / grid.h
    lost = float(cum[-1] - cum_new[-1])
    if lost > u.tail_tolerance:
        warnings.warn(
            f"resampling dropped mass {lost:.3e} beyond R_max={grid.r_max}",
            stacklevel=2,
        )
    vals[vals < 0] = 0.0
    return DensityProfile(grid, vals, u.tail_tolerance)


def common_grid(u: DensityProfile, v: DensityProfile):
    if u.grid.compatible(v.grid):
        return u, v
    # refine onto the finer step, extend to the larger domain
    h = min(u.grid.h, v.grid.h)
    n = int(round(max(u.grid.r_max, v.grid.r_max) / h))
    g = Grid(h, n)
    return resample(u, g), resample(v, g)


def order_leq_mod(u: DensityProfile, v: DensityProfile, m: float = 0.0,
                  slack: float = 0.0):
    """Test u ≼ v modulo m: F(r;u) <= F(r;v) + m at every grid node.

    Returns (holds, violation) with violation = sup_r (F(r;u) - F(r;v)) - m;
    `holds` allows an extra additive `slack` for grid tolerance.
    """
    u, v = common_grid(u, v)
    gap = tail_at_nodes(u) - tail_at_nodes(v)
    violation = float(gap.max()) - m
    return violation <= slack, violation


def cut(u: DensityProfile, delta: float, p: FluxParams) -> DensityProfile:
    """Remove mass j*delta from the right end of the profile.

    The cut point R_u solves F(R_u; u) = j*delta; ties resolve to the
    leftmost admissible R_u.  The output mass is total_mass(u) - j*delta
    up to roundoff.
    """
    target = p.j * delta
    mass = total_mass(u)
    if mass <= target:
        raise MassTooSmall(
            f"cut needs mass > j*delta = {target:.6g}, profile has {mass:.6g}"
        )
    tails = tail_at_nodes(u)
    # first node from the left whose tail is <= target: the crossing is in
    # the cell just before it (leftmost solution of F(R) = target)
    i_star = int(np.argmax(tails <= target))
    vals = u.values.copy()
    vals[i_star:] = 0.0
    i_cell = i_star - 1
    # exact remainder in the crossing cell keeps the mass identity exact
    vals[i_cell] = (tails[i_cell] - target) / u.grid.h
    if vals[i_cell] < 0.0:  # roundoff guard
        vals[i_cell] = 0.0
    return DensityProfile(u.grid, vals, u.tail_tolerance)


def cut_radius(u: DensityProfile, delta: float, p: FluxParams) -> float:
    """The cut point R_u with F(R_u; u) = j*delta (leftmost solution)."""
    target = p.j * delta
    if total_mass(u) <= target:
        raise MassTooSmall("profile not in U_delta")
    tails = tail_at_nodes(u)
    i_star = int(np.argmax(tails <= target))
    i_cell = i_star - 1
    v = u.values[i_cell]
    if v <= 0:
        return u.grid.nodes[i_star]
    return float(u.grid.nodes[i_cell] + (tails[i_cell] - target) / v)


def support_radius(u: DensityProfile, eps: float = 0.0) -> float:
    """Rightmost node whose tail exceeds eps."""
    tails = tail_at_nodes(u)
    idx = np.nonzero(tails > eps)[0]
    if len(idx) == 0:
        return 0.0
    return float(u.grid.nodes[min(idx[-1] + 1, u.grid.n)])


@dataclass
class TransportMap:
    """Monotone map carrying u onto v, sampled at u's grid nodes."""

    nodes: np.ndarray
    f: np.ndarray


def transport_map(u: DensityProfile, v: DensityProfile,
                  mass_tol: float = 1e-8) -> TransportMap:
    """Monotone f with cumulative(v) at f(r) = cumulative(u) at r.

    Requires u ≼ v with equal mass.  Within a flat run of v's
    cumulative, f takes the rightmost point, except at full mass where
    the right edge of v's support is used.
    """
    mu, mv = total_mass(u), total_mass(v)
    if abs(mu - mv) > mass_tol:
        raise MassMismatch(f"masses differ: {mu:.10g} vs {mv:.10g}")
    ok, viol = order_leq_mod(u, v, 0.0, slack=mass_tol)
    if not ok:
        raise NotOrdered(f"u not below v: violation {viol:.3e}")
    u, v = common_grid(u, v)
    nodes = u.grid.nodes
    cum_u = np.zeros(len(nodes))
    cum_u[1:] = u.grid.h * np.cumsum(u.values)
    cum_v = np.zeros(len(nodes))
    cum_v[1:] = v.grid.h * np.cumsum(v.values)
    edge_v = support_radius(v, mass_tol)
    f = np.empty_like(nodes)
    for k, target in enumerate(cum_u):
        if target >= cum_v[-1] - mass_tol:
            f[k] = max(edge_v, nodes[k])
            continue
        idx = int(np.searchsorted(cum_v, target, side="right"))
        idx = min(idx, len(nodes) - 1)
        i = idx - 1
        val = v.values[i] if i < v.grid.n else 0.0
        if val <= 0:
            f[k] = nodes[idx]
        else:
            f[k] = nodes[i] + (target - cum_v[i]) / val
    return TransportMap(nodes=nodes, f=f)


# ---------------------------------------------------------------------------
# serialization: CSV (r,value at cell centers) + JSON sidecar with the grid


def write_profile(u: DensityProfile, csv_path) -> None:
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "value"])
        for r, val in zip(u.grid.centers, u.values):
            w.writerow([f"{r:.17g}", f"{val:.17g}"])
    sidecar = csv_path.with_suffix(".json")
    with open(sidecar, "w") as fh:
        json.dump(
            {"h": u.grid.h, "n": u.grid.n, "tail_tolerance": u.tail_tolerance},
            fh, indent=2,
        )
        fh.write("\n")


def read_profile(csv_path) -> DensityProfile:
    csv_path = Path(csv_path)
    with open(csv_path.with_suffix(".json")) as fh:
        meta = json.load(fh)
    grid = Grid(meta["h"], meta["n"])
    vals = np.zeros(grid.n)
    with open(csv_path, newline="") as fh:
        rdr = csv.reader(fh)
        next(rdr)
        for k, row in enumerate(rdr):
            vals[k] = float(row[1])
    return DensityProfile(grid, vals, meta.get("tail_tolerance", DEFAULT_TAIL_TOL))
