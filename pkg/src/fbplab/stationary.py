"""Analytic profile catalog: stationary, trapezoid, traveling-wave shapes.

All constructors sample exact cell averages (differences of the closed-form
tail mass divided by h), so total masses are exact to roundoff.
"""

from __future__ import annotations

import math

import numpy as np

from .profile import DensityProfile, FluxParams, Grid


def edge_radius(M: float, p: FluxParams) -> float:
    """Support edge a(M)/(2j) of the half-line stationary profile."""
    return math.sqrt(M / p.j)


def stationary_value(r, M: float, p: FluxParams):
    """(a - 2jr)_+ with a = 2*sqrt(jM)."""
    r = np.asarray(r, dtype=float)
    a = 2.0 * math.sqrt(p.j * M)
    return np.maximum(a - 2.0 * p.j * r, 0.0)


def stationary_tail(r, M: float, p: FluxParams):
    r = np.asarray(r, dtype=float)
    a = 2.0 * math.sqrt(p.j * M)
    lin = np.maximum(a - 2.0 * p.j * r, 0.0)
    return lin * lin / (4.0 * p.j)


def stationary_profile(M: float, p: FluxParams, grid: Grid) -> DensityProfile:
    if not M > 0:
        raise ValueError("mass must be positive")
    tails = stationary_tail(grid.nodes, M, p)
    return DensityProfile(grid, (tails[:-1] - tails[1:]) / grid.h)


def trapezoid_value(r, M: float, p: FluxParams):
    """Finite-volume stationary shape on [0, 1]; linear when M <= j,
    trapezoid (-2jr + M + j) when M > j."""
    r = np.asarray(r, dtype=float)
    j = p.j
    if M <= j:
        return stationary_value(r, M, p)
    return np.where((r >= 0) & (r <= 1.0), -2.0 * j * r + M + j, 0.0)


def trapezoid_tail(r, M: float, p: FluxParams):
    r = np.asarray(r, dtype=float)
    j = p.j
    if M <= j:
        return stationary_tail(r, M, p)
    rc = np.clip(r, 0.0, 1.0)
    return (1.0 - rc) * (M - j * rc)


def trapezoid_profile(M: float, p: FluxParams, grid: Grid) -> DensityProfile:
    if not M > 0:
        raise ValueError("mass must be positive")
    if grid.r_max < 1.0 - 1e-12:
        raise ValueError("trapezoid profile needs a grid covering [0, 1]")
    tails = trapezoid_tail(grid.nodes, M, p)
    return DensityProfile(grid, (tails[:-1] - tails[1:]) / grid.h)


BD_WAVE_SPEED = math.sqrt(2.0)


def bd_wave_value(r, M: float):
    """Minimal-speed traveling wave M V^2 r e^{-Vr}, V = sqrt(2)."""
    r = np.asarray(r, dtype=float)
    V = BD_WAVE_SPEED
    return M * V * V * r * np.exp(-V * r)


def bd_wave_tail(r, M: float):
    r = np.asarray(r, dtype=float)
    V = BD_WAVE_SPEED
    return M * np.exp(-V * r) * (V * r + 1.0)


def bd_wave(M: float, grid: Grid) -> DensityProfile:
    if not M > 0:
        raise ValueError("mass must be positive")
    tails = bd_wave_tail(grid.nodes, M)
    return DensityProfile(grid, (tails[:-1] - tails[1:]) / grid.h)


def diffuse_stationary(M: float, f: DensityProfile) -> DensityProfile:
    """Stationary shape for diffuse injection with density f (j = 1).

    rho(r) = (a - 2 * int_0^r phi)_+ with phi(x) = int_0^x f, a chosen so
    the total mass is M.  Returned on f's grid.
    """
    if not M > 0:
        raise ValueError("mass must be positive")
    grid = f.grid
    h = grid.h
    # phi at nodes (piecewise linear), Phi2 = int_0^r phi at nodes
    phi = np.zeros(grid.n + 1)
    phi[1:] = h * np.cumsum(f.values)
    # cell integral of phi: trapezoid is exact for piecewise-linear phi
    phi_cell = 0.5 * h * (phi[:-1] + phi[1:])
    Phi2 = np.zeros(grid.n + 1)
    Phi2[1:] = np.cumsum(phi_cell)

    def cell_integrals(a):
        # on cell i: q(s) = a - 2*Phi2[i] - 2*phi[i]*s - f_i*s^2 is
        # non-increasing, so the positive part has at most one crossing
        out = np.zeros(grid.n)
        for i in range(grid.n):
            q0 = a - 2.0 * Phi2[i]
            if q0 <= 0.0:
                break
            fi = f.values[i]
            qh = a - 2.0 * Phi2[i + 1]
            if qh >= 0.0:
                s_up = h
            else:
                # root of f_i s^2 + 2 phi_i s - q0 = 0 in (0, h)
                if fi > 0.0:
                    s_up = (-phi[i] + math.sqrt(phi[i] ** 2 + fi * q0)) / fi
                else:
                    s_up = q0 / (2.0 * phi[i])
            out[i] = q0 * s_up - phi[i] * s_up**2 - fi * s_up**3 / 3.0
        return out

    def mass_of(a):
        return float(cell_integrals(a).sum())

    # bracket a: mass grows monotonically with a
    lo, hi = 0.0, 1.0
    while mass_of(hi) < M:
        hi *= 2.0
        if hi > 1e8:
            raise ValueError("could not bracket the profile height")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mass_of(mid) < M:
            lo = mid
        else:
            hi = mid
        if lo == hi:
            break
    a = hi
    return DensityProfile(grid, cell_integrals(a) / h)
