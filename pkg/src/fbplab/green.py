"""Reflected (Neumann) heat kernels and exact-cell convolution.

The convolution of a piecewise-constant profile with the Gaussian kernel
is computed from the closed-form double antiderivative

    W(z) = z * Phi_t(z) + t * G_t(z),

so each source-cell -> destination-cell transfer is an exact second
difference of W and the transfer matrix is column-stochastic up to the
monitored tail loss.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfc

from .errors import NonPositiveTime
from .profile import DensityProfile, FluxParams, Grid

HALF_LINE = "half_line_neumann"
INTERVAL = "interval_neumann"

_KERNEL_CACHE: dict = {}


@dataclass(frozen=True)
class KernelSpec:
    variant: str = HALF_LINE
    t: float = 1.0
    image_cutoff: int = 8

    def __post_init__(self):
        if self.variant not in (HALF_LINE, INTERVAL):
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        if not self.t > 0:
            raise NonPositiveTime(f"kernel time must be positive, got {self.t}")
        if self.image_cutoff < 1:
            raise ValueError("image_cutoff must be >= 1")


def gauss(z, t):
    z = np.asarray(z, dtype=float)
    return np.exp(-z * z / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)


def gauss_cdf(z, t):
    z = np.asarray(z, dtype=float)
    return 0.5 * (1.0 + erf(z / math.sqrt(2.0 * t)))


def _w(z, t):
    """Double antiderivative of the Gaussian: W' = Phi_t, W'' = G_t."""
    z = np.asarray(z, dtype=float)
    return z * gauss_cdf(z, t) + t * gauss(z, t)


def kernel_value(spec: KernelSpec, r_src: float, r_dst: float) -> float:
    """Neumann kernel density at (r_src -> r_dst)."""
    t = spec.t
    if spec.variant == HALF_LINE:
        return float(gauss(r_dst - r_src, t) + gauss(r_dst + r_src, t))
    ks = np.arange(-spec.image_cutoff, spec.image_cutoff + 1)
    tot = gauss(r_dst - r_src - 2.0 * ks, t) + gauss(r_dst + r_src - 2.0 * ks, t)
    return float(tot.sum())


def _cell_kernel(grid: Grid, t: float, variant: str):
    """D(k), k = -K..K: mass a unit-density cell sends to the cell offset k.

    D(k) = W((k+1)h) - 2 W(kh) + W((k-1)h); entries beyond 8.5*sqrt(t)
    are below double precision and dropped.  On the half line offsets
    beyond 2n only ever reach off-grid cells, so K is capped there; the
    interval kernel folds mass back and needs the full width.
    """
    h = grid.h
    K = int(math.ceil(8.5 * math.sqrt(t) / h)) + 2
    if variant == HALF_LINE:
        K = min(K, 2 * grid.n + 2)
    z = np.arange(-K - 1, K + 2) * h
    w = _w(z, t)
    return w[2:] - 2.0 * w[1:-1] + w[:-2], K


def uniform_transfer(t: float, a: float, b: float, grid: Grid) -> np.ndarray:
    """Per-cell masses a unit-density layer on [a, b] sends through the
    half-line Neumann kernel; exact (differences of the double
    antiderivative), so sub-cell layers convolve without projection error."""
    nodes = grid.nodes
    tot = (_w(nodes - a, t) - _w(nodes - b, t)
           + _w(nodes + b, t) - _w(nodes + a, t))
    return np.diff(tot)


def convolve(spec: KernelSpec, u: DensityProfile) -> DensityProfile:
    """Cell-exact convolution of u with the Neumann kernel at time t."""
    t = spec.t
    if not t > 0:
        raise NonPositiveTime(f"t must be positive, got {t}")
    grid = u.grid
    n = grid.n
    v = u.values
    key = (grid.h, grid.n, t, spec.variant)
    hit = _KERNEL_CACHE.get(key)
    if hit is None:
        hit = _cell_kernel(grid, t, spec.variant)
        if len(_KERNEL_CACHE) > 64:
            _KERNEL_CACHE.clear()
        _KERNEL_CACHE[key] = hit
    d, K = hit

    conv_direct = np.convolve(v, d)          # index p: sum_i v_i D(p - i - K)
    conv_image = np.convolve(v[::-1], d)     # index p: sum_i v_i D(n-1-i + K - p) flipped

    out = conv_direct[K:K + n].copy()
    # image term: sum_i v_i D(i + j + 1); vanishes for j >= K
    jmax = min(K, n)
    p = n + np.arange(jmax) + K
    valid = p < len(conv_image)
    out[:jmax][valid] += conv_image[p[valid]]

    if spec.variant == INTERVAL:
        if abs(grid.r_max - 1.0) > 1e-12:
            raise ValueError("interval kernel requires a grid spanning [0, 1]")
        # periodic images at offsets 2k*n cells, k != 0
        kmax = max(1, int(math.ceil((K + 2 * n) / (2 * n))))
        for k in range(-kmax, kmax + 1):
            if k == 0:
                continue
            shift = 2 * k * n
            p = np.arange(n) + shift + K
            valid = (p >= 0) & (p < len(conv_direct))
            out[valid] += conv_direct[p[valid]]
            p = n + np.arange(n) + K - shift
            valid = (p >= 0) & (p < len(conv_image))
            out[valid] += conv_image[p[valid]]

    out /= grid.h  # transfers are per-cell masses; back to cell averages
    result = DensityProfile(grid, np.maximum(out, 0.0), u.tail_tolerance)
    lost = grid.h * float(v.sum() - out.sum())
    if spec.variant == HALF_LINE and lost > u.tail_tolerance:
        warnings.warn(
            f"convolve lost mass {lost:.3e} beyond R_max={grid.r_max}",
            stacklevel=2,
        )
    return result


def flux_source_value(r, t: float, p: FluxParams):
    """Density injected by the boundary flux up to time t, pointwise."""
    if not t > 0:
        raise NonPositiveTime(f"t must be positive, got {t}")
    r = np.asarray(r, dtype=float)
    return 2.0 * p.j * (
        math.sqrt(2.0 * t / math.pi) * np.exp(-r * r / (2.0 * t))
        - r * erfc(r / math.sqrt(2.0 * t))
    )


def flux_source_tail(r, t: float, p: FluxParams):
    """Mass of the injected density beyond r; equals j*t at r = 0."""
    r = np.asarray(r, dtype=float)
    return p.j * (
        (r * r + t) * erfc(r / math.sqrt(2.0 * t))
        - r * math.sqrt(2.0 * t / math.pi) * np.exp(-r * r / (2.0 * t))
    )


def flux_source(t: float, p: FluxParams, grid: Grid) -> DensityProfile:
    """Cell-averaged profile of the boundary injection over [0, t]."""
    if not t > 0:
        raise NonPositiveTime(f"t must be positive, got {t}")
    tails = flux_source_tail(grid.nodes, t, p)
    vals = (tails[:-1] - tails[1:]) / grid.h
    return DensityProfile(grid, np.maximum(vals, 0.0))
