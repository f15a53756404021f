"""Neumann kernels: exact cell convolution and the boundary source."""

import math

import numpy as np
import pytest
from scipy import integrate

from fbplab.green import (HALF_LINE, INTERVAL, KernelSpec, convolve,
                          flux_source, gauss, gauss_cdf, kernel_value,
                          uniform_transfer)
from fbplab.profile import DensityProfile, FluxParams, Grid, total_mass


def test_kernel_value_symmetry():
    spec = KernelSpec(HALF_LINE, 0.3)
    assert kernel_value(spec, 0.4, 1.1) == pytest.approx(
        kernel_value(spec, 1.1, 0.4))


def test_halfline_kernel_neumann_at_origin():
    # zero flux at 0: d/dr of the kernel vanishes there; check via symmetry
    spec = KernelSpec(HALF_LINE, 0.2)
    eps = 1e-6
    assert kernel_value(spec, 0.7, eps) == pytest.approx(
        kernel_value(spec, 0.7, 0.0), rel=1e-4)


def test_convolve_conserves_mass_half_line(unit_flux):
    g = Grid(1 / 64, 256)
    vals = np.zeros(256)
    vals[:64] = 1.5
    u = DensityProfile(g, vals)
    out = convolve(KernelSpec(HALF_LINE, 0.05), u)
    assert total_mass(out) == pytest.approx(total_mass(u), abs=1e-10)


def test_convolve_matches_quadrature_oracle():
    """Cell averages against brute-force double quadrature."""
    g = Grid(0.25, 8)
    u = DensityProfile(g, np.array([1.0, 0.5, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]))
    t = 0.1
    spec = KernelSpec(HALF_LINE, t)
    out = convolve(spec, u)

    def density(y):
        i = min(int(y / g.h), g.n - 1)
        return u.values[i]

    for k in (0, 1, 3, 5):
        lo, hi = g.nodes[k], g.nodes[k + 1]
        val, _ = integrate.dblquad(
            lambda y, x: density(y) * kernel_value(spec, y, x),
            lo, hi, 0.0, g.r_max, epsabs=1e-11)
        assert out.values[k] == pytest.approx(val / g.h, abs=5e-7)


def test_chapman_kolmogorov_projection():
    """G_s G_t vs G_{s+t} through the cell projection.

    The commutator is O(h^2 * curvature), so it must be small on a
    resolved grid and shrink ~4x when the grid is halved.
    """
    comms = []
    for h_inv in (128, 256):
        g = Grid(1.0 / h_inv, 5 * h_inv)    # wide grid: no tail truncation
        c = g.centers
        u = DensityProfile(g, np.exp(-((c - 0.6) ** 2) / 0.02))
        one = convolve(KernelSpec(HALF_LINE, 0.3), u)
        two = convolve(KernelSpec(HALF_LINE, 0.15),
                       convolve(KernelSpec(HALF_LINE, 0.15), u))
        comms.append(float(np.max(np.abs(one.values - two.values))))
    assert comms[1] < 1e-6
    assert comms[1] < comms[0] / 3.0


def test_flux_source_total_mass():
    p = FluxParams(1.7)
    g = Grid(1 / 128, 1024)     # r_max = 8: the t=0.4 tail is resolved
    for t in (0.05, 0.4):
        s = flux_source(t, p, g)
        assert total_mass(s) == pytest.approx(p.j * t, abs=1e-9)


def test_flux_source_slope_at_origin():
    # stationary balance: density behaves like j*(c - 2r) near 0, so the
    # discrete slope of the first cells approaches -2j as t grows
    p = FluxParams(1.0)
    g = Grid(1 / 400, 400)
    s = flux_source(2.0, p, g)
    slope = (s.values[1] - s.values[0]) / g.h
    assert slope == pytest.approx(-2.0 * p.j, rel=1e-2)


def test_uniform_transfer_full_cell_matches_convolve():
    """A layer covering exactly one cell must reproduce the cell kernel."""
    g = Grid(1 / 64, 192)
    t = 0.02
    i = 40
    vals = np.zeros(g.n)
    vals[i] = 3.0
    u = DensityProfile(g, vals)
    out = convolve(KernelSpec(HALF_LINE, t), u)
    masses = 3.0 * uniform_transfer(t, g.nodes[i], g.nodes[i + 1], g)
    np.testing.assert_allclose(out.values, masses / g.h, atol=1e-13)


def test_uniform_transfer_conserves_mass():
    g = Grid(1 / 64, 256)
    masses = uniform_transfer(0.01, 0.37, 0.55, g)
    assert masses.sum() == pytest.approx(0.55 - 0.37, abs=1e-12)


def test_interval_kernel_conserves_mass():
    g = Grid(1 / 64, 64)
    rng = np.random.default_rng(0)
    u = DensityProfile(g, rng.uniform(0, 2, 64))
    out = convolve(KernelSpec(INTERVAL, 0.7), u)
    assert total_mass(out) == pytest.approx(total_mass(u), abs=1e-10)


def test_interval_kernel_relaxes_to_uniform():
    g = Grid(1 / 64, 64)
    vals = np.zeros(64)
    vals[:16] = 4.0
    u = DensityProfile(g, vals)
    out = convolve(KernelSpec(INTERVAL, 5.0), u)
    np.testing.assert_allclose(out.values, total_mass(u), atol=1e-8)


def test_gauss_cdf_consistency():
    zs = np.linspace(-3, 3, 13)
    t = 0.37
    num = np.array([integrate.quad(lambda x: gauss(x, t), -20, z)[0]
                    for z in zs])
    np.testing.assert_allclose(gauss_cdf(zs, t), num, atol=1e-9)
