"""Model variants: diffuse injection, duplicate-and-cull, static branching."""

import numpy as np
import pytest

from fbplab import stationary as stat
from fbplab import variants as var
from fbplab.profile import DensityProfile, FluxParams, Grid, total_mass


@pytest.fixture(scope="module")
def flux():
    return FluxParams(1.0)


def test_injection_law_validation():
    with pytest.raises(ValueError):
        var.InjectionLaw(0.0, 0.1, np.array([1.0, -0.5]))
    with pytest.raises(ValueError):
        var.InjectionLaw(0.0, 0.1, np.array([1.0, 1.0]))  # mass 0.2


def test_injection_law_sampling():
    law = var.InjectionLaw.bump(1.0, 0.5, 1 / 64)
    rng = np.random.default_rng(0)
    xs = law.sample(rng, 50000)
    assert np.all(xs >= 0.5 - 1e-9) and np.all(xs <= 1.5 + 1e-9)
    assert np.mean(xs) == pytest.approx(1.0, abs=5e-3)
    assert law.cumulative(1.0) == pytest.approx(0.5, abs=1e-3)
    assert law.cumulative(2.0) == pytest.approx(1.0, abs=1e-12)


def test_diffuse_preserves_count(flux):
    rho0 = stat.stationary_profile(1.0, flux, Grid(1 / 128, 384))
    f = var.InjectionLaw.bump(0.3, 0.2, 1 / 64)
    traj = var.diffuse_simulate(400, rho0, f, 0.3, save_times=[0.0, 0.3],
                                seed=1)
    assert all(s.n == 400 for s in traj.states)
    assert np.all(traj.at(0.3).positions >= 0)


def test_diffuse_reaches_stationary_shape(flux):
    """Long-run empirical tails track the analytic stationary profile."""
    g = Grid(1 / 64, 384)
    f = var.InjectionLaw.bump(0.25, 0.2, g.h)
    k0 = round(f.lo / g.h)
    dens = np.zeros(g.n)
    dens[k0:k0 + f.weights.size] = f.weights
    u = stat.diffuse_stationary(1.0, DensityProfile(g, dens))
    rho0 = stat.stationary_profile(1.0, flux, Grid(1 / 128, 384))
    N = 4000
    traj = var.diffuse_simulate(N, rho0, f, 2.0, save_times=[2.0], seed=3)
    xs = traj.at(2.0).positions
    r = u.grid.nodes[:-1]
    emp = np.array([(xs >= q).mean() for q in r])
    cum = np.concatenate(([0.0], np.cumsum(u.values) * u.grid.h))
    ref = (cum[-1] - cum[:-1]) / cum[-1]
    assert np.max(np.abs(emp - ref)) < 0.08


def test_bd_front_speed(flux):
    """Mirrored duplicate-and-cull: the front should travel near -sqrt(2)."""
    rho0 = stat.bd_wave(1.0, Grid(1 / 128, 1024))
    traj = var.bd_simulate(2000, rho0, 4.0,
                           save_times=np.linspace(1.0, 4.0, 13), seed=5)
    v = var.median_speed(traj, 1.0, 4.0)
    assert v == pytest.approx(-np.sqrt(2), abs=0.25)


def test_bd_wave_ode_residual():
    """psi = M V^2 r e^{-V r} solves (1/2)psi'' + V psi' + psi = 0 at
    V = sqrt(2); the analytic check is exact to roundoff."""
    V = np.sqrt(2)
    r = np.linspace(0.01, 6.0, 500)
    e = np.exp(-V * r)
    psi = V ** 2 * r * e
    d1 = V ** 2 * e * (1 - V * r)
    d2 = V ** 2 * e * (V ** 2 * r - 2 * V)
    res = 0.5 * d2 + V * d1 + psi
    assert np.max(np.abs(res)) < 1e-12


def test_dr_matches_nonlocal_oracle():
    kappa = var.InjectionLaw.bump(0.0, 0.4, 1 / 64)
    h = 1 / 64
    n = 512
    lo = -2.0
    centers = lo + h * (np.arange(n) + 0.5)
    v0 = np.where(np.abs(centers) < 1.0, 0.5, 0.0)
    run = var.dr_evolve(v0, lo, h, kappa, 1.0, 200, save_every=200)
    rng = np.random.default_rng(0)
    N = 4000
    # sample positions from the same initial block
    x0 = rng.uniform(-1.0, 1.0, N)
    traj = var.dr_simulate(N, x0, kappa, 1.0, save_times=[1.0], seed=7)
    xs = traj.at(1.0).positions
    r = np.linspace(-1.5, 2.0, 60)
    emp = np.array([(xs >= q).mean() for q in r])
    ref = run.tail(-1, r) / run.mass
    assert np.max(np.abs(emp - ref)) < 0.08


def test_dr_evolve_conserves_mass():
    kappa = var.InjectionLaw.bump(0.1, 0.3, 1 / 64)
    h = 1 / 64
    centers = -1.0 + h * (np.arange(256) + 0.5)
    v0 = np.exp(-centers ** 2)
    run = var.dr_evolve(v0, -1.0, h, kappa, 0.5, 100, save_every=25)
    masses = run.profiles.sum(axis=1) * h
    assert np.max(np.abs(masses - masses[0])) < 1e-9


def test_trapezoid_endpoints(flux):
    """The finite-volume stationary profile meets the walls at M -/+ j."""
    M = 2.0
    assert stat.trapezoid_value(0.0, M, flux) == pytest.approx(M + flux.j,
                                                               abs=1e-12)
    assert stat.trapezoid_value(1.0, M, flux) == pytest.approx(M - flux.j,
                                                               abs=1e-12)
    g = Grid(1 / 512, 512)
    u = stat.trapezoid_profile(M, flux, g)
    assert total_mass(u) == pytest.approx(M, abs=1e-10)


def test_variant_reproducible(flux):
    rho0 = stat.stationary_profile(1.0, flux, Grid(1 / 128, 384))
    f = var.InjectionLaw.bump(0.3, 0.2, 1 / 64)
    a = var.diffuse_simulate(300, rho0, f, 0.2, save_times=[0.2], seed=9)
    b = var.diffuse_simulate(300, rho0, f, 0.2, save_times=[0.2], seed=9)
    assert np.array_equal(a.at(0.2).positions, b.at(0.2).positions)
