"""Lattice walkers with reservoirs and the super-hydrodynamic mass law."""

import numpy as np
import pytest
from scipy import stats

from fbplab import lattice as lat
from fbplab import stationary as stat
from fbplab.profile import FluxParams, Grid


@pytest.fixture(scope="module")
def flux():
    return FluxParams(1.0)


def test_xi_from_macro_mass(flux):
    N = 64
    rho = stat.trapezoid_profile(1.5, flux, Grid(1 / 256, 512))
    xi = lat.xi_from_macro(N, rho)
    assert xi.size == N + 1
    assert xi.sum() == round(1.5 * N)


def test_simulate_reproducible(flux):
    N = 32
    xi0 = lat.xi_from_macro(N, stat.trapezoid_profile(1.0, flux,
                                                      Grid(1 / 128, 256)))
    T = 500.0
    a = lat.simulate_lattice(N, xi0, flux, T, save_times=[T], seed=4)
    b = lat.simulate_lattice(N, xi0, flux, T, save_times=[T], seed=4)
    assert np.array_equal(a.at(T).xi, b.at(T).xi)
    assert np.array_equal(a.mass_times, b.mass_times)


def test_mass_bookkeeping(flux):
    """Final count equals the initial one plus the signed reservoir events."""
    N = 32
    xi0 = lat.xi_from_macro(N, stat.trapezoid_profile(1.0, flux,
                                                      Grid(1 / 128, 256)))
    T = 2000.0
    traj = lat.simulate_lattice(N, xi0, flux, T, save_times=[T], seed=8)
    assert traj.at(T).total == xi0.sum() + traj.mass_signs.sum()


def test_mass_series_step_function(flux):
    N = 24
    xi0 = lat.xi_from_macro(N, stat.trapezoid_profile(1.0, flux,
                                                      Grid(1 / 128, 256)))
    traj = lat.simulate_lattice(N, xi0, flux, 3000.0, save_times=[3000.0],
                                seed=2)
    t, m = lat.total_mass_series(traj)
    assert m[0] == xi0.sum()
    assert np.all(np.abs(np.diff(m)) == 1)
    assert np.all(np.diff(t) >= 0)


def test_reservoir_gap_distribution(flux):
    """Reservoir firings are Poisson at rate 2j/N in microscopic time."""
    N = 16
    xi0 = lat.xi_from_macro(N, stat.trapezoid_profile(2.0, flux,
                                                      Grid(1 / 128, 256)))
    traj = lat.simulate_lattice(N, xi0, flux, 4.0e4, save_times=[4.0e4],
                                seed=13)
    gaps = np.diff(np.concatenate(([0.0], traj.mass_times)))
    assert gaps.size > 1000
    ks = stats.kstest(gaps, "expon", args=(0.0, N / (2 * flux.j)))
    assert ks.pvalue > 1e-3


def test_signs_balanced(flux):
    N = 16
    xi0 = lat.xi_from_macro(N, stat.trapezoid_profile(2.0, flux,
                                                      Grid(1 / 128, 256)))
    traj = lat.simulate_lattice(N, xi0, flux, 4.0e4, save_times=[4.0e4],
                                seed=13)
    s = traj.mass_signs
    z = abs(s.sum()) / np.sqrt(s.size)
    assert z < 4.0


def test_reflected_bm_variance_limits():
    # tiny variance: the reflection at 0 is invisible
    assert lat.reflected_bm_variance(5.0, 1e-4) == pytest.approx(1e-4,
                                                                 rel=1e-6)
    # starting at 0 the law is |N(0, var)|
    var = 0.7
    assert lat.reflected_bm_variance(0.0, var) == pytest.approx(
        var * (1 - 2 / np.pi), rel=1e-9)


def test_superhydro_experiment(flux):
    rep = lat.superhydro_experiment(32, 1.0, flux, 0.3, replicas=4, seed=0)
    assert rep.final_masses.size == 4
    assert rep.ks_pvalue > 1e-3
    assert abs(rep.plus_fraction - 0.5) < 4.0 / (2 * np.sqrt(rep.n_sign_events))


def test_macro_tail_normalization(flux):
    N = 32
    xi0 = lat.xi_from_macro(N, stat.trapezoid_profile(1.0, flux,
                                                      Grid(1 / 128, 256)))
    st8 = lat.LatticeState(xi0, 0.0)
    tails = lat.macro_tail(st8, N, np.array([0.0, 0.5, 1.0, 1.5]))
    assert tails[0] == pytest.approx(xi0.sum() / N)
    assert np.all(np.diff(tails) <= 1e-12)
    assert tails[-1] >= 0
