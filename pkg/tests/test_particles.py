"""Exact particle simulator, coupled barriers, and the counting seminorm."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbplab import particles as par
from fbplab import stationary as stat
from fbplab.profile import DensityProfile, FluxParams, Grid, total_mass


@pytest.fixture(scope="module")
def flux():
    return FluxParams(1.0)


@pytest.fixture(scope="module")
def rho0(flux):
    return stat.stationary_profile(1.0, flux, Grid(1 / 128, 384))


def test_simulate_reproducible(rho0, flux):
    a = par.simulate_basic(500, rho0, flux, 0.2, save_times=[0.1, 0.2], seed=7)
    b = par.simulate_basic(500, rho0, flux, 0.2, save_times=[0.1, 0.2], seed=7)
    assert a.n_events == b.n_events
    for sa, sb in zip(a.states, b.states):
        assert np.array_equal(sa.positions, sb.positions)


def test_replicas_differ(rho0, flux):
    a = par.simulate_basic(500, rho0, flux, 0.2, save_times=[0.2], seed=7)
    b = par.simulate_basic(500, rho0, flux, 0.2, save_times=[0.2],
                           seed=7, replica=1)
    assert not np.array_equal(a.at(0.2).positions, b.at(0.2).positions)


def test_particle_count_conserved(rho0, flux):
    traj = par.simulate_basic(300, rho0, flux, 0.3, save_times=[0.0, 0.3],
                              seed=1)
    assert all(s.n == 300 for s in traj.states)
    assert np.all(traj.at(0.3).positions >= 0)


def test_event_count_near_rate(rho0, flux):
    N, T = 2000, 0.5
    traj = par.simulate_basic(N, rho0, flux, T, save_times=[T], seed=2)
    lam = flux.j * N * T
    assert abs(traj.n_events - lam) < 5 * np.sqrt(lam)


def test_empirical_tail_basics():
    s = par.ParticleState(np.array([0.0, 0.5, 1.0, 2.0]), 0.0)
    assert par.empirical_tail(s, 0.0) == pytest.approx(1.0)
    assert par.empirical_tail(s, 0.75) == pytest.approx(0.5)
    assert par.empirical_tail(s, 3.0) == pytest.approx(0.0)


def test_hydro_convergence(rho0, flux):
    """Empirical tails approach the continuum midpoint as N grows."""
    t = 0.5
    meds = []
    for N in (500, 8000):
        trajs = [par.simulate_basic(N, rho0, flux, t, save_times=[t],
                                    seed=5, replica=r) for r in range(3)]
        rep = par.hydro_check(trajs, rho0, t, 0.2, p=flux)
        meds.append(rep.median)
    assert meds[1] < meds[0]
    assert meds[1] < 0.05


def test_barrier_triple_ordered(rho0, flux):
    trip = par.simulate_barriers(400, rho0, flux, delta=0.05, K=6, seed=9)
    assert trip.all_ordered
    assert not trip.any_degenerate
    for w in trip.windows:
        assert w.lower.size == 400 and w.upper.size == 400


def test_barrier_triple_replicas(rho0, flux):
    for r in range(3):
        trip = par.simulate_barriers(200, rho0, flux, delta=0.05, K=4,
                                     seed=9, replica=r)
        assert trip.all_ordered


def test_partition_seminorm_hand_case():
    part = par.PartitionSeminorm(4, 0.5, 2.0)
    assert part.cell_length == pytest.approx(0.5)
    g = Grid(1 / 64, 64)
    u = DensityProfile(g, np.where(g.centers < 1.0, 3.0, 0.0))
    v = DensityProfile(g, np.where(g.centers < 1.0, 2.2, 0.0))
    cu = par.profile_cells(u, part)
    cv = par.profile_cells(v, part)
    assert par.seminorm_cells(cu, cv) == pytest.approx(1.2)


def test_seminorm_positions_vs_profile(rho0):
    """Sampling a profile should give a small seminorm against it."""
    part = par.PartitionSeminorm(16, 0.5, 3.0)
    rng = np.random.default_rng(0)
    n = 20000
    pos = par._sample_initial(rho0, n, rng)
    # scale the profile so its cell masses count n particles total
    cells = par.profile_cells(rho0, part) * n / total_mass(rho0)
    counts = par.counting_cells(pos, part)
    assert par.seminorm_cells(counts, cells) / n < 0.05


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_counting_cells_total(seed):
    rng = np.random.default_rng(seed)
    part = par.PartitionSeminorm(8, 0.5, 2.0)
    pos = rng.uniform(0, 2.5, size=200)
    counts = par.counting_cells(pos, part)
    # overflow past r_max is folded into the last cell
    assert counts.sum() == pos.size


def test_seminorm_zero_on_integer_cells():
    c = np.array([3.0, 1.0, 0.0, 2.0])
    assert par.seminorm_cells(c, c) == 0.0
    # fractional common mass is not matched below the integer floor
    f = np.array([0.5, 0.0])
    assert par.seminorm_cells(f, f) == pytest.approx(1.0)
