"""Barrier iterations, dyadic refinement, and the interval variant."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbplab import barriers as bar
from fbplab import stationary as stat
from fbplab.errors import MassTooSmall, NonPositiveTime
from fbplab.green import HALF_LINE, INTERVAL
from fbplab.profile import (DensityProfile, FluxParams, Grid, l1_distance,
                            order_leq_mod, tail_at_nodes, total_mass)


@pytest.fixture
def stationary_u(unit_flux):
    g = Grid(1 / 200, 600)
    return stat.stationary_profile(1.0, unit_flux, g)


def test_free_evolve_adds_j_delta(stationary_u, unit_flux):
    out = bar.free_evolve(stationary_u, 0.05, unit_flux)
    assert total_mass(out) == pytest.approx(
        total_mass(stationary_u) + 0.05 * unit_flux.j, abs=1e-10)


def test_free_evolve_rejects_bad_delta(stationary_u, unit_flux):
    with pytest.raises(NonPositiveTime):
        bar.free_evolve(stationary_u, 0.0, unit_flux)


def test_barrier_step_conserves_mass(stationary_u, unit_flux):
    for side in (bar.UPPER, bar.LOWER):
        cfg = bar.BarrierConfig(0.05, side, HALF_LINE, unit_flux)
        out = bar.barrier_step(stationary_u, cfg)
        assert total_mass(out) == pytest.approx(
            total_mass(stationary_u), abs=1e-10)


def test_lower_below_upper(stationary_u, unit_flux):
    t, k = 0.4, 8
    d = t / k
    up = bar.barrier_evolve(stationary_u, k,
                            bar.BarrierConfig(d, bar.UPPER, HALF_LINE, unit_flux))
    lo = bar.barrier_evolve(stationary_u, k,
                            bar.BarrierConfig(d, bar.LOWER, HALF_LINE, unit_flux))
    holds, _ = order_leq_mod(lo, up, 1e-10)
    assert holds


def test_gap_law_small(stationary_u, unit_flux):
    t = 0.4
    h = stationary_u.grid.h
    for k in (4, 8, 16):
        d = t / k
        up = bar.barrier_evolve(stationary_u, k,
                                bar.BarrierConfig(d, bar.UPPER, HALF_LINE, unit_flux))
        lo = bar.barrier_evolve(stationary_u, k,
                                bar.BarrierConfig(d, bar.LOWER, HALF_LINE, unit_flux))
        assert l1_distance(up, lo) <= 2 * unit_flux.j * d + 10 * k * h


def test_separating_element_converges(stationary_u, unit_flux):
    cfg = bar.BarrierConfig(0.4, bar.UPPER, HALF_LINE, unit_flux)
    res = bar.separating_element(stationary_u, 0.4, 5e-3, cfg)
    assert res.gap <= 5e-3
    # levels recorded in refinement order with shrinking delta
    deltas = [lv[1] for lv in res.levels]
    assert all(a > b for a, b in zip(deltas, deltas[1:]))
    # stationary initial datum: the separating profile stays close to it
    assert l1_distance(res.profile, stationary_u) < 2e-2


def test_separating_levels_monotone_gap(stationary_u, unit_flux):
    cfg = bar.BarrierConfig(0.4, bar.UPPER, HALF_LINE, unit_flux)
    res = bar.separating_element(stationary_u, 0.4, 5e-3, cfg)
    sups = [lv[2] for lv in res.levels]
    assert all(a >= b - 1e-12 for a, b in zip(sups, sups[1:]))


def test_first_cut_empty_raises(unit_flux):
    g = Grid(1 / 64, 64)
    tiny = DensityProfile(g, np.full(64, 1e-4))
    cfg = bar.BarrierConfig(0.5, bar.UPPER, HALF_LINE, unit_flux)
    with pytest.raises(MassTooSmall):
        bar.barrier_evolve(tiny, 1, cfg)


def test_finite_volume_barrier_mass(unit_flux):
    g = Grid(1 / 64, 64)
    u = stat.trapezoid_profile(2.0, unit_flux, g)
    for side in (bar.UPPER, bar.LOWER):
        cfg = bar.BarrierConfig(0.02, side, INTERVAL, unit_flux)
        out = bar.finite_volume_barrier(u, 5, cfg)
        assert total_mass(out) == pytest.approx(total_mass(u), abs=1e-9)


def test_finite_volume_fixed_point(unit_flux):
    """The trapezoid is the stationary shape of the interval dynamics.

    A boundary layer of width ~sqrt(delta) forms at the endpoints before
    the cut restores it each step, so the discrete drift is O(sqrt(delta))
    rather than zero.
    """
    g = Grid(1 / 128, 128)
    u = stat.trapezoid_profile(2.0, unit_flux, g)
    drifts = []
    for d in (0.02, 0.005):
        cfg = bar.BarrierConfig(d, bar.UPPER, INTERVAL, unit_flux)
        out = bar.finite_volume_barrier(u, max(1, int(0.2 / d)), cfg)
        drifts.append(l1_distance(out, u))
    assert drifts[0] < 5e-2
    assert drifts[1] < 0.75 * drifts[0]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_upper_dominates_lower_random(seed):
    rng = np.random.default_rng(seed)
    g = Grid(1 / 64, 256)
    vals = np.zeros(256)
    n_sup = int(rng.integers(32, 128))
    vals[:n_sup] = rng.uniform(0, 2, n_sup)
    u = DensityProfile(g, vals)
    p = FluxParams(1.0)
    d = 0.04
    if total_mass(u) <= 4 * p.j * d:
        return
    up = bar.barrier_evolve(u, 4, bar.BarrierConfig(d, bar.UPPER, HALF_LINE, p))
    lo = bar.barrier_evolve(u, 4, bar.BarrierConfig(d, bar.LOWER, HALF_LINE, p))
    holds, _ = order_leq_mod(lo, up, 1e-8)
    assert holds
    assert total_mass(up) == pytest.approx(total_mass(u), abs=1e-8)
    assert total_mass(lo) == pytest.approx(total_mass(u), abs=1e-8)
