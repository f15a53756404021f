"""Profiles, tails, the order relation, and the right-edge cut."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbplab.errors import MassTooSmall
from fbplab.profile import (DensityProfile, FluxParams, Grid, cut, cut_radius,
                            l1_distance, order_leq_mod, read_profile,
                            resample, tail_at_nodes, tail_mass, total_mass,
                            write_profile)


def _profile(vals, h=0.25):
    vals = np.asarray(vals, dtype=float)
    return DensityProfile(Grid(h, vals.size), vals)


def test_grid_nodes_and_centers():
    g = Grid(0.5, 4)
    assert g.r_max == 2.0
    np.testing.assert_allclose(g.nodes, [0, 0.5, 1.0, 1.5, 2.0])
    np.testing.assert_allclose(g.centers, [0.25, 0.75, 1.25, 1.75])


def test_flux_params_rejects_negative_j():
    with pytest.raises(ValueError):
        FluxParams(-1.0)


def test_total_mass_and_tails():
    u = _profile([2.0, 1.0, 0.0, 0.0])
    assert total_mass(u) == pytest.approx(0.75)
    f = tail_at_nodes(u)
    np.testing.assert_allclose(f, [0.75, 0.25, 0.0, 0.0, 0.0])
    assert f[0] == pytest.approx(total_mass(u))
    assert tail_mass(u, 0.125) == pytest.approx(0.5)


def test_order_relation_basics():
    u = _profile([1.0, 1.0, 0.0, 0.0])
    v = _profile([1.0, 1.0, 1.0, 0.0])
    holds, viol = order_leq_mod(u, v)
    assert holds and viol <= 0
    holds, viol = order_leq_mod(v, u)
    assert not holds
    assert viol == pytest.approx(0.25)
    # the violation is exactly the modulus needed to restore the order
    holds, _ = order_leq_mod(v, u, viol + 1e-12)
    assert holds


def test_cut_removes_exactly_j_delta():
    p = FluxParams(2.0)
    u = _profile([1.0, 1.0, 1.0, 1.0])
    c = cut(u, 0.2, p)          # removes 0.4 from total 1.0
    assert total_mass(c) == pytest.approx(0.6, abs=1e-14)
    # untouched cells on the left
    np.testing.assert_allclose(c.values[:2], u.values[:2])


def test_cut_radius_is_tail_inverse():
    p = FluxParams(1.0)
    u = _profile([1.0, 1.0, 1.0, 1.0])
    R = cut_radius(u, 0.3, p)
    assert tail_mass(u, R) == pytest.approx(0.3, abs=1e-14)


def test_cut_requires_enough_mass():
    u = _profile([0.1, 0.0, 0.0, 0.0])
    with pytest.raises(MassTooSmall):
        cut(u, 1.0, FluxParams(1.0))


def test_resample_preserves_mass():
    rng = np.random.default_rng(1)
    u = DensityProfile(Grid(1 / 64, 128), rng.uniform(0, 1, 128))
    v = resample(u, Grid(1 / 32, 64))
    assert total_mass(v) == pytest.approx(total_mass(u), abs=1e-12)


def test_write_read_roundtrip(tmp_path):
    u = _profile([0.5, 1.25, 0.0, 2.0])
    path = tmp_path / "prof.csv"
    write_profile(u, path)
    v = read_profile(path)
    assert v.grid == u.grid
    np.testing.assert_array_equal(v.values, u.values)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 5.0), min_size=4, max_size=40),
       st.floats(0.01, 0.5))
def test_cut_mass_identity_random(vals, delta):
    u = _profile(vals, h=0.1)
    p = FluxParams(1.0)
    m = total_mass(u)
    if m <= p.j * delta:
        with pytest.raises(MassTooSmall):
            cut(u, delta, p)
        return
    c = cut(u, delta, p)
    assert total_mass(c) == pytest.approx(m - p.j * delta, abs=1e-12)
    # cut never raises the profile anywhere
    assert np.all(c.values <= u.values + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 3.0), min_size=4, max_size=30), st.integers(0, 5))
def test_tails_nonincreasing(vals, _k):
    u = _profile(vals)
    f = tail_at_nodes(u)
    assert np.all(np.diff(f) <= 1e-15)


def test_l1_distance_symmetry():
    u = _profile([1.0, 2.0, 0.0, 0.0])
    v = _profile([0.0, 1.0, 1.0, 0.0])
    assert l1_distance(u, v) == pytest.approx(l1_distance(v, u))
    assert l1_distance(u, u) == 0.0
