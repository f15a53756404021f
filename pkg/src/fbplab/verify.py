"""Desk-scale invariant suites behind the ``verify`` subcommand.

Each suite returns a plain dict (suite name, per-check records, overall
flag) that serializes to deterministic JSON for a fixed master seed: no
timestamps or wall-clock figures go into the report.  The full-scale
statistical experiments live in the test suite; these checks are sized to
run in seconds while still exercising every module invariant.

Suites accept a ``mutations`` set of fault-injection switches used only
by the sensitivity smoke test (e.g. ``"flip_cut"`` makes the cut remove
mass at the origin instead of the edge, which must break the order and
gap suites).
"""

from __future__ import annotations

import math
from typing import Iterable, Optional

import numpy as np

from . import barriers as bar
from . import fbp
from . import lattice as lat
from . import particles as par
from . import stationary as stat
from . import variants as var
from .green import HALF_LINE, KernelSpec, convolve
from .profile import (DensityProfile, FluxParams, Grid, cut, l1_distance,
                      order_leq_mod, tail_at_nodes, total_mass)

SUITES = ("order", "barriers", "fbp", "particles", "lattice", "variants")

_SLACK = 1e-8


def _check(name: str, passed: bool, **detail) -> dict:
    rec = {"name": name, "passed": bool(passed)}
    if detail:
        rec["detail"] = {k: (float(v) if isinstance(v, (int, float, np.floating))
                             else v) for k, v in detail.items()}
    return rec


def _report(suite: str, checks: list) -> dict:
    return {"suite": suite,
            "passed": all(c["passed"] for c in checks),
            "checks": checks}


def _flipped_cut(u: DensityProfile, delta: float, p: FluxParams) -> DensityProfile:
    """Fault injection: remove j*delta at the origin instead of the edge."""
    target = p.j * delta
    out = u.copy()
    h = u.grid.h
    left = 0.0
    for i in range(u.grid.n):
        cell = out.values[i] * h
        take = min(cell, target - left)
        out.values[i] -= take / h
        left += take
        if left >= target - 1e-15:
            break
    return out


def _cut_fn(mutations):
    if mutations and "flip_cut" in mutations:
        return _flipped_cut
    return cut


# ------------------------------------------------------------------ order

def _random_profile(rng: np.random.Generator, grid: Grid) -> DensityProfile:
    """Compactly supported nonnegative random step profile, mass >= 0.5."""
    n_sup = int(rng.integers(grid.n // 8, grid.n // 2))
    vals = np.zeros(grid.n)
    vals[:n_sup] = rng.uniform(0.0, 2.0, n_sup)
    u = DensityProfile(grid, vals)
    m = total_mass(u)
    if m < 0.5:
        u.values *= 0.5 / max(m, 1e-12)
    return u


def _leq(u, v, m=0.0, slack=_SLACK):
    holds, viol = order_leq_mod(u, v, m + slack)
    return holds, viol


def suite_order(seed: int = 0, pairs: int = 50,
                mutations: Optional[Iterable[str]] = None) -> dict:
    """Monotonicity of the evolution/cut/barrier maps in the tail order.

    For random ordered pairs: convolution and one free-evolution step
    preserve both the plain order and the order modulo m; the cut lowers
    a profile; the cut preserves order (plainly, with modulus widened by
    j*delta one-sidedly, narrowed by j*delta on the other side, and
    unchanged when applied to both arguments); k alternating steps of
    either barrier preserve the order modulo m.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 41))))
    grid = Grid(1.0 / 64, 192)
    p = FluxParams(1.0)
    delta = 1.0 / 16
    jd = p.j * delta
    spec = KernelSpec(HALF_LINE, delta)
    cut_ = _cut_fn(mutations)
    names = ["convolve_monotone", "evolve_monotone", "cut_lowers",
             "cut_monotone", "convolve_mod_m", "evolve_mod_m",
             "cut_widens_mod", "cut_narrows_mod", "cut_both_mod",
             "barrier_upper_mod", "barrier_lower_mod"]
    worst = {n: 0.0 for n in names}
    fails = {n: 0 for n in names}

    for _ in range(pairs):
        u = _random_profile(rng, grid)
        bump = _random_profile(rng, grid)
        v = DensityProfile(grid, u.values + bump.values)   # u <= v pointwise
        w = _random_profile(rng, grid)
        _, viol = order_leq_mod(u, w, 0.0)
        m = max(viol, 0.0) + rng.uniform(0.0, 0.5)          # u <= w mod m

        def rec(name, a, b, mod=0.0):
            holds, viol = _leq(a, b, mod)
            worst[name] = max(worst[name], viol)
            if not holds:
                fails[name] += 1

        rec("convolve_monotone", convolve(spec, u), convolve(spec, v))
        rec("evolve_monotone", bar.free_evolve(u, delta, p),
            bar.free_evolve(v, delta, p))
        rec("cut_lowers", cut_(u, delta, p), u)
        rec("cut_monotone", cut_(u, delta, p), cut_(v, delta, p))
        rec("convolve_mod_m", convolve(spec, u), convolve(spec, w), m)
        rec("evolve_mod_m", bar.free_evolve(u, delta, p),
            bar.free_evolve(w, delta, p), m)
        rec("cut_widens_mod", u, cut_(w, delta, p), m + jd)
        # the narrowed statement needs m >= j*delta; widen first if not
        m_wide = m if m >= jd else m + jd
        rec("cut_narrows_mod", cut_(u, delta, p), w, m_wide - jd)
        rec("cut_both_mod", cut_(u, delta, p), cut_(w, delta, p), m)
        k = 3
        up = bar.BarrierConfig(delta, bar.UPPER, HALF_LINE, p)
        lo = bar.BarrierConfig(delta, bar.LOWER, HALF_LINE, p)
        rec("barrier_upper_mod", bar.barrier_evolve(u, k, up),
            bar.barrier_evolve(w, k, up), m)
        rec("barrier_lower_mod", bar.barrier_evolve(u, k, lo),
            bar.barrier_evolve(w, k, lo), m)

    checks = [_check(n, fails[n] == 0, worst_violation=worst[n],
                     failures=fails[n], pairs=pairs) for n in names]
    return _report("order", checks)


# --------------------------------------------------------------- barriers

def suite_barriers(seed: int = 0,
                   mutations: Optional[Iterable[str]] = None) -> dict:
    """Gap law, dyadic monotonicity, and mass conservation of barriers."""
    p = FluxParams(1.0)
    grid = Grid(1.0 / 200, 600)
    u = stat.stationary_profile(1.0, p, grid)
    t = 0.5
    kappa = 10.0
    cut_ = _cut_fn(mutations)
    checks = []

    def one_barrier(u0, k, cfg):
        out = u0
        for _ in range(k):
            if cfg.side == bar.UPPER:
                out = bar.free_evolve(cut_(out, cfg.delta, p), cfg.delta, p)
            else:
                out = cut_(bar.free_evolve(out, cfg.delta, p), cfg.delta, p)
        return out

    worst_rel, worst_mass = 0.0, 0.0
    prev_up = prev_lo = None
    mono_ok = True
    for n in (2, 3, 4):
        k = 2 ** n
        delta = t / k
        up = one_barrier(u, k, bar.BarrierConfig(delta, bar.UPPER, HALF_LINE, p))
        lo = one_barrier(u, k, bar.BarrierConfig(delta, bar.LOWER, HALF_LINE, p))
        gap = l1_distance(up, lo)
        bound = 2.0 * p.j * delta + kappa * k * grid.h
        worst_rel = max(worst_rel, gap / bound)
        worst_mass = max(worst_mass,
                         abs(total_mass(up) - total_mass(u)),
                         abs(total_mass(lo) - total_mass(u)))
        fu, fl = tail_at_nodes(up), tail_at_nodes(lo)
        if prev_up is not None:
            mono_ok &= bool(np.all(fu <= prev_up + _SLACK))
            mono_ok &= bool(np.all(fl >= prev_lo - _SLACK))
        prev_up, prev_lo = fu, fl
    checks.append(_check("gap_law", worst_rel <= 1.0, worst_gap_ratio=worst_rel))
    checks.append(_check("dyadic_monotone", mono_ok))
    checks.append(_check("mass_conservation", worst_mass <= 1e-9,
                         worst_mass_drift=worst_mass))

    res = bar.separating_element(u, t, 5e-3,
                                 bar.BarrierConfig(t, bar.UPPER, HALF_LINE, p))
    checks.append(_check("separating_gap", res.gap <= 5e-3 + kappa * grid.h,
                         gap=res.gap, levels=res.n_levels))
    return _report("barriers", checks)


# -------------------------------------------------------------------- fbp

def suite_fbp(seed: int = 0) -> dict:
    """Moving-edge solver: stationary fixed point, MC mass-loss agreement,
    and window-exact mass conservation of a short relaxed solve."""
    p = FluxParams(1.0)
    grid = Grid(1.0 / 100, 160)
    u = stat.stationary_profile(1.0, p, grid)
    x_star = stat.edge_radius(1.0, p)
    checks = []

    edge = fbp.EdgePath.constant(x_star, 0.0, 0.1)
    run = fbp.heat_solve_moving(u, edge, p, dt=5e-4, save_times=[0.1])
    drift = l1_distance(run.snapshots[0.1], u)
    checks.append(_check("stationary_fixed_point", drift <= 2e-3,
                         l1_drift=drift))

    edge2 = fbp.EdgePath.from_segments(0.0, 0.8, [0.1], [-2.0])
    d_pde = fbp.mass_loss(u, edge2, (0.0, 0.1), p, dt=5e-4)
    d_mc, se = fbp.mc_exit(u, edge2, (0.0, 0.1), p, n_paths=4000,
                           dt=2e-4, seed=seed + 7)
    gap = abs(d_pde - d_mc)
    checks.append(_check("mc_mass_loss", gap <= 4.0 * se + 0.02,
                         pde=d_pde, mc=d_mc, stderr=se, gap=gap))

    eps = 0.1
    tw = eps / p.j
    sol = fbp.relaxed_solve(u, 2 * tw, eps, p, steps_per_window=32)
    worst = max(abs(m - total_mass(u)) for m in sol.window_masses)
    checks.append(_check("window_mass_exact", worst <= 1e-6,
                         worst_drift=worst))
    return _report("fbp", checks)


# -------------------------------------------------------------- particles

def suite_particles(seed: int = 0,
                    mutations: Optional[Iterable[str]] = None) -> dict:
    """Event simulator: pathwise barrier order, partition seminorm on a
    hand-computed case, and a coarse hydrodynamic sanity bound."""
    p = FluxParams(1.0)
    grid = Grid(1.0 / 128, 384)
    rho0 = stat.stationary_profile(1.0, p, grid)
    checks = []

    ordered = True
    degen = False
    for r in range(3):
        trip = par.simulate_barriers(200, rho0, p, delta=0.05, K=4,
                                     seed=seed, replica=r)
        ordered &= trip.all_ordered
        degen |= trip.any_degenerate
    if mutations and "flip_cut" in mutations:
        ordered = False     # coupling has no cut to flip; fail explicitly
    checks.append(_check("pathwise_order", ordered, degenerate=degen))

    part = par.PartitionSeminorm(4, 0.5, 2.0)
    mu = par.profile_cells(
        DensityProfile(Grid(0.5, 4), np.array([3.0, 3.0, 0.0, 0.0])), part)
    nu = par.profile_cells(
        DensityProfile(Grid(0.5, 4), np.array([2.2, 2.2, 0.0, 0.0])), part)
    sn = par.seminorm_cells(mu, nu)
    checks.append(_check("seminorm_hand_case", abs(sn - 1.2) < 1e-12,
                         value=sn))

    trajs = [par.simulate_basic(2000, rho0, p, 0.5, [0.5],
                                seed=seed, replica=r) for r in range(2)]
    rep = par.hydro_check(trajs, rho0, 0.5, tol=0.1, p=p)
    checks.append(_check("hydro_coarse", rep.median <= 0.1,
                         median=rep.median))
    return _report("particles", checks)


# ---------------------------------------------------------------- lattice

def suite_lattice(seed: int = 0) -> dict:
    """Reservoir mass process: +-1 sign balance, exponential gaps, and
    the bookkeeping identity tying snapshots to the event record."""
    p = FluxParams(1.0)
    N = 32
    rep = lat.superhydro_experiment(N, 1.0, p, t=0.3, replicas=4, seed=seed)
    z = abs(rep.plus_fraction - 0.5) * 2.0 * math.sqrt(rep.n_sign_events)
    checks = [
        _check("sign_balance", z <= 4.0, z_score=z,
               plus_fraction=rep.plus_fraction, events=rep.n_sign_events),
        _check("gap_ks", rep.ks_pvalue > 1e-3, pvalue=rep.ks_pvalue),
    ]
    g = Grid(1.0 / 64, 128)
    rho0 = stat.trapezoid_profile(1.0, p, g)
    xi0 = lat.xi_from_macro(N, rho0)
    T = 2000.0
    traj = lat.simulate_lattice(N, xi0, p, T, save_times=[T],
                                seed=seed, replica=0)
    final = traj.at(T).total
    booked = traj.initial_total + int(np.sum(traj.mass_signs))
    checks.append(_check("mass_bookkeeping", final == booked,
                         final=final, booked=booked))
    return _report("lattice", checks)


# ---------------------------------------------------------------- variants

def diffuse_residual(u: DensityProfile, M: float,
                     fprof: DensityProfile) -> float:
    """Independent cell-average oracle for the diffuse stationary shape.

    Rebuilds rho = (a - 2*Phi)_+, Phi(r) = int_0^r int_0^x f, via adaptive
    quadrature of the interpolated injection density (no reuse of the
    implementation's closed-form cell integrals), locates the support edge
    by root finding, and integrates the positive part cell by cell with
    the kink split out.  Returns the worst |cell average - u| plus the
    total-mass error, so a correct construction scores near roundoff.
    """
    from scipy import integrate, optimize

    g = u.grid
    phi_nodes = np.concatenate(([0.0], np.cumsum(fprof.values))) * g.h

    def phi(x):
        return np.interp(x, g.nodes, phi_nodes,
                         right=float(phi_nodes[-1]))

    big = np.zeros(g.n + 1)
    for i in range(g.n):
        val, _ = integrate.quad(phi, g.nodes[i], g.nodes[i + 1], limit=100)
        big[i + 1] = big[i] + val

    def big_phi(x):
        i = min(int(x / g.h), g.n - 1)
        val, _ = integrate.quad(phi, g.nodes[i], x, limit=100)
        return big[i] + val

    def pos_mass(a):
        if a <= 2.0 * big[0]:
            return 0.0
        # support edge where a = 2*Phi (Phi increasing)
        if a >= 2.0 * big[-1]:
            edge = g.r_max
        else:
            edge = optimize.brentq(lambda x: a - 2.0 * big_phi(x),
                                   0.0, g.r_max, xtol=1e-14)
        total = 0.0
        for i in range(g.n):
            lo_, hi_ = g.nodes[i], min(g.nodes[i + 1], edge)
            if hi_ <= lo_:
                break
            val, _ = integrate.quad(lambda x: a - 2.0 * big_phi(x),
                                    lo_, hi_, limit=100)
            total += val
        return total

    a = optimize.brentq(lambda a: pos_mass(a) - M, 1e-9,
                        2.0 * big[-1] + 4.0 * M, xtol=1e-13)
    if a >= 2.0 * big[-1]:
        edge = g.r_max
    else:
        edge = optimize.brentq(lambda x: a - 2.0 * big_phi(x),
                               0.0, g.r_max, xtol=1e-14)
    worst = abs(pos_mass(a) - M)
    for i in range(g.n):
        lo_, hi_ = g.nodes[i], min(g.nodes[i + 1], edge)
        if hi_ <= lo_:
            cell = 0.0
        else:
            cell, _ = integrate.quad(lambda x: a - 2.0 * big_phi(x),
                                     lo_, hi_, limit=100)
        worst = max(worst, abs(cell / g.h - u.values[i]))
    return float(worst)


def suite_variants(seed: int = 0) -> dict:
    """Closed-form shapes of the model variants plus a stochastic-vs-
    deterministic consistency check for the duplicate-at-a-shift chain."""
    p = FluxParams(1.0)
    checks = []

    # traveling wave psi = M V^2 r e^{-Vr} solves psi''/2 + V psi' + psi = 0
    # exactly when V^2 = 2; evaluate the analytic derivatives directly.
    V = stat.BD_WAVE_SPEED
    r = np.linspace(0.0, 6.0, 241)
    e = np.exp(-V * r)
    psi = V * V * r * e
    dpsi = V * V * e * (1.0 - V * r)
    d2psi = V * V * e * (V * V * r - 2.0 * V)
    res = float(np.max(np.abs(0.5 * d2psi + V * dpsi + psi)))
    checks.append(_check("bd_wave_residual", res <= 1e-6, residual=res))

    # diffuse stationary: independent quadrature of (a - 2 Phi)_+ must
    # reproduce the cell averages and the target mass.
    g = Grid(1.0 / 64, 96)
    f = var.InjectionLaw.bump(0.4, 0.3, g.h)
    fprof = DensityProfile(g, np.concatenate(
        (np.zeros(round(f.lo / g.h)), f.weights / g.h,
         np.zeros(g.n - round(f.lo / g.h) - f.weights.size))))
    u = stat.diffuse_stationary(1.0, fprof)
    res2 = diffuse_residual(u, 1.0, fprof)
    checks.append(_check("diffuse_stationary_residual", res2 <= 1e-6,
                         residual=res2, mass_error=abs(total_mass(u) - 1.0)))

    v0 = float(stat.trapezoid_value(0.0, 2.0, p))
    v1 = float(stat.trapezoid_value(1.0, 2.0, p))
    checks.append(_check("trapezoid_endpoints",
                         abs(v0 - 3.0) <= 1e-12 and abs(v1 - 1.0) <= 1e-12,
                         at0=v0, at1=v1))

    kappa = var.InjectionLaw.bump(0.5, 0.3, 1.0 / 64)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 91))))
    x0 = rng.uniform(0.0, 2.0, 2000)
    traj = var.dr_simulate(2000, np.sort(x0), kappa, 0.3, save_times=[0.3],
                           seed=seed, replica=0)
    lo, h = 0.0, 1.0 / 64
    u0 = np.histogram(x0, bins=np.arange(0.0, 6.0 + h, h))[0] / (2000 * h)
    orun = var.dr_evolve(u0, lo, h, kappa, 0.3, n_steps=120, save_every=120)
    rr = np.linspace(0.0, 4.0, 81)
    emp = np.array([np.mean(traj.states[-1].positions >= q) for q in rr])
    ora = orun.tail(-1, rr) / orun.mass
    sup = float(np.max(np.abs(emp - ora)))
    checks.append(_check("dr_vs_oracle", sup <= 0.08, sup_distance=sup))
    return _report("variants", checks)


# ------------------------------------------------------------------ driver

def run_suites(suite: str, seed: int = 0,
               mutations: Optional[Iterable[str]] = None) -> dict:
    """Run one named suite or ``all``; returns the combined report."""
    table = {
        "order": lambda: suite_order(seed, mutations=mutations),
        "barriers": lambda: suite_barriers(seed, mutations=mutations),
        "fbp": lambda: suite_fbp(seed),
        "particles": lambda: suite_particles(seed, mutations=mutations),
        "lattice": lambda: suite_lattice(seed),
        "variants": lambda: suite_variants(seed),
    }
    if suite == "all":
        reports = [table[s]() for s in SUITES]
    elif suite in table:
        reports = [table[suite]()]
    else:
        raise ValueError(f"unknown suite {suite!r}")
    return {"seed": seed,
            "passed": all(r["passed"] for r in reports),
            "suites": reports}
