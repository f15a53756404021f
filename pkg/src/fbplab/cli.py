"""Command-line harness: configuration, dispatch, seeding, persistence.

Every run writes its outputs plus a ``manifest.json`` into a run
directory.  Numeric CSV fields use 17 significant digits so hashing the
files is a sound reproducibility check; re-running with the same config
and master seed reproduces every CSV byte for byte (the manifest's
wall-clock metric is the one field allowed to differ).

Configuration is JSON.  ``--config FILE`` loads it verbatim (the file
must then be complete); without it each subcommand starts from built-in
defaults.  ``--set dotted.path=value`` overrides individual keys either
way, with values parsed as JSON when possible.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import fbp
from . import barriers as bar
from . import lattice as lat
from . import particles as par
from . import stationary as stat
from . import variants as var
from . import verify as ver
from .errors import ConfigInvalid, FbpLabError
from .green import HALF_LINE
from .profile import (DensityProfile, FluxParams, Grid, total_mass,
                      write_profile)

log = logging.getLogger("fbplab")

_FMT = "%.17g"


# ------------------------------------------------------------ configuration

DEFAULTS = {
    "barriers": {
        "flux": {"j": 1.0},
        "grid": {"h": 1.0 / 400, "n": 1200},
        "profile": {"kind": "stationary", "M": 1.0},
        "t": 1.0,
        "tol": 1e-3,
        "seed": 0,
    },
    "solve-fbp": {
        "flux": {"j": 1.0},
        "grid": {"h": 1.0 / 200, "n": 600},
        "profile": {"kind": "stationary", "M": 1.0, "scale": 1.2},
        "eps": 0.05,
        "T": 0.5,
        "steps_per_window": 64,
        "n_snapshots": 5,
        "seed": 0,
    },
    "simulate-particles": {
        "flux": {"j": 1.0},
        "N": 10000,
        "profile": {"kind": "stationary", "M": 1.0},
        "T": 0.5,
        "n_saves": 5,
        "replicas": 4,
        "seed": 0,
        "tails": {"r_max": 2.0, "n_r": 101},
        "barriers": {"enabled": True, "delta": 0.05, "K": 4, "N": 500},
    },
    "simulate-lattice": {
        "flux": {"j": 1.0},
        "N": 64,
        "profile": {"kind": "trapezoid", "M": 1.0},
        "T": 100000.0,
        "n_saves": 5,
        "seed": 0,
    },
    "mass-process": {
        "flux": {"j": 1.0},
        "N": 64,
        "profile": {"kind": "trapezoid", "M": 1.0},
        "t": 0.5,
        "replicas": 8,
        "seed": 0,
    },
    "variants": {
        "flux": {"j": 1.0},
        "mode": "bd",
        "N": 2000,
        "T": 1.0,
        "n_saves": 5,
        "replicas": 2,
        "seed": 0,
        "tails": {"r_max": 6.0, "n_r": 121},
        "diffuse": {"M": 1.0, "f_center": 0.4, "f_width": 0.3},
        "bd": {"M": 1.0},
        "dr": {"kappa_center": 0.5, "kappa_width": 0.3, "x_max": 2.0},
    },
    "verify": {
        "suite": "all",
        "seed": 0,
        "mutations": [],
    },
}


def _set_path(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigInvalid(f"{dotted}: {k} is not a section")
    node[keys[-1]] = value


def _get(cfg: dict, dotted: str):
    node = cfg
    for k in dotted.split("."):
        if not isinstance(node, dict) or k not in node:
            raise ConfigInvalid(f"missing required field {dotted}")
        node = node[k]
    return node


def _require_positive(cfg: dict, dotted: str) -> float:
    val = _get(cfg, dotted)
    try:
        val = float(val)
    except (TypeError, ValueError):
        raise ConfigInvalid(f"{dotted} must be a number, got {val!r}")
    if not val > 0:
        raise ConfigInvalid(f"{dotted} must be positive, got {val}")
    return val


def load_config(subcommand: str, config_path=None, overrides=()) -> dict:
    if config_path is None:
        cfg = copy.deepcopy(DEFAULTS[subcommand])
    else:
        with open(config_path) as fh:
            cfg = json.load(fh)
    for item in overrides:
        if "=" not in item:
            raise ConfigInvalid(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        _set_path(cfg, key, val)
    return cfg


def validate(subcommand: str, cfg: dict) -> None:
    """Field checks; ConfigInvalid messages name the dotted key."""
    if subcommand != "verify":
        _require_positive(cfg, "flux.j")
    if subcommand in ("barriers", "solve-fbp"):
        _require_positive(cfg, "grid.h")
        n = _get(cfg, "grid.n")
        if not (isinstance(n, int) and n > 0):
            raise ConfigInvalid(f"grid.n must be a positive integer, got {n}")
        _require_positive(cfg, "profile.M")
    if subcommand == "barriers":
        _require_positive(cfg, "t")
        _require_positive(cfg, "tol")
    if subcommand == "solve-fbp":
        _require_positive(cfg, "eps")
        _require_positive(cfg, "T")
    if subcommand in ("simulate-particles", "simulate-lattice",
                      "mass-process", "variants"):
        N = _get(cfg, "N")
        if not (isinstance(N, int) and N > 0):
            raise ConfigInvalid(f"N must be a positive integer, got {N}")
    if subcommand == "variants" and _get(cfg, "mode") not in (
            "diffuse", "bd", "dr"):
        raise ConfigInvalid(f"mode must be diffuse|bd|dr, got {cfg['mode']}")
    if subcommand == "verify" and _get(cfg, "suite") not in (
            ver.SUITES + ("all",)):
        raise ConfigInvalid(f"suite must be one of {ver.SUITES + ('all',)}")


# --------------------------------------------------------------- run record

def _threads() -> int:
    try:
        return max(1, int(os.environ.get("FBPLAB_THREADS", "4")))
    except ValueError:
        return 4


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class RunRecord:
    """Collects outputs and metrics of one run; serialized as manifest.json."""

    def __init__(self, subcommand: str, cfg: dict, out_dir: Path, seed: int):
        self.subcommand = subcommand
        self.cfg = cfg
        self.out_dir = out_dir
        self.seed = seed
        self.files: list = []
        self.metrics: dict = {}
        self.replica_seeds: dict = {}
        blob = json.dumps({"cmd": subcommand, "cfg": cfg, "seed": seed},
                          sort_keys=True).encode()
        self.run_id = hashlib.sha256(blob).hexdigest()[:12]
        self._t0 = time.monotonic()
        out_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.files.append(name)
        return p

    def note_replica(self, replica: int) -> None:
        key = np.random.SeedSequence((self.seed, replica))
        self.replica_seeds[str(replica)] = list(map(int, key.entropy)) \
            if isinstance(key.entropy, tuple) else [self.seed, replica]

    def csv(self, name: str, header, rows) -> Path:
        p = self.path(name)
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_FMT % v if isinstance(v, float) else v
                            for v in row])
        return p

    def save(self) -> Path:
        self.metrics["wall_clock_s"] = round(time.monotonic() - self._t0, 3)
        manifest = {
            "run_id": self.run_id,
            "subcommand": self.subcommand,
            "config": self.cfg,
            "master_seed": self.seed,
            "replica_seeds": self.replica_seeds,
            "files": {n: _sha256(self.out_dir / n) for n in self.files},
            "metrics": self.metrics,
        }
        p = self.out_dir / "manifest.json"
        with open(p, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return p


def _initial_profile(cfg: dict, p: FluxParams, grid: Grid) -> DensityProfile:
    kind = _get(cfg, "profile.kind")
    M = _require_positive(cfg, "profile.M")
    if kind == "stationary":
        u = stat.stationary_profile(M, p, grid)
    elif kind == "trapezoid":
        u = stat.trapezoid_profile(M, p, grid)
    elif kind == "uniform":
        vals = np.where(grid.centers < 1.0, M, 0.0)
        u = DensityProfile(grid, vals)
    else:
        raise ConfigInvalid(f"profile.kind must be "
                            f"stationary|trapezoid|uniform, got {kind!r}")
    scale = cfg.get("profile", {}).get("scale")
    if scale is not None:
        u = DensityProfile(grid, u.values * float(scale))
    return u


def _plot_series(rec: RunRecord, name: str, xs, series, xlabel, ylabel):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, ys in series:
        ax.plot(xs, ys, label=str(label))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(rec.path(name), dpi=120)
    plt.close(fig)


# -------------------------------------------------------------- subcommands

def cmd_barriers(cfg: dict, rec: RunRecord, plot: bool) -> int:
    p = FluxParams(_require_positive(cfg, "flux.j"))
    grid = Grid(_get(cfg, "grid.h"), _get(cfg, "grid.n"))
    u = _initial_profile(cfg, p, grid)
    t, tol = _get(cfg, "t"), _get(cfg, "tol")
    res = bar.separating_element(
        u, t, tol, bar.BarrierConfig(t, bar.UPPER, HALF_LINE, p))
    rec.csv("levels.csv", ["level", "delta", "gap_L1", "gap_sup", "mass"],
            [(int(n), float(d), float(g1), float(gs), float(m))
             for (n, d, gs, g1, m) in res.levels])
    prof = rec.path("separating_profile.csv")
    rec.files.append("separating_profile.json")
    write_profile(res.profile, prof)
    rec.metrics["n_levels"] = res.n_levels
    rec.metrics["final_gap"] = res.gap
    if plot:
        _plot_series(rec, "levels.png",
                     [lv[0] for lv in res.levels],
                     [("sup gap", [lv[2] for lv in res.levels]),
                      ("L1 gap", [lv[3] for lv in res.levels])],
                     "dyadic level", "barrier gap")
    log.info("barriers: %d levels, final gap %.3e", res.n_levels, res.gap)
    return 0


def cmd_solve_fbp(cfg: dict, rec: RunRecord, plot: bool) -> int:
    p = FluxParams(_require_positive(cfg, "flux.j"))
    grid = Grid(_get(cfg, "grid.h"), _get(cfg, "grid.n"))
    u0 = _initial_profile(cfg, p, grid)
    eps, T = _get(cfg, "eps"), _get(cfg, "T")
    n_snap = int(cfg.get("n_snapshots", 5))
    save = list(np.linspace(0.0, T, n_snap + 1)[1:])
    sol = fbp.relaxed_solve(u0, T, eps, p,
                            steps_per_window=int(_get(cfg, "steps_per_window")),
                            save_times=save)
    run = sol.run
    m0 = run.mass[0]
    rows = [(float(t), float(m), float(m0 + p.j * t - m), float(lam))
            for t, m, lam in zip(run.times, run.mass, run.lam)]
    rec.csv("mass_series.csv", ["t", "m", "delta", "lam"], rows)
    vrows = []
    for k, v in enumerate(sol.window_velocities):
        tk = k * sol.window
        vrows.append((float(tk), float(sol.edge.at(tk)), float(v)))
    vrows.append((float(T), float(sol.edge.at(T)),
                  float(sol.window_velocities[-1])))
    rec.csv("edge.csv", ["t", "X", "V"], vrows)
    for i, t in enumerate(save):
        name = f"profile_{i:03d}.csv"
        write_profile(run.snapshots[t], rec.path(name))
        rec.files.append(name.replace(".csv", ".json"))
    rec.metrics["windows"] = len(sol.window_velocities)
    rec.metrics["final_mass"] = float(run.mass[-1])
    if plot:
        _plot_series(rec, "mass.png", [r[0] for r in rows],
                     [("m(t)", [r[1] for r in rows])], "t", "mass")
        _plot_series(rec, "edge.png", [r[0] for r in vrows],
                     [("X(t)", [r[1] for r in vrows])], "t", "edge")
    log.info("solve-fbp: %d windows, final mass %.6f",
             len(sol.window_velocities), run.mass[-1])
    return 0


def cmd_simulate_particles(cfg: dict, rec: RunRecord, plot: bool) -> int:
    p = FluxParams(_require_positive(cfg, "flux.j"))
    N = _get(cfg, "N")
    grid = Grid(1.0 / 128, 384)
    rho0 = _initial_profile(cfg, p, grid)
    T = _require_positive(cfg, "T")
    seed = int(_get(cfg, "seed"))
    replicas = int(_get(cfg, "replicas"))
    saves = list(np.linspace(0.0, T, int(_get(cfg, "n_saves")) + 1)[1:])
    r_grid = np.linspace(0.0, _get(cfg, "tails.r_max"),
                         int(_get(cfg, "tails.n_r")))

    def one(replica):
        return par.simulate_basic(N, rho0, p, T, saves,
                                  seed=seed, replica=replica)

    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        trajs = list(ex.map(one, range(replicas)))
    for r in range(replicas):
        rec.note_replica(r)
    rows = []
    for r, traj in enumerate(trajs):
        for t in saves:
            frac = par.empirical_tail(traj.at(t), r_grid)
            rows.extend((float(t), float(q), float(f), r)
                        for q, f in zip(r_grid, frac))
    rec.csv("empirical_tails.csv", ["t", "r", "fraction", "replica"], rows)

    bcfg = cfg.get("barriers", {})
    if bcfg.get("enabled"):
        flags = []
        for r in range(replicas):
            trip = par.simulate_barriers(
                int(bcfg.get("N", 500)), rho0, p,
                delta=float(bcfg.get("delta", 0.05)),
                K=int(bcfg.get("K", 4)), seed=seed, replica=r)
            for w in trip.windows:
                flags.append((r, int(round(w.t / trip.delta)), float(w.t),
                              int(w.order_lower), int(w.order_upper),
                              int(w.degenerate)))
        rec.csv("barrier_flags.csv",
                ["replica", "window", "t", "order_lower", "order_upper",
                 "degenerate"], flags)
        rec.metrics["barrier_windows_ordered"] = int(
            all(f[3] and f[4] for f in flags))
    rec.metrics["replicas"] = replicas
    if plot:
        last = saves[-1]
        series = [(f"replica {r}",
                   par.empirical_tail(trajs[r].at(last), r_grid))
                  for r in range(min(replicas, 4))]
        _plot_series(rec, "tails.png", r_grid, series, "r", "tail fraction")
    return 0


def cmd_simulate_lattice(cfg: dict, rec: RunRecord, plot: bool) -> int:
    p = FluxParams(_require_positive(cfg, "flux.j"))
    N = _get(cfg, "N")
    g = Grid(1.0 / 256, 512)
    rho0 = _initial_profile(cfg, p, g)
    xi0 = lat.xi_from_macro(N, rho0)
    T = _require_positive(cfg, "T")
    seed = int(_get(cfg, "seed"))
    saves = list(np.linspace(0.0, T, int(_get(cfg, "n_saves")) + 1)[1:])
    traj = lat.simulate_lattice(N, xi0, p, T, saves, seed=seed, replica=0)
    rec.note_replica(0)
    occ = []
    mass = []
    for t in saves:
        st = traj.at(t)
        mass.append((float(t), int(st.total)))
        occ.extend((float(t), int(x), int(v))
                   for x, v in enumerate(st.xi))
    rec.csv("occupancy.csv", ["t", "x", "xi"], occ)
    rec.csv("mass.csv", ["t", "mass"], mass)
    rec.metrics["bulk_events"] = int(traj.n_bulk_events)
    rec.metrics["reservoir_events"] = int(traj.mass_times.size)
    if plot:
        st = traj.at(saves[-1])
        _plot_series(rec, "occupancy.png", np.arange(st.xi.size),
                     [("xi", st.xi)], "site", "occupancy")
    return 0


def cmd_mass_process(cfg: dict, rec: RunRecord, plot: bool) -> int:
    p = FluxParams(_require_positive(cfg, "flux.j"))
    N = _get(cfg, "N")
    M = _require_positive(cfg, "profile.M")
    t = _require_positive(cfg, "t")
    seed = int(_get(cfg, "seed"))
    replicas = int(_get(cfg, "replicas"))
    rep = lat.superhydro_experiment(N, M, p, t, replicas, seed=seed)
    for r in range(replicas):
        rec.note_replica(r)
    g = Grid(1.0 / 256, 512)
    xi0 = lat.xi_from_macro(N, stat.trapezoid_profile(M, p, g))
    traj = lat.simulate_lattice(N, xi0, p, (N ** 3) * t,
                                save_times=[(N ** 3) * t],
                                seed=seed, replica=0)
    times, values = lat.total_mass_series(traj)
    rec.csv("mass_series.csv", ["t", "mass"],
            [(float(a), int(b)) for a, b in zip(times, values)])
    stats = {
        "N": N, "M": M, "t": t, "replicas": replicas,
        "plus_fraction": rep.plus_fraction,
        "n_sign_events": rep.n_sign_events,
        "ks_statistic": rep.ks_statistic,
        "ks_pvalue": rep.ks_pvalue,
        "sample_variance": rep.sample_variance,
        "oracle_variance": rep.oracle_variance,
        "variance_rel_error": rep.variance_rel_error,
    }
    pth = rec.path("mass_stats.json")
    with open(pth, "w") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    rec.metrics["n_sign_events"] = rep.n_sign_events
    if plot:
        _plot_series(rec, "mass.png", times / N ** 3,
                     [("|xi|/N", values / N)], "macroscopic t", "mass")
    return 0


def cmd_variants(cfg: dict, rec: RunRecord, plot: bool) -> int:
    p = FluxParams(_require_positive(cfg, "flux.j"))
    mode = _get(cfg, "mode")
    N = _get(cfg, "N")
    T = _require_positive(cfg, "T")
    seed = int(_get(cfg, "seed"))
    replicas = int(_get(cfg, "replicas"))
    saves = list(np.linspace(0.0, T, int(_get(cfg, "n_saves")) + 1)[1:])
    r_grid = np.linspace(0.0, _get(cfg, "tails.r_max"),
                         int(_get(cfg, "tails.n_r")))
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence((seed, 777))))
    g = Grid(1.0 / 64, 384)

    def run_one(replica):
        if mode == "diffuse":
            f = var.InjectionLaw.bump(_get(cfg, "diffuse.f_center"),
                                      _get(cfg, "diffuse.f_width"), g.h)
            rho0 = stat.stationary_profile(_get(cfg, "diffuse.M"), p, g)
            return var.diffuse_simulate(N, rho0, f, T, saves,
                                        seed=seed, replica=replica)
        if mode == "bd":
            rho0 = stat.bd_wave(_get(cfg, "bd.M"), g)
            return var.bd_simulate(N, rho0, T, saves,
                                   seed=seed, replica=replica)
        kappa = var.InjectionLaw.bump(_get(cfg, "dr.kappa_center"),
                                      _get(cfg, "dr.kappa_width"), g.h)
        x0 = np.sort(rng.uniform(0.0, _get(cfg, "dr.x_max"), N))
        return var.dr_simulate(N, x0, kappa, T, saves,
                               seed=seed, replica=replica)

    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        trajs = list(ex.map(run_one, range(replicas)))
    for r in range(replicas):
        rec.note_replica(r)
    rows = []
    for r, traj in enumerate(trajs):
        for t in saves:
            x = traj.at(t).positions
            frac = np.array([np.mean(x >= q) for q in r_grid])
            rows.extend((float(t), float(q), float(f), r)
                        for q, f in zip(r_grid, frac))
    rec.csv("empirical_tails.csv", ["t", "r", "fraction", "replica"], rows)
    rec.metrics["mode"] = mode
    if mode == "bd" and T > 0.2:
        speeds = [var.median_speed(traj, saves[0], saves[-1])
                  for traj in trajs]
        rec.metrics["median_speed"] = float(np.mean(speeds))
    if plot:
        series = [(f"replica {r}",
                   [np.mean(trajs[r].at(saves[-1]).positions >= q)
                    for q in r_grid]) for r in range(min(replicas, 4))]
        _plot_series(rec, "tails.png", r_grid, series, "r", "tail fraction")
    return 0


def cmd_verify(cfg: dict, rec: RunRecord, plot: bool) -> int:
    suite = _get(cfg, "suite")
    seed = int(_get(cfg, "seed"))
    muts = cfg.get("mutations", []) or []
    report = ver.run_suites(suite, seed=seed, mutations=tuple(muts))
    pth = rec.path("verify_report.json")
    with open(pth, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    n_checks = sum(len(s["checks"]) for s in report["suites"])
    rec.metrics["checks"] = n_checks
    rec.metrics["passed"] = bool(report["passed"])
    log.info("verify %s: %d checks, %s", suite, n_checks,
             "PASS" if report["passed"] else "FAIL")
    return 0 if report["passed"] else 2


# ------------------------------------------------------------------- driver

_COMMANDS = {
    "barriers": cmd_barriers,
    "solve-fbp": cmd_solve_fbp,
    "simulate-particles": cmd_simulate_particles,
    "simulate-lattice": cmd_simulate_lattice,
    "mass-process": cmd_mass_process,
    "variants": cmd_variants,
    "verify": cmd_verify,
}

# convenience flags per subcommand, mapped onto dotted config keys
_FLAGS = {
    "barriers": {"t": "t", "M": "profile.M", "tol": "tol", "j": "flux.j",
                 "seed": "seed"},
    "solve-fbp": {"eps": "eps", "T": "T", "M": "profile.M", "j": "flux.j",
                  "seed": "seed"},
    "simulate-particles": {"N": "N", "T": "T", "seed": "seed",
                           "replicas": "replicas", "j": "flux.j"},
    "simulate-lattice": {"N": "N", "T": "T", "seed": "seed", "j": "flux.j"},
    "mass-process": {"N": "N", "t": "t", "seed": "seed",
                     "replicas": "replicas", "j": "flux.j"},
    "variants": {"mode": "mode", "N": "N", "T": "T", "seed": "seed",
                 "replicas": "replicas", "j": "flux.j"},
    "verify": {"seed": "seed"},
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fbplab",
        description="Numerical laboratory for a free-boundary heat "
                    "equation with current reservoirs.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, default=None,
                        help="JSON config (replaces built-in defaults)")
        sp.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE", dest="overrides",
                        help="dotted-path config override")
        sp.add_argument("--out", type=Path, default=None,
                        help="run directory (default runs/<subcommand>)")
        sp.add_argument("--plot", action="store_true",
                        help="also render PNG figures next to the CSVs")
        if name == "verify":
            sp.add_argument("suite", nargs="?", default=None,
                            choices=ver.SUITES + ("all",))
        for flag, dotted in _FLAGS[name].items():
            sp.add_argument(f"--{flag}", default=None, dest=f"flag_{flag}")
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags; keep 2 for failed acceptance only
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    name = args.subcommand
    overrides = list(args.overrides)
    for flag, dotted in _FLAGS[name].items():
        val = getattr(args, f"flag_{flag}")
        if val is not None:
            overrides.append(f"{dotted}={val}")
    if name == "verify" and args.suite is not None:
        overrides.append(f"suite={args.suite}")
    try:
        cfg = load_config(name, args.config, overrides)
        validate(name, cfg)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out = args.out if args.out is not None else Path("runs") / name
    seed = int(_get(cfg, "seed")) if "seed" in cfg else 0
    rec = RunRecord(name, cfg, out, seed)
    try:
        status = _COMMANDS[name](cfg, rec, args.plot)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FbpLabError as exc:
        print(f"{name} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    rec.save()
    print(f"{name}: run {rec.run_id} -> {rec.out_dir} "
          f"({len(rec.files)} files)")
    return status


if __name__ == "__main__":
    sys.exit(main())
