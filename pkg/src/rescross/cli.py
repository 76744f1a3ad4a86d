"""Command line front end: ``rescross <command> [--config FILE] [--out DIR] [--threads N]``.

Commands write CSV files (angles in degrees, times in years) plus a
``manifest.json`` echoing the configuration and a hash of the inputs.
Identical configurations give byte-identical CSV files.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config, reference_text
from .diagnostics import UnimodularChart, coefficients_one, coefficients_two, jump_delta_scan, kbar, partial_sum
from .errors import ConfigError, RescrossError
from .geometry import TwoOrbitConfig, critical_points, local_minima, min_distance
from .hamiltonian import averaged_term, resonant_coeffs_all
from .kepler import DAYS_PER_YEAR, TWO_PI, ResonantState, resonant_to_keplerian
from .nbody import EnsembleSpec, ensemble_stats, integrate_ensemble, trajectory_table, band_coverage
from .propagator import SecularField, propagate_generalized
from .scenarios import state_from_elements

DEG = 180.0 / math.pi
ELEMENT_COLUMNS = ["a", "e", "i_deg", "Omega_deg", "omega_deg", "sigma_deg"]
ELEMENT_UNITS = ["au", "1", "deg", "deg", "deg", "deg"]


def _fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path, columns, units, rows):
    """CSV with a ``# units:`` line above the header row."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("# units: " + ", ".join(f"{c}={u}" for c, u in zip(columns, units)) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def write_manifest(out: Path, command: str, cfg: RunConfig, files, extra=None):
    inputs = [cfg.table_path()] if cfg.table_path() else []
    data = {
        "command": command,
        "version": __version__,
        "content_hash": cfg.content_hash(inputs),
        "config": cfg.as_dict(),
        "outputs": sorted(Path(f).name for f in files),
    }
    if extra:
        data.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


# --------------------------------------------------------------------------
# Shared set-up
# --------------------------------------------------------------------------

class Setup:
    """Ephemeris, field and initial state built from a configuration."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.k = cfg.constants.k
        self.spec = cfg.spec
        self.eph = cfg.ephemeris_source()
        self.names = [self.eph.planets[self.eph.index(n)] for n in cfg.planets.names]
        self.resonant = self.eph.planets[self.eph.index(cfg.planets.resonant)]
        self.jr = self.eph.index(self.resonant)
        self.asteroid = cfg.asteroid_elements()

    def field(self, n_max=None):
        nf = self.cfg.normal_form_config()
        if n_max is not None:
            nf = replace(nf, n_max=n_max)
        return SecularField(nf, self.eph, self.names, self.resonant, self.k)

    def ell5(self, t):
        return float(self.eph.unwrapped_anomaly(self.jr, t))

    def initial_state(self) -> ResonantState:
        return state_from_elements(self.asteroid, self.ell5(self.cfg.t0), self.spec, self.k)

    def pair(self, name, t, E=None):
        j = self.eph.index(name)
        return TwoOrbitConfig(self.asteroid if E is None else E, self.eph.elements(j, t), float(self.eph.mu[j]))


def _series_rows(setup: Setup, sol, field, times):
    """``t_yr``, elements, ``sigma`` and signed distances on ``times``."""
    rows, sig = [], []
    for t in times:
        y = sol(t)
        st = ResonantState.from_array(y, sol.S5)
        E = resonant_to_keplerian(st, setup.spec, setup.k)
        dts = []
        for pos in range(len(field.idx)):
            d, dt, _ = min_distance(field.config(pos, t, y))
            dts.append((d, dt))
        closest = min(dts, key=lambda x: x[0])[1]
        sig.append(y[3])
        rows.append([(t - setup.cfg.t0) / DAYS_PER_YEAR, E.a, E.e, E.I * DEG, E.Omega * DEG,
                     E.omega * DEG, None, closest] + [x[1] for x in dts])
    sig = np.unwrap(np.array(sig))
    for r, s in zip(rows, sig):
        r[6] = s * DEG
    return rows


def _event_rows(setup: Setup, sol):
    rows = []
    for ev in sol.events:
        sc = ev.sigma_c * DEG if ev.sigma_c is not None else float("nan")
        rows.append([(ev.t_c - setup.cfg.t0) / DAYS_PER_YEAR, ev.planet, ev.h, sc] + list(ev.diff))
    return rows


SERIES_COLUMNS = ["t_yr", "a", "e", "i_deg", "Omega_deg", "omega_deg", "sigma_deg", "dtilde_min_au"]
SERIES_UNITS = ["yr", "au", "1", "deg", "deg", "deg", "deg", "au"]
EVENT_COLUMNS = ["t_c", "planet", "h", "sigma_c_deg", "diff_S", "diff_G", "diff_Z", "diff_g", "diff_z"]
EVENT_UNITS = ["yr", "-", "-", "deg", "1/day", "1/day", "1/day", "au^2/day^2", "au^2/day^2"]


def run_secular(setup: Setup, n_max=None):
    field = setup.field(n_max)
    sol = propagate_generalized(field, setup.initial_state(), setup.cfg.t0, setup.cfg.t1,
                                setup.cfg.integrator_config())
    return field, sol


def _write_series(out, name, setup, field, sol, times):
    cols = SERIES_COLUMNS + [f"dtilde_{n}_au" for n in field.names]
    units = SERIES_UNITS + ["au"] * len(field.names)
    return write_csv(out / name, cols, units, _series_rows(setup, sol, field, times))


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_propagate(cfg: RunConfig, out: Path, threads: int = 1):
    setup = Setup(cfg)
    field, sol = run_secular(setup)
    files = [_write_series(out, "series.csv", setup, field, sol, cfg.output_times()),
             write_csv(out / "events.csv", EVENT_COLUMNS, EVENT_UNITS, _event_rows(setup, sol))]
    files.append(write_manifest(out, "propagate", cfg, files,
                                {"events": len(sol.events), "steps": len(sol.steps)}))
    return files


def _member_rows(stats_t, table, t0):
    rows = []
    for m, arr in enumerate(table):
        for t, r in zip(stats_t, arr):
            rows.append([m, (t - t0) / DAYS_PER_YEAR, r[0], r[1], r[2] * DEG, r[3] * DEG, r[4] * DEG,
                         r[5] * DEG])
    return rows


def cmd_compare(cfg: RunConfig, out: Path, threads: int = 1):
    setup = Setup(cfg)
    times = cfg.output_times()
    field, sol = run_secular(setup)
    en = cfg.ensemble
    spec = EnsembleSpec(setup.spec, count=en.count, phase_step=en.phase_step_deg / DEG)
    traj = integrate_ensemble(setup.asteroid, cfg.t0, cfg.t1, setup.eph, spec, setup.resonant,
                              planets=setup.names, tol=en.tol, t_out=times, k=setup.k,
                              batch=en.batch, workers=threads)
    table = trajectory_table(traj)
    stats = ensemble_stats(table, times)
    # bring every member's angles to the branch used by the statistics
    X = np.array(table)
    for c in (3, 4, 5):
        col = np.unwrap(X[:, :, c], axis=1)
        X[:, :, c] = col - TWO_PI * np.round((col[:, :1] - col[0, 0]) / TWO_PI)
    series = _series_rows(setup, sol, field, times)
    sig = np.array([r[6] for r in series]) / DEG
    sig = sig - TWO_PI * np.round((sig[0] - stats.mean[0, 5]) / TWO_PI)
    for r, s in zip(series, sig):
        r[6] = s * DEG
    cols = SERIES_COLUMNS + [f"dtilde_{n}_au" for n in field.names]
    units = SERIES_UNITS + ["au"] * len(field.names)
    tyr = (times - cfg.t0) / DAYS_PER_YEAR
    scale = np.array([1, 1, DEG, DEG, DEG, DEG])
    files = [
        write_csv(out / "longterm.csv", cols, units, series),
        write_csv(out / "events.csv", EVENT_COLUMNS, EVENT_UNITS, _event_rows(setup, sol)),
        write_csv(out / "ensemble_mean.csv", ["t_yr"] + ELEMENT_COLUMNS, ["yr"] + ELEMENT_UNITS,
                  [[t] + list(m * scale) for t, m in zip(tyr, stats.mean)]),
        write_csv(out / "ensemble_std.csv", ["t_yr"] + ELEMENT_COLUMNS, ["yr"] + ELEMENT_UNITS,
                  [[t] + list(s * scale) for t, s in zip(tyr, stats.std)]),
        write_csv(out / "members.csv", ["member", "t_yr"] + ELEMENT_COLUMNS, ["-", "yr"] + ELEMENT_UNITS,
                  _member_rows(times, X, cfg.t0)),
    ]
    a_sec = np.array([r[1] for r in series])
    coverage = {"a": band_coverage(a_sec, stats, 0), "sigma": band_coverage(sig, stats, 5)}
    files.append(write_manifest(out, "compare", cfg, files,
                                {"events": len(sol.events), "members": en.count,
                                 "band_coverage": coverage}))
    return files


def cmd_crossings(cfg: RunConfig, out: Path, threads: int = 1):
    setup = Setup(cfg)
    rows = []
    for name in setup.names:
        pts = critical_points(setup.pair(name, cfg.t0))
        for h, mp in enumerate(pts):
            rows.append([name, h, mp.V[0] * DEG, mp.V[1] * DEG, mp.d, mp.d_tilde, mp.det_A, mp.morse_index])
    files = [write_csv(out / "crossings.csv",
                       ["planet", "h", "v_h", "vp_h", "d_h", "d_tilde", "detA", "morse_index"],
                       ["-", "-", "deg", "deg", "au", "au", "au^2", "-"], rows)]
    files.append(write_manifest(out, "crossings", cfg, files))
    return files


def cmd_coeffs(cfg: RunConfig, out: Path, threads: int = 1):
    setup = Setup(cfg)
    quad = cfg.quadrature()
    n_max = cfg.normal_form.n_max
    rows = []
    for name in setup.names:
        pair = setup.pair(name, cfg.t0)
        mins = local_minima(pair)
        avg = averaged_term(pair, quad, minima=mins)
        rows.append([name, 0, avg, -setup.k**2 * pair.mu_prime * avg, float("nan"), float("nan")])
        if name == setup.resonant and n_max > 0:
            Ic, Is = resonant_coeffs_all(pair, setup.spec, n_max, quad, minima=mins, k=setup.k)
            for n in range(1, n_max + 1):
                rows.append([name, n, float("nan"), float("nan"), Ic[n - 1], Is[n - 1]])
    cols = ["planet", "n", "avg_inv_d", "H1bar", "I_c", "I_s"]
    units = ["-", "-", "1/au", "au^2/day^2", "rad^2/au", "rad^2/au"]
    path = write_csv(out / "coeffs.csv", cols, units, rows)
    sys.stdout.write(path.read_text())
    return [path, write_manifest(out, "coeffs", cfg, [path])]


def cmd_diagnose(cfg: RunConfig, out: Path, threads: int = 1):
    setup = Setup(cfg)
    dg = cfg.diagnose
    name = setup.eph.planets[setup.eph.index(dg.planet)] if dg.planet else setup.resonant
    pair = setup.pair(name, cfg.t0)
    chart = UnimodularChart.from_resonance(setup.spec.h_ast, setup.spec.h_pl)
    mins = local_minima(pair)
    sigma = np.linspace(0.0, TWO_PI, dg.sigma_samples)
    Ns = sorted(set(dg.N))
    top = max(Ns)
    if dg.procedure.upper() == "I":
        c = coefficients_one(pair, chart, top, mins)
    else:
        c = coefficients_two(pair, chart, top, mins)
    kb = kbar(sigma, pair, chart, mins)
    cols = ["sigma_deg", "kbar"] + [f"K_{n}" for n in Ns]
    rows = [[s * DEG, k] + [partial_sum(c, s, n) for n in Ns] for s, k in zip(sigma, kb)]
    files = [write_csv(out / "diagnose_kbar.csv", cols, ["deg"] + ["1/au"] * (len(cols) - 1), rows)]
    mp = min(mins, key=lambda m: m.d)
    scan = jump_delta_scan(pair, dg.y_index, dg.jump_N, chart, samples=dg.sigma_samples, k=setup.k, minimum=mp)
    ycomp = "SGZgz"[dg.y_index]
    unit = "1/day" if dg.y_index < 3 else "au^2/day^2"
    cols = ["sigma_deg"] + [f"jump_{ycomp}_N{n}" for n in scan.N]
    rows = [[s * DEG] + list(scan.profiles[:, i]) for i, s in enumerate(scan.sigma)]
    files.append(write_csv(out / "diagnose_jump.csv", cols, ["deg"] + [unit] * len(scan.N), rows))
    files.append(write_manifest(out, "diagnose", cfg, files,
                                {"planet": name, "d_min_au": mp.d, "sigma_c_deg": scan.sigma_c * DEG}))
    return files


COMMANDS = {
    "propagate": (cmd_propagate, "secular propagation through crossings: series.csv, events.csv"),
    "compare": (cmd_compare, "secular run plus the phase-shifted full-integration ensemble"),
    "crossings": (cmd_crossings, "critical points of the orbit distance at t0: crossings.csv"),
    "coeffs": (cmd_coeffs, "averaged term per planet and resonant coefficients: coeffs.csv"),
    "diagnose": (cmd_diagnose, "resonant averages, partial sums and jump scans over sigma"),
    "config-reference": (None, "print every configuration key with its default"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="rescross", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"rescross {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_, description=help_)
        if name == "config-reference":
            continue
        sp.add_argument("--config", help="TOML run configuration (defaults when omitted)")
        sp.add_argument("--out", help="output directory (default: run.output)")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads for ensemble batches (default: all cores)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "config-reference":
        sys.stdout.write(reference_text())
        return 0
    try:
        if args.threads < 1:
            raise ConfigError("--threads", "must be >= 1")
        cfg = load_config(args.config)
        out = Path(args.out or cfg.run.output)
        out.mkdir(parents=True, exist_ok=True)
        start = time.perf_counter()
        files = COMMANDS[args.command][0](cfg, out, args.threads)
    except ConfigError as exc:
        print(f"rescross: configuration error: {exc}", file=sys.stderr)
        return 2
    except RescrossError as exc:
        print(f"rescross {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    elapsed = time.perf_counter() - start
    for f in files:
        print(f"wrote {f}", file=sys.stderr)
    print(f"{args.command} finished in {elapsed:.1f} s", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
