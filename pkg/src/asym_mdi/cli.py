"""Command-line entry point emitting plot-ready CSV.

Exit codes: 0 success, 2 configuration or input error, 3 numerical
failure, 4 infeasible linear program.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import io
import sys
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from . import optimizer as opt
from .config import SCHEMA, ScenarioConfig, default_config, load_config
from .errors import AsymMDIError, ConfigError, LPError, NumericError
from .interference import hom_dip_scan
from .photon_stats import LocalDetector, heralded_pnd_after_channel, wcp_pnd_after_channel
from .scenario import (
    SCENARIOS,
    Scenario,
    build_scenario,
    build_spectra,
    reference_vector,
    swarm_config,
)

PARAM_NAMES = ("nu", "mu", "pz_nu", "pz_mu", "px_nu", "px_mu")


# ----------------------------------------------------------------------------
# output helpers
# ----------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render_csv(cfg: ScenarioConfig, command: str, header: Sequence[str],
               rows: Iterable[Sequence], notes: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    buf.write(f"# asym-mdi {__version__} {command}\n")
    buf.write(f"# config_sha256 = {cfg.digest}\n")
    for line in cfg.resolved_lines():
        buf.write(f"# {line}\n")
    for note in notes:
        buf.write(f"# {note}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def param_header(kind: str) -> list[str]:
    if kind == "ws":
        return [f"{p}_A" for p in PARAM_NAMES] + [f"{p}_B" for p in PARAM_NAMES]
    return list(PARAM_NAMES)


def distance_grid(cfg: ScenarioConfig) -> np.ndarray:
    s = cfg["sweep"]
    return np.linspace(s["distance_min_km"], s["distance_max_km"], s["distance_points"])


def size_grid(cfg: ScenarioConfig) -> np.ndarray:
    s = cfg["sweep"]
    return np.logspace(s["size_min_log10"], s["size_max_log10"], s["size_points"])


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


# ----------------------------------------------------------------------------
# evaluation helpers
# ----------------------------------------------------------------------------

def _rate_point(args) -> float:
    scenario, kind, x, distance, scale = args
    return scenario.evaluate(kind, x, distance, scale).rate


def evaluate_many(scenario: Scenario, kind: str, points, workers: int = 1) -> list[float]:
    """Rates for ``(x, distance, scale)`` triples in input order."""
    jobs = [(scenario, kind, np.asarray(x), float(d), s) for x, d, s in points]
    if workers <= 1:
        return [_rate_point(j) for j in jobs]
    with concurrent.futures.ProcessPoolExecutor(workers) as pool:
        return list(pool.map(_rate_point, jobs))


def optimize_sweep(scenario: Scenario, kind: str, distances, cfg: ScenarioConfig,
                   seed: int | None = None) -> list[opt.SweepPoint]:
    swarm = swarm_config(cfg)
    restart = swarm_config(cfg, restart=True)
    if seed is not None:
        swarm = dataclasses.replace(swarm, seed=seed)
        restart = dataclasses.replace(restart, seed=seed)
    return opt.continuation_sweep(scenario.objective_at(kind), distances, scenario.space(kind),
                                  swarm, restart_cfg=restart)


def size_sweep(scenario: Scenario, kind: str, sizes, distance: float, cfg: ScenarioConfig):
    """Optimized finite-size rates for increasing data size, then the asymptotic rate."""
    base = scenario.scale

    def at(n_tot: float):
        return scenario.objective_at(kind, dataclasses.replace(base, n_tot=n_tot))(distance)

    # larger data sets are the easy end, so continue from the largest size down
    order = sorted(range(len(sizes)), key=lambda j: -float(sizes[j]))
    down = opt.continuation_sweep(at, [sizes[j] for j in order], scenario.space(kind),
                                  swarm_config(cfg), restart_cfg=swarm_config(cfg, restart=True))
    points = [None] * len(sizes)
    for j, p in zip(order, down):
        points[j] = dataclasses.replace(p, index=j)
    asym_scale = dataclasses.replace(base, asymptotic=True)
    f_inf = scenario.objective_at(kind, asym_scale)(distance)
    asym = opt.coordinate_descent(f_inf, scenario.space(kind), points[-1].x)
    return points, asym


# ----------------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------------

def cmd_schmidt(cfg: ScenarioConfig, args) -> str:
    setup = build_spectra(cfg)
    notes = [f"purity = {setup.purity!r}", f"schmidt_residual = {setup.schmidt.residual!r}",
             f"wcp_overlap_residual = {setup.overlaps.residual_norm!r}"]
    if args.mode_functions:
        n = min(args.mode_functions, setup.schmidt.cutoff)
        header = ["omega_rad_s"]
        cols = []
        for k in range(n):
            header += [f"psi{k + 1}_re", f"psi{k + 1}_im"]
            cols.append(setup.schmidt.signal_modes[k].values)
        header += ["wcp_re", "wcp_im"]
        cols.append(setup.wcp.values)
        omega = setup.wcp.grid.omega
        rows = []
        for i, w in enumerate(omega):
            row = [w]
            for c in cols:
                row += [c[i].real, c[i].imag]
            rows.append(row)
        return render_csv(cfg, "schmidt", header, rows, notes)
    props = setup.overlaps.proportions
    rows = [(k + 1, lam, c.real, c.imag, p) for k, (lam, c, p) in
            enumerate(zip(setup.schmidt.lambdas, setup.overlaps.coefficients, props))]
    return render_csv(cfg, "schmidt",
                      ["mode", "lambda", "wcp_overlap_re", "wcp_overlap_im", "wcp_proportion"],
                      rows, notes)


def cmd_hom(cfg: ScenarioConfig, args) -> str:
    setup = build_spectra(cfg)
    s = cfg["sweep"]
    taus = np.linspace(-s["tau_max_ps"], s["tau_max_ps"], s["tau_points"]) * 1e-12
    mode = setup.schmidt.signal_modes[args.mode - 1]
    rows = hom_dip_scan(setup.wcp, mode, taus)
    return render_csv(cfg, "hom", ["tau_s", "probability"], rows,
                      [f"inputs = wcp, spdc signal mode {args.mode}"])


def cmd_pnd(cfg: ScenarioConfig, args) -> str:
    scenario = build_scenario(cfg)
    if args.source == "wcp":
        pnd = wcp_pnd_after_channel(scenario.wcp.modal(args.intensity), args.eta, args.n_max)
    else:
        loc = cfg["local"]
        pnd = heralded_pnd_after_channel(
            scenario.spdc.modal(args.intensity),
            LocalDetector(loc["efficiency"], loc["dark_count_prob"]), args.eta, args.n_max).total
    notes = [f"source = {args.source}", f"intensity = {args.intensity!r}",
             f"eta = {args.eta!r}", f"mass = {pnd.mass!r}", f"tail = {pnd.tail!r}"]
    return render_csv(cfg, "pnd", ["n", "probability"], pnd.csv_rows(), notes)


def _params_from_args(args) -> np.ndarray:
    if args.reference_set is not None:
        if args.scenario != "ws":
            raise ConfigError("reference parameter sets apply to the ws scenario")
        return reference_vector(args.reference_set)
    if args.params is None:
        raise ConfigError("keyrate needs --params or --reference-set")
    x = np.array(_parse_floats(args.params))
    if x.size != (12 if args.scenario == "ws" else 6):
        raise ConfigError(f"scenario {args.scenario} needs {12 if args.scenario == 'ws' else 6} "
                          "parameters ordered nu,mu,pz_nu,pz_mu,px_nu,px_mu per party")
    return x


def cmd_keyrate(cfg: ScenarioConfig, args) -> str:
    scenario = build_scenario(cfg)
    x = _params_from_args(args)
    workers = cfg["optimizer"]["workers"]
    if args.vary == "size":
        sizes = size_grid(cfg)
        d = cfg["sweep"]["size_distance_km"]
        scales = [dataclasses.replace(scenario.scale, n_tot=n) for n in sizes]
        rates = evaluate_many(scenario, args.scenario, [(x, d, s) for s in scales], workers)
        return render_csv(cfg, "keyrate", ["n_tot", "rate"], zip(sizes, rates),
                          [f"scenario = {args.scenario}", f"distance_km = {d!r}"])
    distances = distance_grid(cfg)
    rates = evaluate_many(scenario, args.scenario,
                          [(x, d, scenario.scale) for d in distances], workers)
    return render_csv(cfg, "keyrate", ["distance_km", "rate"], zip(distances, rates),
                      [f"scenario = {args.scenario}"])


def _sweep_rows(kind: str, points: Sequence[opt.SweepPoint]):
    for p in points:
        yield [kind, p.index + 1, p.distance, max(p.value, 0.0), p.value, int(p.restarted),
               *p.x]


def cmd_optimize(cfg: ScenarioConfig, args) -> str:
    scenario = build_scenario(cfg)
    points = optimize_sweep(scenario, args.scenario, distance_grid(cfg), cfg, args.seed)
    header = ["scenario", "index", "distance_km", "rate", "raw_rate", "restarted",
              *param_header(args.scenario)]
    return render_csv(cfg, "optimize", header, _sweep_rows(args.scenario, points))


def cmd_sweep_distance(cfg: ScenarioConfig, args) -> str:
    scenario = build_scenario(cfg)
    kinds = args.scenarios.split(",")
    for k in kinds:
        if k not in SCENARIOS:
            raise ConfigError(f"unknown scenario {k!r}; expected one of {SCENARIOS}")
    rows = []
    for k in kinds:
        points = optimize_sweep(scenario, k, distance_grid(cfg), cfg, args.seed)
        rows += [r[:6] for r in _sweep_rows(k, points)]
    return render_csv(cfg, "sweep-distance",
                      ["scenario", "index", "distance_km", "rate", "raw_rate", "restarted"], rows)


def cmd_sweep_size(cfg: ScenarioConfig, args) -> str:
    scenario = build_scenario(cfg)
    d = cfg["sweep"]["size_distance_km"]
    points, asym = size_sweep(scenario, args.scenario, size_grid(cfg), d, cfg)
    rows = [["finite", p.distance, max(p.value, 0.0), *p.x] for p in points]
    rows.append(["asymptotic", "inf", max(asym.value, 0.0), *asym.x])
    return render_csv(cfg, "sweep-size", ["mode", "n_tot", "rate", *param_header(args.scenario)],
                      rows, [f"scenario = {args.scenario}", f"distance_km = {d!r}"])


def cmd_fixed_params(cfg: ScenarioConfig, args) -> str:
    scenario = build_scenario(cfg)
    kind = args.scenario
    distances = distance_grid(cfg)
    points = optimize_sweep(scenario, kind, distances, cfg, args.seed)
    curves: list[tuple[str, np.ndarray]] = []
    notes = []
    for idx in (int(v) for v in _parse_floats(cfg["sweep"]["fixed_indices"])):
        if 1 <= idx <= len(points):
            curves.append((f"optimal_index_{idx}", points[idx - 1].x))
        else:
            notes.append(f"fixed index {idx} outside the {len(points)}-point grid; skipped")
    if args.reference and kind == "ws":
        curves += [(f"reference_set_{i}", reference_vector(i)) for i in (1, 2, 3)]
    rows = [["optimized", p.index + 1, p.distance, max(p.value, 0.0)] for p in points]
    workers = cfg["optimizer"]["workers"]
    for name, x in curves:
        rates = evaluate_many(scenario, kind, [(x, d, scenario.scale) for d in distances], workers)
        rows += [[name, i + 1, d, r] for i, (d, r) in enumerate(zip(distances, rates))]
    for name, x in curves:
        notes.append(f"{name} = " + ",".join(repr(float(v)) for v in x))
    return render_csv(cfg, "fixed-params", ["curve", "index", "distance_km", "rate"], rows,
                      [f"scenario = {kind}", *notes])


COMMANDS = {
    "schmidt": cmd_schmidt,
    "hom": cmd_hom,
    "pnd": cmd_pnd,
    "keyrate": cmd_keyrate,
    "optimize": cmd_optimize,
    "sweep-distance": cmd_sweep_distance,
    "sweep-size": cmd_sweep_size,
    "fixed-params": cmd_fixed_params,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asym-mdi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="INI configuration (default: built-in reference)")
    common.add_argument("-o", "--output", help="output CSV path (default: stdout)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration value")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schmidt", parents=[common], help="Schmidt weights and WCP overlaps")
    p.add_argument("--mode-functions", type=int, default=0, metavar="N",
                   help="export the first N signal modes and the WCP amplitude")
    p = sub.add_parser("hom", parents=[common], help="HOM dip between WCP and an SPDC mode")
    p.add_argument("--mode", type=int, default=1)
    p = sub.add_parser("pnd", parents=[common], help="photon-number distribution")
    p.add_argument("--source", choices=("wcp", "spdc"), required=True)
    p.add_argument("--intensity", type=float, required=True)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--n-max", type=int, default=None)
    p = sub.add_parser("keyrate", parents=[common], help="rate for fixed parameters")
    p.add_argument("--scenario", choices=SCENARIOS, default="ws")
    p.add_argument("--params", help="comma-separated nu,mu,pz_nu,pz_mu,px_nu,px_mu per party")
    p.add_argument("--reference-set", type=int, choices=(1, 2, 3))
    p.add_argument("--vary", choices=("distance", "size"), default="distance")
    p = sub.add_parser("optimize", parents=[common], help="optimal parameters per distance")
    p.add_argument("--scenario", choices=SCENARIOS, default="ws")
    p.add_argument("--seed", type=int)
    p = sub.add_parser("sweep-distance", parents=[common], help="optimized rate versus distance")
    p.add_argument("--scenarios", default="ww,ss,ws")
    p.add_argument("--seed", type=int)
    p = sub.add_parser("sweep-size", parents=[common], help="optimized rate versus data size")
    p.add_argument("--scenario", choices=SCENARIOS, default="ws")
    p = sub.add_parser("fixed-params", parents=[common],
                       help="optimized curve against curves with frozen parameters")
    p.add_argument("--scenario", choices=SCENARIOS, default="ws")
    p.add_argument("--seed", type=int)
    p.add_argument("--reference", action="store_true",
                   help="also sweep the built-in reference parameter sets (ws only)")
    return parser


def _apply_overrides(cfg: ScenarioConfig, overrides: Sequence[str]) -> ScenarioConfig:
    items = []
    for item in overrides:
        target, sep, value = item.partition("=")
        section, _, key = target.rpartition(".")
        if not sep or section not in SCHEMA:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        items.append((section, key, value.strip()))
    return cfg.with_overrides(items) if items else cfg


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else default_config()
        cfg = _apply_overrides(cfg, args.set)
        text = COMMANDS[args.command](cfg, args)
        if args.output:
            Path(args.output).write_text(text)
        else:
            sys.stdout.write(text)
    except ConfigError as exc:
        print(f"asym-mdi: configuration error: {exc}", file=sys.stderr)
        return 2
    except LPError as exc:
        print(f"asym-mdi: infeasible linear program: {exc}", file=sys.stderr)
        return 4
    except NumericError as exc:
        print(f"asym-mdi: numerical failure: {exc}", file=sys.stderr)
        return 3
    except AsymMDIError as exc:
        print(f"asym-mdi: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"asym-mdi: invalid input: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
