"""Command-line front end.

    ampc-l1 run case2 --out results
    ampc-l1 montecarlo --runs 100 --seed 7
    ampc-l1 tdm --controller ampc-l1 --points 5,4
    ampc-l1 margins
    ampc-l1 bench
    ampc-l1 validate-config --config my.json

Exit status: 0 on success, 1 on configuration or I/O errors, 2 when a
simulation diverges or a loop is unstable before any delay is added.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis
from .config import CASES, RootConfig, load_config
from .controllers import KINDS
from .errors import AmpcL1Error, ConfigError, UnstableAtZeroDelay
from .simkit import run
from .vehicle import plant_at

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2


class _Parser(argparse.ArgumentParser):
    # Usage errors are configuration errors; keep status 2 for divergence.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ampc-l1", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, default=None, help="JSON config (defaults built in)")
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        return sp

    r = common(sub.add_parser("run", help="simulate a benchmark case"))
    r.add_argument("case", nargs="?", choices=CASES, default=None)
    r.add_argument("--controller", choices=KINDS, action="append",
                   help="repeatable; default runs ampc and ampc-l1")

    m = common(sub.add_parser("montecarlo", help="paired Monte Carlo campaign"))
    m.add_argument("--runs", type=int, default=None)

    t = common(sub.add_parser("tdm", help="time-delay margins"))
    t.add_argument("--controller", choices=("ampc", "ampc-l1"), action="append")
    t.add_argument("--points", default=None, help="comma-separated Mach labels")

    g = common(sub.add_parser("margins", help="gain/phase margins of the AMPC loop"))
    g.add_argument("--points", default=None, help="comma-separated Mach labels")

    common(sub.add_parser("bench", help="per-update timing of the controllers"))
    common(sub.add_parser("validate-config", help="check a config and print its effective form"))
    return p


def _effective(cfg: RootConfig, args) -> RootConfig:
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        mc = replace(cfg.analysis.monte_carlo, seed=args.seed)
        cfg = replace(cfg, seed=args.seed, analysis=replace(cfg.analysis, monte_carlo=mc))
    if getattr(args, "runs", None) is not None:
        try:
            mc = replace(cfg.analysis.monte_carlo, n_runs=args.runs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        cfg = replace(cfg, analysis=replace(cfg.analysis, monte_carlo=mc))
    if getattr(args, "points", None):
        try:
            pts = tuple(float(v) for v in args.points.split(","))
        except ValueError as exc:
            raise ConfigError(f"--points must be comma-separated numbers: {exc}") from exc
        cfg = replace(cfg, analysis=replace(cfg.analysis, points=pts))
    return cfg


def _outdir(cfg: RootConfig) -> Path:
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {cfg.output_dir}: {exc}") from exc
    return cfg.output_dir


def _points(cfg: RootConfig, plant_file):
    ops = plant_file.operating_points
    if cfg.analysis.points is None:
        return list(ops)
    chosen = [op for op in ops if op.mach in cfg.analysis.points]
    missing = set(cfg.analysis.points) - {op.mach for op in ops}
    if missing:
        raise ConfigError(f"no operating point labelled Mach {sorted(missing)} in the plant file")
    return chosen


def _json(v):
    # JSON has no infinity; null marks "no crossover" / "beyond bracket".
    return None if isinstance(v, float) and (math.isinf(v) or math.isnan(v)) else v


def _nanmax(a) -> float:
    a = a[np.isfinite(a)]
    return float(a.max()) if a.size else math.nan


def cmd_run(cfg: RootConfig, args) -> int:
    case = args.case or cfg.case
    kinds = args.controller or ["ampc", "ampc-l1"]
    pf = cfg.load_plant()
    scenario = cfg.scenario(case)
    out = _outdir(cfg)
    summary = {"case": case, "config": cfg.to_dict(), "runs": {}}
    diverged = False
    for kind in kinds:
        log = run(pf.plant, pf.reference, kind, scenario, cfg.ampc, cfg.l1, cfg.refmpc)
        log.meta["config"] = cfg.to_dict()
        log.write(out / f"{case}_{kind}.csv")
        norm = analysis.tracking_error_norm(log)
        summary["runs"][kind] = {
            "error_norm": _json(norm),
            "diverged": log.diverged,
            "divergence_time": log.divergence_time,
            "am_max_real": _json(_nanmax(log["am_max_real"])),
        }
        diverged |= log.diverged
        print(f"{case} {kind}: error norm {norm:.4g}" + ("  DIVERGED" if log.diverged else ""))
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_montecarlo(cfg: RootConfig, args) -> int:
    pf = cfg.load_plant()
    spec = cfg.analysis.monte_carlo
    base = cfg.scenario("case1")
    res = analysis.monte_carlo(spec, pf.plant, pf.reference, cfg.ampc, cfg.l1, base)
    out = _outdir(cfg)
    header, rows = analysis.monte_carlo_rows(res)
    analysis.write_table(out / "montecarlo_runs.csv", header, rows)
    summ = res.summary()
    analysis.write_table(out / "montecarlo_summary.csv", ["controller", "mean", "std", "n_runs", "n_diverged"],
                         [[k, s["mean"], s["std"], s["n_runs"], s["n_diverged"]] for k, s in summ.items()])
    analysis.write_manifest(out / "montecarlo.json", {"summary": summ, "elapsed_s": res.elapsed},
                            cfg.to_dict(), spec.seed)
    for k, s in summ.items():
        print(f"{k}: mean {s['mean']:.4g}  std {s['std']:.4g}  diverged {s['n_diverged']}/{s['n_runs']}")
    return EXIT_OK


def cmd_tdm(cfg: RootConfig, args) -> int:
    kinds = args.controller or ["ampc", "ampc-l1"]
    pf = cfg.load_plant()
    points = _points(cfg, pf)
    out = _outdir(cfg)
    rows, payload = [], []
    status = EXIT_OK
    for op in points:
        row = [op.mach, op.altitude, op.time]
        for kind in kinds:
            try:
                margin = analysis.time_delay_margin(kind, pf.plant, op.time, cfg.analysis.tdm,
                                                    cfg.ampc, cfg.l1).margin
            except UnstableAtZeroDelay as exc:
                print(f"Mach {op.mach} {kind}: {exc}", file=sys.stderr)
                margin, status = exc.margin, EXIT_DIVERGED
            row.append(margin * 1e3)
            payload.append({"mach": op.mach, "controller": kind, "tdm_ms": _json(margin * 1e3)})
            print(f"Mach {op.mach:g} {kind}: TDM {margin * 1e3:.1f} ms")
        rows.append(row)
    analysis.write_table(out / "tdm.csv", ["mach", "altitude_m", "time_s"] + [f"tdm_{k}_ms" for k in kinds], rows)
    analysis.write_manifest(out / "tdm.json", {"tdm": payload}, cfg.to_dict(), cfg.seed)
    return status


def cmd_margins(cfg: RootConfig, args) -> int:
    pf = cfg.load_plant()
    sweep = cfg.analysis.margins
    out = _outdir(cfg)
    rows, payload = [], []
    for op in _points(cfg, pf):
        A, B = plant_at(pf.plant, op.time)
        m = analysis.lti_margins(A, B, pf.plant.C, None, sweep.w_min, sweep.w_max, sweep.n_points, cfg.ampc)
        rows.append([op.mach, op.altitude, op.time, m.phase_margin, m.gain_margin, m.gain_crossover])
        payload.append({"mach": op.mach, "phase_margin_deg": _json(m.phase_margin),
                        "gain_margin": _json(m.gain_margin), "gain_crossover_rad_s": _json(m.gain_crossover)})
        print(f"Mach {op.mach:g}: PM {m.phase_margin:.2f} deg  GM {m.gain_margin:.4g}")
    analysis.write_table(out / "margins.csv",
                         ["mach", "altitude_m", "time_s", "phase_margin_deg", "gain_margin", "gain_crossover_rad_s"], rows)
    analysis.write_manifest(out / "margins.json", {"margins": payload}, cfg.to_dict(), cfg.seed)
    return EXIT_OK


def cmd_bench(cfg: RootConfig, args) -> int:
    pf = cfg.load_plant()
    b = cfg.analysis.bench
    rows = analysis.timing_benchmark(pf.plant, b.time, b.repeats, b.warmup, cfg.ampc, cfg.l1, cfg.refmpc)
    out = _outdir(cfg)
    analysis.write_table(out / "bench.csv", ["controller", "median_s", "ratio_to_ampc"],
                         [[r.name, r.median_s, r.ratio_to_ampc] for r in rows])
    analysis.write_manifest(out / "bench.json", {"timing": [vars(r) for r in rows]}, cfg.to_dict(), cfg.seed)
    for r in rows:
        print(f"{r.name:10s} {r.median_s * 1e3:9.4f} ms  x{r.ratio_to_ampc:.2f}")
    return EXIT_OK


def cmd_validate(cfg: RootConfig, args) -> int:
    cfg.load_plant()
    print(json.dumps(cfg.to_dict(), indent=2))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "montecarlo": cmd_montecarlo,
    "tdm": cmd_tdm,
    "margins": cmd_margins,
    "bench": cmd_bench,
    "validate-config": cmd_validate,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _effective(load_config(args.config), args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AmpcL1Error as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
