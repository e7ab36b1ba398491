"""Command line entry point: ``husrelay {run,compare,table,convergence}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .channel import ChannelQuantizer
from .harness import (COMPARATOR_SET, ConfigError, ExperimentConfig, convergence_traces,
                      dinkelbach_runs, random_embedded_instances, rows_to_csv, run_experiment,
                      summarize)
from .planner import build_lookup_table, table_entry_count

TRACE_COLUMNS = ["instance", "snr_db", "sweep", "j", "iter", "q", "F", "J"]


def _sidecar(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def _load_config(args) -> ExperimentConfig:
    doc = {}
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            doc = json.load(f)
        if not isinstance(doc, dict):
            raise ConfigError("config: top level must be a JSON object")
    for key in ("seed", "trials", "out", "workers"):
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    if getattr(args, "strategies", None):
        doc["strategies"] = args.strategies.split(",")
    elif args.command == "compare":
        doc["strategies"] = list(COMPARATOR_SET)
    return ExperimentConfig.from_dict(doc)


def cmd_run(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    rows, timings = run_experiment(cfg)
    out.write_bytes(rows_to_csv(rows).encode("utf-8"))
    summary = summarize(rows, cfg)
    _sidecar(out, ".summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    with open(_sidecar(out, ".timing.csv"), "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\r\n")
        w.writerow(["strategy", "snr_db", "trial", "wall_s"])
        w.writerows(timings)
    for cell in summary["cells"]:
        print(f"{cell['strategy']:>18s} {cell['snr_db']:6.1f} dB  "
              f"mean {cell['mean']:.4f}  std {cell['std']:.4f}  (n={cell['n']})")
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_table(cfg: ExperimentConfig, snr_db: float | None) -> int:
    params = cfg.params(snr_db)
    entries = table_entry_count(params)
    t0 = time.perf_counter()
    try:
        table = build_lookup_table(ChannelQuantizer.build(params, cfg.fading()), params,
                                   cfg.settings(), cfg.max_table_entries)
    except MemoryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    elapsed = time.perf_counter() - t0
    table.save(cfg.out)
    print(f"entries: {entries}")
    print(f"build time: {elapsed:.3f} s")
    print(f"params hash: {table.hash}")
    print(f"wrote {cfg.out}")
    return 0


def cmd_convergence(cfg: ExperimentConfig, instances: int) -> int:
    base = cfg.params()
    inst = random_embedded_instances(instances, base, cfg.fading(), cfg.seed, tuple(cfg.snr_points))
    traces = convergence_traces(inst, cfg.settings())
    with open(cfg.out, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\r\n")
        w.writerow(TRACE_COLUMNS)
        for i, ((p, *_), tr) in enumerate(zip(inst, traces)):
            snr = 10 * np.log10(p.P / p.sigma_b2)
            for row in tr:
                w.writerow([i, repr(float(snr))] + [row[k] if isinstance(row[k], int) else repr(float(row[k]))
                                                    for k in TRACE_COLUMNS[2:]])
    runs = [r for tr in traces for r in dinkelbach_runs(tr)]
    fast = sum(len(r) <= 10 for r in runs)
    print(f"instances: {instances}  dinkelbach runs: {len(runs)}  within 10 iterations: {fast / len(runs):.1%}")
    print(f"wrote {cfg.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="husrelay", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, hlp in (("run", "Monte Carlo sweep over SNR and strategies"),
                      ("compare", "run with the comparator strategy set"),
                      ("table", "build and persist the Markov policy table"),
                      ("convergence", "emit solver traces for random embedded instances")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output path")
        if name in ("run", "compare"):
            p.add_argument("--trials", type=int)
            p.add_argument("--workers", type=int)
            p.add_argument("--strategies", help="comma separated strategy tags")
        if name == "table":
            p.add_argument("--snr-db", type=float, help="SNR for the table (default: sweep start)")
        if name == "convergence":
            p.add_argument("--instances", type=int, default=1000)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.out is None:
            args.out = {"table": "policy_table.json", "convergence": "convergence.csv"}.get(args.command)
        cfg = _load_config(args)
    except (ConfigError, TypeError, json.JSONDecodeError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command in ("run", "compare"):
        return cmd_run(cfg)
    if args.command == "table":
        return cmd_table(cfg, args.snr_db)
    return cmd_convergence(cfg, args.instances)


if __name__ == "__main__":
    sys.exit(main())
