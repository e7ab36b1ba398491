"""Monte Carlo experiment harness behind the command line interface."""

from __future__ import annotations

import csv
import io
import json
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import comparators
from .channel import ChannelQuantizer, FadingParams, sample_trace
from .embedded import SolverSettings, build_context, solve_context
from .model import SystemParams
from .planner import (MAX_TABLE_ENTRIES, PolicyTable, backward_induction, build_lookup_table,
                      exhaustive_search, feasible_mask, next_state_table, run_greedy,
                      run_online_markov, variation_vectors)

CSV_SCHEMA = "husrelay-results/1"
CSV_COLUMNS = ["strategy", "snr_db", "trial", "seed", "r_total", "per_slot_payoff",
               "embedded_calls", "solves", "dinkelbach_iterations", "sweeps"]

PROPOSED = ("optimal", "markov", "greedy")
COMPARATOR_SET = ("optimal", "harvest_store_use", "harvest_use", "time_switching", "best_relay", "random_relay")
ALL_STRATEGIES = PROPOSED + ("exhaustive",) + comparators.STRATEGIES


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    K: int = 2
    T: int = 10
    L: int = 4
    alpha: float = 1.0
    eta1: float = 0.4
    eta2: float = 0.8
    sigma_b2: float = 1.0
    sigma_D2: float = 1.0
    m: int = 3
    log_base: float = 2.0
    d_sr: float = 1.0
    d_rd: float = 5.0
    path_loss_exp: float = 2.0
    strategies: list = field(default_factory=lambda: list(PROPOSED))
    snr_start: float = 0.0
    snr_step: float = 5.0
    snr_stop: float = 20.0
    trials: int = 100
    seed: int = 0
    out: str = "results.csv"
    workers: int = 1
    tau_step: float = 0.01
    max_table_entries: int = MAX_TABLE_ENTRIES
    dinkelbach_tol: float = 1e-8
    alternating_tol: float = 1e-8
    bisection_tol: float = 1e-10
    max_dinkelbach: int = 50
    max_sweeps: int = 50

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        defaults = cls()
        known = {f.name for f in fields(cls)}
        for key, val in doc.items():
            if key not in known:
                raise ConfigError(f"unknown config field {key!r}")
            want = type(getattr(defaults, key))
            if want is float and not isinstance(val, bool) and isinstance(val, int):
                continue
            if not isinstance(val, want) or (isinstance(val, bool) and want is not bool):
                raise ConfigError(f"{key}: expected {want.__name__}, got {val!r}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def validate(self) -> None:
        if not self.strategies:
            raise ConfigError("strategies: must be nonempty")
        for s in self.strategies:
            if s not in ALL_STRATEGIES:
                raise ConfigError(f"strategies: unknown strategy {s!r}")
        if self.snr_step <= 0:
            raise ConfigError("snr_step: must be positive")
        if self.snr_stop < self.snr_start:
            raise ConfigError("snr_stop: must be >= snr_start")
        if self.trials < 1:
            raise ConfigError("trials: must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")
        for name, build in (("params", self.params), ("fading", self.fading), ("solver", self.settings)):
            try:
                build()
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        try:
            comparators.ComparatorConfig(tau_step=self.tau_step)
        except ValueError as exc:
            raise ConfigError(f"tau_step: {exc}") from None

    @property
    def snr_points(self) -> list:
        n = int(math.floor((self.snr_stop - self.snr_start) / self.snr_step + 1e-9)) + 1
        return [self.snr_start + i * self.snr_step for i in range(n)]

    def params(self, snr_db: float | None = None) -> SystemParams:
        p = SystemParams(K=self.K, T=self.T, L=self.L, alpha=self.alpha, eta1=self.eta1, eta2=self.eta2,
                         sigma_b2=self.sigma_b2, sigma_D2=self.sigma_D2, m=self.m, log_base=self.log_base)
        return p.with_snr_db(self.snr_start if snr_db is None else snr_db)

    def fading(self) -> FadingParams:
        return FadingParams(self.d_sr, self.d_rd, self.path_loss_exp)

    def settings(self) -> SolverSettings:
        return SolverSettings(self.dinkelbach_tol, self.alternating_tol, self.bisection_tol,
                              self.max_dinkelbach, self.max_sweeps)

    def to_dict(self) -> dict:
        return asdict(self)


def trace_seed(master: int, snr_index: int, trial: int) -> int:
    """Channel seed shared by every strategy at one (SNR point, trial)."""
    ss = np.random.SeedSequence(master, spawn_key=(snr_index, trial))
    return int(ss.generate_state(1, np.uint64)[0])


def strategy_seed(master: int, strategy: str, snr_index: int, trial: int) -> int:
    """Seed for a strategy's own randomness (e.g. random relay selection)."""
    ss = np.random.SeedSequence(master, spawn_key=(snr_index, trial, zlib.crc32(strategy.encode())))
    return int(ss.generate_state(1, np.uint64)[0])


def run_strategy(name: str, trace, params: SystemParams, settings: SolverSettings,
                 table: PolicyTable | None = None, seed: int = 0, tau_step: float = 0.01):
    if name == "optimal":
        return backward_induction(trace, params, settings)
    if name == "exhaustive":
        return exhaustive_search(trace, params, settings)
    if name == "markov":
        return run_online_markov(trace, table, params, settings)
    if name in ("greedy", "harvest_use"):
        return run_greedy(trace, params, settings)
    if name == "harvest_store_use":
        return comparators.run_harvest_store_use(trace, params, settings)
    if name == "time_switching":
        return comparators.run_time_switching(trace, params, comparators.ComparatorConfig(tau_step=tau_step))
    if name == "best_relay":
        return comparators.run_relay_selection(trace, params, "best", settings)
    if name == "random_relay":
        return comparators.run_relay_selection(trace, params, "random", settings, seed=seed)
    if name == "fixed_ratio":
        return comparators.run_fixed_ratio(trace, params)
    raise ValueError(f"unknown strategy {name!r}")


def _run_cell(cfg: ExperimentConfig, snr_index: int, trial: int, tables: dict):
    snr = cfg.snr_points[snr_index]
    params = cfg.params(snr)
    seed = trace_seed(cfg.seed, snr_index, trial)
    trace = sample_trace(params, cfg.fading(), seed)
    rows, timings = [], []
    for name in cfg.strategies:
        t0 = time.perf_counter()
        plan = run_strategy(name, trace, params, cfg.settings(), tables.get(snr_index),
                            strategy_seed(cfg.seed, name, snr_index, trial), cfg.tau_step)
        wall = time.perf_counter() - t0
        st = plan.solver_stats
        rows.append({
            "strategy": name, "snr_db": snr, "trial": trial, "seed": seed, "r_total": plan.r_total,
            "per_slot_payoff": ";".join(repr(float(x)) for x in plan.per_slot_payoff),
            "embedded_calls": st.get("embedded_calls", 0), "solves": st.get("solves", 0),
            "dinkelbach_iterations": st.get("dinkelbach_iterations", 0), "sweeps": st.get("sweeps", 0),
        })
        timings.append((name, snr, trial, wall))
    return rows, timings


def _fmt(value):
    return repr(value) if isinstance(value, float) else str(value)


def run_experiment(cfg: ExperimentConfig):
    """Execute every (strategy, SNR, trial) cell; returns (rows, timings) sorted deterministically."""
    tables = {}
    if "markov" in cfg.strategies:
        for i, snr in enumerate(cfg.snr_points):
            params = cfg.params(snr)
            tables[i] = build_lookup_table(ChannelQuantizer.build(params, cfg.fading()), params,
                                           cfg.settings(), cfg.max_table_entries)
    cells = [(i, trial) for i in range(len(cfg.snr_points)) for trial in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_run_cell, [cfg] * len(cells), *zip(*cells), [tables] * len(cells)))
    else:
        results = [_run_cell(cfg, i, trial, tables) for i, trial in cells]
    order = {name: n for n, name in enumerate(cfg.strategies)}
    rows = [r for res in results for r in res[0]]
    timings = [t for res in results for t in res[1]]
    rows.sort(key=lambda r: (order[r["strategy"]], r["snr_db"], r["trial"]))
    timings.sort(key=lambda r: (order[r[0]], r[1], r[2]))
    return rows, timings


def summarize(rows, cfg: ExperimentConfig) -> dict:
    cells = []
    for name in cfg.strategies:
        for snr in cfg.snr_points:
            vals = np.array([r["r_total"] for r in rows if r["strategy"] == name and r["snr_db"] == snr])
            n = vals.size
            std = float(vals.std(ddof=1)) if n > 1 else 0.0
            cells.append({"strategy": name, "snr_db": snr, "n": n, "mean": float(vals.mean()),
                          "std": std, "sem": std / math.sqrt(n)})
    return {"schema": CSV_SCHEMA, "columns": CSV_COLUMNS, "config": cfg.to_dict(), "cells": cells}


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def random_embedded_instances(n: int, params: SystemParams, fading: FadingParams = FadingParams(),
                              seed: int = 0, snrs=(0.0, 10.0, 20.0)):
    """Random embedded problems: battery state and a feasible variation drawn uniformly.

    Returns a list of (params, v, h2, g2) with per-instance SNR drawn from ``snrs``.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    K, L = params.K, params.L
    vs = variation_vectors(L, K)
    nxt = next_state_table(L, K)
    out = []
    for _ in range(n):
        p = params.with_snr_db(float(rng.choice(snrs)))
        h2 = -fading.mean_h2 * np.log1p(-rng.random(K))
        g2 = -fading.mean_g2 * np.log1p(-rng.random(K))
        s = int(rng.integers(nxt.shape[0]))
        ok = np.nonzero((nxt[s] >= 0) & feasible_mask(h2, p))[0]
        v = vs[int(rng.choice(ok))]
        out.append((p, v, h2, g2))
    return out


def convergence_traces(instances, settings: SolverSettings):
    """Per-instance solver traces (dict rows: sweep, j, iter, q, F, J)."""
    traced = SolverSettings(settings.dinkelbach_tol, settings.alternating_tol, settings.bisection_tol,
                            settings.max_dinkelbach, settings.max_sweeps, trace=True)
    out = []
    for p, v, h2, g2 in instances:
        res = solve_context(build_context(v, h2, g2, p), traced)
        out.append(res.trace[0])
    return out


def dinkelbach_runs(trace_rows):
    """Split one instance trace into its Dinkelbach runs (lists of (q, F))."""
    runs, key = [], None
    for row in trace_rows:
        k = (row["sweep"], row["j"])
        if k != key:
            runs.append([])
            key = k
        runs[-1].append((row["q"], row["F"]))
    return runs
