"""Planning over the T-slot horizon.

Four procedures share the embedded solver as their per-slot payoff:
exhaustive enumeration, backward induction with non-causal CSI, the
Markov lookup table with its online executor, and the greedy policy.

Variation vectors are enumerated in lexicographic order over {-L..L}^K and
battery states over {0..L}^K; Bellman argmax ties go to the lexicographically
smallest variation.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .channel import ChannelQuantizer, ChannelTrace
from .embedded import HARVEST_USE_STORE, SolverSettings, SolverStats, solve_embedded
from .model import Decision, SystemParams, battery_step, charge_feasible

MAX_EXHAUSTIVE_SEQUENCES = 10 ** 7
MAX_TABLE_ENTRIES = 5 * 10 ** 7
TABLE_FORMAT = "husrelay-policy-table"
TABLE_VERSION = 1


@dataclass
class PlanResult:
    decisions: list
    battery_trajectory: list
    per_slot_payoff: np.ndarray
    solver_stats: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def r_total(self) -> float:
        return float(np.sum(self.per_slot_payoff))

    @property
    def variations(self) -> np.ndarray:
        return np.array([d.variation for d in self.decisions], dtype=int)


@lru_cache(maxsize=None)
def variation_vectors(L: int, K: int) -> np.ndarray:
    vs = np.array(list(itertools.product(range(-L, L + 1), repeat=K)), dtype=int)
    vs.setflags(write=False)
    return vs


@lru_cache(maxsize=None)
def battery_states(L: int, K: int) -> np.ndarray:
    st = np.array(list(itertools.product(range(L + 1), repeat=K)), dtype=int)
    st.setflags(write=False)
    return st


def state_index(levels, L: int) -> int:
    return int(np.ravel_multi_index(tuple(int(x) for x in levels), (L + 1,) * len(levels)))


def variation_index(v, L: int) -> int:
    return int(np.ravel_multi_index(tuple(int(x) + L for x in v), (2 * L + 1,) * len(v)))


@lru_cache(maxsize=None)
def next_state_table(L: int, K: int) -> np.ndarray:
    """(N_S, N_v) index of S - v, or -1 where the move leaves the battery range."""
    states, vs = battery_states(L, K), variation_vectors(L, K)
    nxt = states[:, None, :] - vs[None, :, :]
    ok = np.all((nxt >= 0) & (nxt <= L), axis=2)
    idx = np.ravel_multi_index(tuple(np.clip(nxt, 0, L).transpose(2, 0, 1)), (L + 1,) * K)
    out = np.where(ok, idx, -1)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def drain_index(L: int, K: int) -> np.ndarray:
    """Variation index that empties each battery state (v = S)."""
    states = battery_states(L, K)
    return np.ravel_multi_index(tuple((states + L).T), (2 * L + 1,) * K)


def feasible_mask(h2, params: SystemParams) -> np.ndarray:
    """(..., N_v) charge feasibility of every variation vector for gains ``h2`` (..., K)."""
    vs = variation_vectors(params.L, params.K)
    h2 = np.asarray(h2, float)
    return np.all(charge_feasible(vs, h2[..., None, :], params), axis=-1)


def _check_trace(trace: ChannelTrace, params: SystemParams, T: int | None = None):
    if trace.K != params.K:
        raise ValueError(f"trace has {trace.K} relays, params.K={params.K}")
    if trace.T != (T if T is not None else params.T):
        raise ValueError(f"trace has {trace.T} slots, params.T={params.T}")


def _slot_payoffs(h2, g2, need, params, settings, stats, storage):
    """Solve the embedded problem for every (slot, variation) flagged in ``need``.

    ``h2``/``g2`` are (n, K); ``need`` is (n, N_v). Returns rates (n, N_v) with
    -inf where not requested, and the information splits (n, N_v, K).
    """
    vs = variation_vectors(params.L, params.K)
    rows, cols = np.nonzero(need)
    rate = np.full(need.shape, -np.inf)
    lam = np.zeros(need.shape + (params.K,))
    if rows.size:
        res = solve_embedded(vs[cols], h2[rows], g2[rows], params, settings, stats, storage)
        rate[rows, cols] = res.rate(params.log_base)
        lam[rows, cols] = res.lambda_I
    return rate, lam


def _trajectory(variations, K: int, L: int) -> list:
    traj = [(0,) * K]
    for v in variations:
        traj.append(battery_step(traj[-1], v, L))
    return traj


def backward_induction(trace: ChannelTrace, params: SystemParams, settings: SolverSettings = SolverSettings(),
                       storage: str = HARVEST_USE_STORE) -> PlanResult:
    """Optimal plan with non-causal CSI; the last slot drains every battery."""
    _check_trace(trace, params, trace.T)
    T, K, L = trace.T, params.K, params.L
    vs = variation_vectors(L, K)
    nxt = next_state_table(L, K)
    drain = drain_index(L, K)
    h2, g2 = trace.h2, trace.g2
    stats = SolverStats()

    feas = feasible_mask(h2, params)
    need = feas.copy()
    need[T - 1] = False
    need[T - 1, drain] = True
    pay, lam = _slot_payoffs(h2, g2, need, params, settings, stats, storage)

    n_states = nxt.shape[0]
    choice = np.zeros((T, n_states), dtype=int)
    choice[T - 1] = drain
    U = pay[T - 1, drain]
    stats.embedded_calls += n_states
    rows = np.arange(n_states)
    for t in range(T - 2, -1, -1):
        valid = (nxt >= 0) & feas[t][None, :]
        cand = np.where(valid, pay[t][None, :] + U[np.maximum(nxt, 0)], -np.inf)
        choice[t] = np.argmax(cand, axis=1)
        U = cand[rows, choice[t]]
        stats.embedded_calls += int(valid.sum())

    s = 0
    path = []
    for t in range(T):
        vi = choice[t, s]
        path.append(vi)
        s = nxt[s, vi]
    decisions = [Decision(vs[vi], lam[t, vi]) for t, vi in enumerate(path)]
    per_slot = np.array([pay[t, vi] for t, vi in enumerate(path)])
    return PlanResult(decisions, _trajectory(vs[path], K, L), per_slot, stats.as_dict(),
                      {"value": float(U[0]), "storage": storage})


def exhaustive_search(trace: ChannelTrace, params: SystemParams, settings: SolverSettings = SolverSettings(),
                      max_sequences: int = MAX_EXHAUSTIVE_SEQUENCES) -> PlanResult:
    """Ground truth: enumerate every feasible variation sequence, nothing forced at the end."""
    _check_trace(trace, params, trace.T)
    T, K, L = trace.T, params.K, params.L
    n_raw = (2 * L + 1) ** (K * T)
    if n_raw > max_sequences:
        raise ValueError(f"exhaustive search over {n_raw} sequences exceeds the limit {max_sequences}")
    vs = variation_vectors(L, K)
    nxt = next_state_table(L, K)
    stats = SolverStats()
    feas = feasible_mask(trace.h2, params)
    pay, lam = _slot_payoffs(trace.h2, trace.g2, feas, params, settings, stats, HARVEST_USE_STORE)
    options = [[np.nonzero((nxt[s] >= 0) & feas[t])[0].tolist() for s in range(nxt.shape[0])]
               for t in range(T)]
    pay_l = pay.tolist()
    nxt_l = nxt.tolist()

    best_val = -math.inf
    best_path: list = []
    count = 0
    path = [0] * T

    def dfs(t, s, acc):
        nonlocal best_val, best_path, count
        for vi in options[t][s]:
            path[t] = vi
            val = acc + pay_l[t][vi]
            if t == T - 1:
                count += 1
                if val > best_val:
                    best_val, best_path = val, path.copy()
            else:
                dfs(t + 1, nxt_l[s][vi], val)

    dfs(0, 0, 0.0)
    stats.embedded_calls += count * T
    decisions = [Decision(vs[vi], lam[t, vi]) for t, vi in enumerate(best_path)]
    per_slot = np.array([pay[t, vi] for t, vi in enumerate(best_path)])
    return PlanResult(decisions, _trajectory(vs[best_path], K, L), per_slot, stats.as_dict(),
                      {"sequences": count})


def run_greedy(trace: ChannelTrace, params: SystemParams, settings: SolverSettings = SolverSettings()) -> PlanResult:
    """Battery never used: with empty initial batteries the greedy variation is always zero."""
    _check_trace(trace, params, trace.T)
    T, K = trace.T, params.K
    stats = SolverStats()
    res = solve_embedded(np.zeros((T, K), int), trace.h2, trace.g2, params, settings, stats)
    stats.embedded_calls += T
    zero = (0,) * K
    decisions = [Decision(zero, res.lambda_I[t]) for t in range(T)]
    return PlanResult(decisions, [zero] * (T + 1), res.rate(params.log_base), stats.as_dict())


def params_hash(params: SystemParams, quantizer: ChannelQuantizer, settings: SolverSettings) -> str:
    doc = {
        "params": asdict(params),
        "quantizer": {
            "K": quantizer.K,
            "h": [repr(float(x)) for x in quantizer.h.boundaries] + [repr(float(x)) for x in quantizer.h.representatives],
            "g": [repr(float(x)) for x in quantizer.g.boundaries] + [repr(float(x)) for x in quantizer.g.representatives],
        },
        "settings": {k: v for k, v in asdict(settings).items() if k != "trace"},
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class PolicyTable:
    """Optimised variation index and expected value per (slot, battery state, channel state)."""

    v_index: np.ndarray  # (T, N_S, N_H) into variation_vectors(L, K)
    value: np.ndarray  # (T, N_S, N_H)
    params: SystemParams
    quantizer: ChannelQuantizer
    settings: SolverSettings
    stats: dict = field(default_factory=dict)

    @property
    def entry_count(self) -> int:
        return int(self.v_index.size)

    @property
    def hash(self) -> str:
        return params_hash(self.params, self.quantizer, self.settings)

    def variation(self, t: int, levels, h_index: int) -> tuple[int, ...]:
        s = state_index(levels, self.params.L)
        vi = self.v_index[t, s, h_index]
        return tuple(int(x) for x in variation_vectors(self.params.L, self.params.K)[vi])

    def save(self, path) -> None:
        doc = {
            "format": TABLE_FORMAT,
            "version": TABLE_VERSION,
            "params_hash": self.hash,
            "params": asdict(self.params),
            "shape": list(self.v_index.shape),
            "v_index": self.v_index.ravel().tolist(),
            "value": [repr(float(x)) for x in self.value.ravel()],
        }
        Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path, params: SystemParams, quantizer: ChannelQuantizer,
             settings: SolverSettings = SolverSettings()) -> "PolicyTable":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("format") != TABLE_FORMAT or doc.get("version") != TABLE_VERSION:
            raise ValueError(f"{path}: not a version-{TABLE_VERSION} policy table")
        expected = params_hash(params, quantizer, settings)
        if doc["params_hash"] != expected:
            raise ValueError(f"{path}: params hash mismatch (file {doc['params_hash'][:12]}, "
                             f"expected {expected[:12]})")
        shape = tuple(doc["shape"])
        v_index = np.array(doc["v_index"], dtype=np.int32).reshape(shape)
        value = np.array([float(x) for x in doc["value"]]).reshape(shape)
        return cls(v_index, value, params, quantizer, settings)


def table_entry_count(params: SystemParams) -> int:
    return params.T * (params.L + 1) ** params.K * params.m ** (2 * params.K)


def build_lookup_table(quantizer: ChannelQuantizer, params: SystemParams,
                       settings: SolverSettings = SolverSettings(),
                       max_entries: int = MAX_TABLE_ENTRIES) -> PolicyTable:
    """Backward induction over (battery state, quantised channel state) on representative gains."""
    if quantizer.K != params.K or quantizer.m != params.m:
        raise ValueError("quantizer does not match params (K, m)")
    entries = table_entry_count(params)
    if entries > max_entries:
        raise MemoryError(f"policy table would hold {entries} entries (limit {max_entries})")
    T, K, L = params.T, params.K, params.L
    nxt = next_state_table(L, K)
    drain = drain_index(L, K)
    rep_h2, rep_g2 = quantizer.representative_gains()
    # same |.|^2 path a trace of these gains would take
    h2 = np.abs(np.sqrt(rep_h2) + 0j) ** 2
    g2 = np.abs(np.sqrt(rep_g2) + 0j) ** 2
    stats = SolverStats()
    feas = feasible_mask(h2, params)
    if T > 1:
        need = feas
    else:
        need = np.zeros_like(feas)
        need[:, drain] = True
    pay, _ = _slot_payoffs(h2, g2, need, params, settings, stats, HARVEST_USE_STORE)

    n_states, n_h = nxt.shape[0], quantizer.n_states
    v_index = np.zeros((T, n_states, n_h), dtype=np.int32)
    value = np.zeros((T, n_states, n_h))
    v_index[T - 1] = drain[:, None]
    value[T - 1] = pay[:, drain].T
    stats.embedded_calls += n_states * n_h
    W = value[T - 1].mean(axis=1)
    for t in range(T - 2, -1, -1):
        for s in range(n_states):
            vi = np.nonzero(nxt[s] >= 0)[0]
            cand = pay[:, vi] + W[nxt[s, vi]][None, :]
            best = np.argmax(cand, axis=1)
            v_index[t, s] = vi[best]
            value[t, s] = cand[np.arange(n_h), best]
            stats.embedded_calls += int(feas[:, vi].sum())
        W = value[t].mean(axis=1)
    return PolicyTable(v_index, value, params, quantizer, settings, stats.as_dict())


def clamp_charge(v, h2, params: SystemParams) -> tuple[int, ...]:
    """Reduce any charge beyond the harvestable power to the largest feasible grid charge."""
    out = []
    for d, g in zip(v, np.asarray(h2, float)):
        d = int(d)
        while d < 0 and not charge_feasible(d, g, params):
            d += 1
        out.append(d)
    return tuple(out)


def run_online_markov(trace: ChannelTrace, table: PolicyTable, params: SystemParams,
                      settings: SolverSettings = SolverSettings()) -> PlanResult:
    """Causal execution: look up the variation on quantised gains, re-solve splits on true gains."""
    if table.params != params:
        raise ValueError("policy table was built for different params")
    _check_trace(trace, params)
    T, K, L = params.T, params.K, params.L
    h2, g2 = trace.h2, trace.g2
    state = (0,) * K
    variations = []
    clamped = 0
    for t in range(T):
        hidx = table.quantizer.state_of(h2[t], g2[t])
        v = table.variation(t, state, hidx)
        vc = clamp_charge(v, h2[t], params)
        clamped += vc != v
        variations.append(vc)
        state = battery_step(state, vc, L)
    stats = SolverStats()
    res = solve_embedded(np.array(variations), h2, g2, params, settings, stats)
    stats.embedded_calls += T
    decisions = [Decision(v, res.lambda_I[t]) for t, v in enumerate(variations)]
    return PlanResult(decisions, _trajectory(variations, K, L), res.rate(params.log_base),
                      stats.as_dict(), {"clamped": int(clamped)})
