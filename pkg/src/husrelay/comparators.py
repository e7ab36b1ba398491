"""Baseline relaying strategies the proposed design is compared against."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelTrace
from .embedded import HARVEST_STORE_USE, SolverSettings
from .model import Decision, SystemParams, payoff, rate_from_snr
from .planner import PlanResult, backward_induction, run_greedy

STRATEGIES = ("time_switching", "harvest_store_use", "harvest_use", "best_relay", "random_relay", "fixed_ratio")


@dataclass(frozen=True)
class ComparatorConfig:
    strategy: str = "time_switching"
    tau_step: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown comparator {self.strategy!r}")
        if not (0 < self.tau_step < 0.5):
            raise ValueError("tau_step must lie in (0, 0.5)")

    @property
    def tau_grid(self) -> np.ndarray:
        n = int(round(1.0 / self.tau_step))
        return np.arange(1, n) / n


def time_switching_rate(tau, h2, g2, params: SystemParams):
    """Per-slot rate of time-switching relaying for harvest fractions ``tau``.

    A fraction tau of the slot harvests the full received power; the rest is
    split equally between reception and coherent forwarding with all of it.
    """
    tau = np.asarray(tau, float)[..., None]
    hP = params.P * np.asarray(h2, float)
    g2 = np.asarray(g2, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        p_r = np.where(tau < 1, 2.0 * params.eta1 * tau * hP / (1.0 - tau), 0.0)
    beta2 = p_r / (hP + params.sigma_b2)
    amp = np.sum(np.sqrt(beta2 * hP * g2), axis=-1)
    snr = amp ** 2 / (np.sum(beta2 * g2 * params.sigma_b2, axis=-1) + params.sigma_D2)
    return (1.0 - tau[..., 0]) * rate_from_snr(snr, params.log_base)


def run_time_switching(trace: ChannelTrace, params: SystemParams, cfg: ComparatorConfig = ComparatorConfig()) -> PlanResult:
    grid = cfg.tau_grid
    rates = time_switching_rate(grid[:, None], trace.h2[None], trace.g2[None], params)  # (n_tau, T)
    best = np.argmax(rates, axis=0)
    per_slot = rates[best, np.arange(trace.T)]
    zero = (0,) * trace.K
    decisions = [Decision(zero, np.ones(trace.K)) for _ in range(trace.T)]
    return PlanResult(decisions, [zero] * (trace.T + 1), per_slot, {},
                      {"tau": grid[best].tolist()})


def run_harvest_store_use(trace: ChannelTrace, params: SystemParams,
                          settings: SolverSettings = SolverSettings()) -> PlanResult:
    """Optimal planning when every harvested joule passes through the lossy battery."""
    return backward_induction(trace, params, settings, storage=HARVEST_STORE_USE)


def run_harvest_use(trace: ChannelTrace, params: SystemParams,
                    settings: SolverSettings = SolverSettings()) -> PlanResult:
    """Battery-free operation; identical to the greedy policy."""
    return run_greedy(trace, params, settings)


def run_fixed_ratio(trace: ChannelTrace, params: SystemParams, lambda_I: float = 0.5) -> PlanResult:
    """Battery-free power splitting with a constant information ratio."""
    zero = (0,) * trace.K
    decisions = [Decision(zero, np.full(trace.K, lambda_I)) for _ in range(trace.T)]
    per_slot = np.array([payoff(trace.slot(t), d, params) for t, d in enumerate(decisions)])
    return PlanResult(decisions, [zero] * (trace.T + 1), per_slot, {})


def select_relays(trace: ChannelTrace, mode: str, seed: int = 0) -> np.ndarray:
    """Index of the single forwarding relay per slot."""
    if mode == "best":
        return np.argmax(np.abs(trace.h * trace.g), axis=1)
    if mode == "random":
        rng = np.random.Generator(np.random.PCG64(seed))
        return rng.integers(0, trace.K, size=trace.T)
    raise ValueError(f"unknown selection mode {mode!r}")


def run_relay_selection(trace: ChannelTrace, params: SystemParams, mode: str = "best",
                        settings: SolverSettings = SolverSettings(), seed: int = 0) -> PlanResult:
    """Only one relay forwards per slot; batteries are re-optimised for that schedule.

    Unselected relays get a zero forwarding link for the slot, so they may
    still harvest and store but contribute nothing at the destination.
    """
    sel = select_relays(trace, mode, seed)
    mask = np.zeros((trace.T, trace.K), bool)
    mask[np.arange(trace.T), sel] = True
    reduced = ChannelTrace(trace.h, np.where(mask, trace.g, 0.0), trace.seed)
    plan = backward_induction(reduced, params, settings)
    plan.meta["selected"] = sel.tolist()
    return plan


def min_slots_to_deliver(per_slot_payoff, target_bits: float) -> float:
    """First slot count whose cumulative throughput reaches the target; inf if never."""
    cum = np.cumsum(per_slot_payoff)
    hit = np.nonzero(cum >= target_bits)[0]
    return float(hit[0] + 1) if hit.size else math.inf
