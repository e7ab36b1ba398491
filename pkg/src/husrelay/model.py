"""Single-slot physics of the harvest-use-store power-splitting relay network.

Energies live on a discrete battery grid. Battery levels and energy-level
variations are integer grid indices; conversion to joules (slot-normalised,
so energy and power coincide) happens only at the boundary via ``step``.

Sign convention for a variation ``v``: ``v = B(t) - B(t+1)``, so a positive
value is a net discharge and a negative value a net charge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np


class InfeasibleDecision(ValueError):
    """A battery variation or split ratio violates the slot constraints."""


@dataclass(frozen=True)
class SystemParams:
    P: float = 10.0
    K: int = 2
    T: int = 10
    L: int = 4
    alpha: float = 1.0
    eta1: float = 0.4
    eta2: float = 0.8
    sigma_b2: float = 1.0
    sigma_D2: float = 1.0
    sigma_a2: float = 0.0
    m: int = 3
    log_base: float = 2.0

    def __post_init__(self):
        checks = [
            ("P", self.P > 0),
            ("K", self.K >= 1),
            ("T", self.T >= 1),
            ("L", self.L >= 1),
            ("alpha", self.alpha > 0),
            ("eta1", 0 < self.eta1 <= 1),
            ("eta2", 0 < self.eta2 <= 1),
            ("sigma_b2", self.sigma_b2 > 0),
            ("sigma_D2", self.sigma_D2 > 0),
            ("sigma_a2", self.sigma_a2 == 0),
            ("m", self.m >= 1),
            ("log_base", self.log_base > 1),
        ]
        for name, ok in checks:
            if not ok:
                raise ValueError(f"invalid SystemParams.{name}={getattr(self, name)!r}")

    @property
    def b_max(self) -> float:
        return self.alpha * self.P

    @property
    def step(self) -> float:
        return self.b_max / self.L

    @property
    def grid(self) -> "BatteryGrid":
        return BatteryGrid(self.b_max, self.L)

    def with_snr_db(self, snr_db: float) -> "SystemParams":
        """Source power such that P / sigma equals the given average SNR."""
        return replace(self, P=self.sigma_b2 * 10.0 ** (snr_db / 10.0))

    def replace(self, **changes) -> "SystemParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class BatteryGrid:
    b_max: float
    L: int

    @property
    def step(self) -> float:
        return self.b_max / self.L

    @property
    def levels(self) -> np.ndarray:
        return np.arange(self.L + 1) * self.step

    def energy(self, level) -> np.ndarray | float:
        return np.asarray(level) * self.step


@dataclass(frozen=True)
class SlotChannel:
    """Complex link gains of one slot: source->relay ``h`` and relay->destination ``g``."""

    h: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.h, dtype=complex))
        g = np.atleast_1d(np.asarray(self.g, dtype=complex))
        if h.shape != g.shape or h.ndim != 1:
            raise ValueError("h and g must be 1-D vectors of equal length")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(g))):
            raise ValueError("channel gains must be finite")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "g", g)

    @property
    def h2(self) -> np.ndarray:
        return np.abs(self.h) ** 2

    @property
    def g2(self) -> np.ndarray:
        return np.abs(self.g) ** 2

    @property
    def K(self) -> int:
        return self.h.size


@dataclass(frozen=True)
class SplitRatios:
    lambda_I: np.ndarray
    lambda_F: np.ndarray
    lambda_B: np.ndarray


@dataclass(frozen=True)
class Decision:
    """Integer variation (grid steps) plus the information split per relay."""

    variation: tuple[int, ...]
    lambda_I: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "variation", tuple(int(v) for v in self.variation))
        lam = np.zeros(len(self.variation)) if self.lambda_I is None else self.lambda_I
        object.__setattr__(self, "lambda_I", np.asarray(lam, dtype=float))


def beamforming_phase(h_k: complex, g_k: complex) -> float:
    if h_k == 0 or g_k == 0:
        return 0.0
    return -(np.angle(h_k) + np.angle(g_k))


def charge_quantize(headroom_levels: int, gross_stored_power: float, step: float, eta2: float) -> int:
    """Grid levels actually charged: limited by battery headroom and by the discrete grid."""
    n = math.floor(eta2 * gross_stored_power / step)
    return max(0, min(int(headroom_levels), n))


def charge_cap(h2, params: SystemParams):
    """Largest storable energy in a slot, eta1*eta2*P*|h|^2."""
    return params.eta1 * params.eta2 * params.P * np.asarray(h2)


def charge_feasible(v_levels, h2, params: SystemParams):
    """Elementwise: is the requested charge (if any) within the harvestable power?"""
    v = np.asarray(v_levels)
    return ~((v < 0) & (-v * params.step > charge_cap(h2, params)))


def split_from_variation(v_k: float, h_k: complex, params: SystemParams) -> tuple[float, float]:
    """Return ``(b_discharge, lambda_B)`` for an energy variation ``v_k``."""
    cap = float(charge_cap(abs(h_k) ** 2, params))
    if v_k >= 0:
        return float(v_k), 0.0
    if -v_k > cap:
        raise InfeasibleDecision(f"charge {-v_k} exceeds harvestable {cap}")
    return 0.0, -v_k / cap


def relay_transmit_power(lambda_I_k: float, v_k: float, h_k: complex, params: SystemParams) -> float:
    h2 = abs(h_k) ** 2
    p = (params.eta1 * (1.0 - lambda_I_k) * params.P * h2
         + min(0.0, v_k / params.eta2) + max(0.0, v_k))
    if p < -1e-12 * max(1.0, params.P * h2):
        raise InfeasibleDecision(f"negative relay power {p}")
    return max(p, 0.0)


def amplification_gain(lambda_I_k: float, p_R_k: float, h_k: complex, params: SystemParams) -> float:
    received = params.P * abs(h_k) ** 2 + params.sigma_a2
    return math.sqrt(p_R_k / (lambda_I_k * received + params.sigma_b2))


def lambda_I_upper(v_k: float, h_k: complex, params: SystemParams) -> float:
    """Upper end of the admissible information split (constraint C1)."""
    if v_k >= 0:
        return 1.0
    cap = float(charge_cap(abs(h_k) ** 2, params))
    if cap == 0:
        return -math.inf
    return 1.0 + v_k / cap


def split_ratios(decision: Decision, ch: SlotChannel, params: SystemParams) -> SplitRatios:
    lam_I = decision.lambda_I
    lam_B = np.array([
        split_from_variation(v * params.step, h, params)[1]
        for v, h in zip(decision.variation, ch.h)
    ])
    return SplitRatios(lam_I, 1.0 - lam_I - lam_B, lam_B)


def _check_lambda(decision: Decision, ch: SlotChannel, params: SystemParams) -> None:
    if len(decision.variation) != ch.K:
        raise InfeasibleDecision("decision length does not match relay count")
    for k, (v, lam, h) in enumerate(zip(decision.variation, decision.lambda_I, ch.h)):
        upper = lambda_I_upper(v * params.step, h, params)
        if upper < 0:
            raise InfeasibleDecision(f"relay {k}: charge exceeds harvestable power")
        if not (0.0 <= lam <= upper + 1e-12):
            raise InfeasibleDecision(f"relay {k}: lambda_I={lam} outside [0, {upper}]")


def slot_snr(ch: SlotChannel, decision: Decision, params: SystemParams) -> float:
    """End-to-end SNR at the destination with coherent distributed beamforming."""
    _check_lambda(decision, ch, params)
    amp = 0.0
    noise = params.sigma_D2
    for v, lam, h, g in zip(decision.variation, decision.lambda_I, ch.h, ch.g):
        p_r = relay_transmit_power(lam, v * params.step, h, params)
        beta = amplification_gain(lam, p_r, h, params)
        # beamforming rotation makes each relay's composite gain real and nonnegative
        amp += beta * abs(h * g) * math.sqrt(lam)
        noise += beta ** 2 * abs(g) ** 2 * params.sigma_b2
    return params.P * amp ** 2 / noise


def rate_from_snr(snr, log_base: float = 2.0):
    return 0.5 * np.log1p(snr) / math.log(log_base)


def payoff(ch: SlotChannel, decision: Decision, params: SystemParams) -> float:
    return float(rate_from_snr(slot_snr(ch, decision, params), params.log_base))


def battery_step(state: Sequence[int], v: Sequence[int], L: int) -> tuple[int, ...]:
    nxt = tuple(int(s) - int(d) for s, d in zip(state, v))
    if any(n < 0 or n > L for n in nxt):
        raise InfeasibleDecision(f"state {tuple(state)} with variation {tuple(v)} leaves [0, {L}]")
    return nxt


def decision_feasible(state: Sequence[int], v: Sequence, ch: SlotChannel, params: SystemParams) -> bool:
    """C2 (on grid), C3 (battery bounds) and non-negative C1 upper bound."""
    if len(state) != len(v) or len(v) != ch.K:
        return False
    for s, d, h2 in zip(state, v, ch.h2):
        if int(d) != d or not (-params.L <= d <= params.L):
            return False
        if not (s - params.L <= d <= s):
            return False
        if not charge_feasible(d, h2, params):
            return False
    return True
