"""Block-fading channel traces and the equal-probability finite-state quantizer.

Traces are drawn from numpy's PCG64 bit generator through ``Generator.random``
(53-bit uniform doubles) and inverse-CDF transforms only, so a seed pins the
trace bit-exactly: for link power ``mu`` the power gain is ``-mu*log1p(-u1)``
and the phase ``2*pi*u2``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .model import SlotChannel, SystemParams

RNG_ALGORITHM = "numpy.PCG64/uniform-inverse-cdf/v1"


@dataclass(frozen=True)
class FadingParams:
    d_sr: float = 1.0
    d_rd: float = 5.0
    path_loss_exp: float = 2.0

    def __post_init__(self):
        if self.d_sr <= 0 or self.d_rd <= 0:
            raise ValueError("distances must be positive")
        if self.path_loss_exp < 0:
            raise ValueError("path_loss_exp must be nonnegative")

    @property
    def mean_h2(self) -> float:
        return self.d_sr ** (-self.path_loss_exp)

    @property
    def mean_g2(self) -> float:
        return self.d_rd ** (-self.path_loss_exp)


@dataclass(frozen=True)
class ChannelTrace:
    h: np.ndarray  # (T, K) complex
    g: np.ndarray  # (T, K) complex
    seed: int | None = None

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        g = np.asarray(self.g, dtype=complex)
        if h.ndim != 2 or h.shape != g.shape:
            raise ValueError("h and g must be T x K matrices of equal shape")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "g", g)

    @property
    def T(self) -> int:
        return self.h.shape[0]

    @property
    def K(self) -> int:
        return self.h.shape[1]

    @property
    def h2(self) -> np.ndarray:
        return np.abs(self.h) ** 2

    @property
    def g2(self) -> np.ndarray:
        return np.abs(self.g) ** 2

    def slot(self, t: int) -> SlotChannel:
        return SlotChannel(self.h[t], self.g[t])

    def __iter__(self):
        return (self.slot(t) for t in range(self.T))


def _rayleigh(rng: np.random.Generator, mean_power: float, shape) -> np.ndarray:
    u = rng.random((2,) + tuple(shape))
    power = -mean_power * np.log1p(-u[0])
    return np.sqrt(power) * np.exp(2j * np.pi * u[1])


def sample_trace(params: SystemParams, fading: FadingParams = FadingParams(), seed: int = 0) -> ChannelTrace:
    rng = np.random.Generator(np.random.PCG64(seed))
    shape = (params.T, params.K)
    h = _rayleigh(rng, fading.mean_h2, shape)
    g = _rayleigh(rng, fading.mean_g2, shape)
    return ChannelTrace(h, g, seed)


def write_trace_csv(trace: ChannelTrace, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["t", "k", "re_h", "im_h", "re_g", "im_g"])
        for t in range(trace.T):
            for k in range(trace.K):
                h, g = trace.h[t, k], trace.g[t, k]
                w.writerow([t, k] + [repr(float(x)) for x in (h.real, h.imag, g.real, g.imag)])


def read_trace_csv(path, seed: int | None = None) -> ChannelTrace:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    T = 1 + max(int(r["t"]) for r in rows)
    K = 1 + max(int(r["k"]) for r in rows)
    h = np.zeros((T, K), complex)
    g = np.zeros((T, K), complex)
    for r in rows:
        t, k = int(r["t"]), int(r["k"])
        h[t, k] = complex(float(r["re_h"]), float(r["im_h"]))
        g[t, k] = complex(float(r["re_g"]), float(r["im_g"]))
    return ChannelTrace(h, g, seed)


@dataclass(frozen=True)
class LinkQuantizer:
    """Equal-probability partition of an exponential power gain into ``m`` states."""

    mean: float
    boundaries: np.ndarray
    representatives: np.ndarray

    @property
    def m(self) -> int:
        return self.representatives.size

    @property
    def state_prob(self) -> np.ndarray:
        return np.full(self.m, 1.0 / self.m)


def _exp_conditional_mean(mean: float, lo: float, hi: float) -> float:
    # E[X | lo <= X < hi] for X ~ Exp(mean), closed form of the partial expectation.
    def partial(x):
        if math.isinf(x):
            return 0.0, 0.0
        e = math.exp(-x / mean)
        return (x + mean) * e, e

    num_lo, p_lo = partial(lo)
    num_hi, p_hi = partial(hi)
    return (num_lo - num_hi) / (p_lo - p_hi)


def build_quantizer(mean_power: float, m: int) -> LinkQuantizer:
    if m < 1:
        raise ValueError("m must be >= 1")
    if mean_power <= 0:
        raise ValueError("mean_power must be positive")
    k = np.arange(m + 1)
    with np.errstate(divide="ignore"):
        bounds = -mean_power * np.log1p(-k / m)
    bounds[0], bounds[-1] = 0.0, np.inf
    reps = np.array([_exp_conditional_mean(mean_power, bounds[i], bounds[i + 1]) for i in range(m)])
    return LinkQuantizer(mean_power, bounds, reps)


def quantize(gain_power, quantizer: LinkQuantizer):
    """Interval index of a power gain; boundary values go to the upper interval."""
    idx = np.searchsorted(quantizer.boundaries, gain_power, side="right") - 1
    idx = np.clip(idx, 0, quantizer.m - 1)
    return int(idx) if np.ndim(idx) == 0 else idx


@dataclass(frozen=True)
class ChannelQuantizer:
    """Joint quantizer over the 2K links: indices ordered (h_1..h_K, g_1..g_K)."""

    h: LinkQuantizer
    g: LinkQuantizer
    K: int

    def __post_init__(self):
        if self.h.m != self.g.m:
            raise ValueError("link quantizers must share the state count")

    @classmethod
    def build(cls, params: SystemParams, fading: FadingParams = FadingParams()) -> "ChannelQuantizer":
        return cls(build_quantizer(fading.mean_h2, params.m),
                   build_quantizer(fading.mean_g2, params.m), params.K)

    @property
    def m(self) -> int:
        return self.h.m

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.m,) * (2 * self.K)

    @property
    def n_states(self) -> int:
        return self.m ** (2 * self.K)

    def flatten(self, indices) -> int:
        return int(np.ravel_multi_index(tuple(int(i) for i in indices), self.dims))

    def unflatten(self, index: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(int(index), self.dims))

    def state_of(self, h2, g2) -> int:
        ih = quantize(np.asarray(h2), self.h)
        ig = quantize(np.asarray(g2), self.g)
        return self.flatten(np.concatenate([np.atleast_1d(ih), np.atleast_1d(ig)]))

    def representative_gains(self) -> tuple[np.ndarray, np.ndarray]:
        """Representative (|h|^2, |g|^2) for every joint state, each of shape (m^2K, K)."""
        idx = np.array(np.unravel_index(np.arange(self.n_states), self.dims)).T
        return self.h.representatives[idx[:, :self.K]], self.g.representatives[idx[:, self.K:]]

    def representative_channel(self, index: int) -> SlotChannel:
        h2, g2 = self.representative_gains()
        return SlotChannel(np.sqrt(h2[index]) + 0j, np.sqrt(g2[index]) + 0j)


def transition_prob(frm, to, m: int, K: int) -> float:
    """Block fading: the next joint state is independent of the current one."""
    del frm, to
    return float(m) ** (-2 * K)
