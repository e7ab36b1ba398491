"""Per-slot SNR maximisation over the information splits.

Alternating optimisation cycles over relays; each coordinate is a fractional
program solved by Dinkelbach's method, whose parametric subproblem is concave
in the coordinate and is maximised by bisection on the derivative sign.

Everything is vectorised over a leading batch axis. Every row is an
independent problem and all updates are masked per row, so a row's result
does not depend on what else is in the batch.

Working variable per relay: ``x = lambda_I * P|h|^2 + sigma_b2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import InfeasibleDecision, SystemParams, charge_feasible, rate_from_snr

HARVEST_USE_STORE = "hus"
HARVEST_STORE_USE = "hsu"


@dataclass(frozen=True)
class SolverSettings:
    dinkelbach_tol: float = 1e-8
    alternating_tol: float = 1e-8
    bisection_tol: float = 1e-10
    max_dinkelbach: int = 50
    max_sweeps: int = 50
    trace: bool = False

    def __post_init__(self):
        if min(self.dinkelbach_tol, self.alternating_tol, self.bisection_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_dinkelbach < 1 or self.max_sweeps < 1:
            raise ValueError("iteration limits must be >= 1")


@dataclass
class SolverStats:
    """Counters shared across solver invocations.

    ``embedded_calls`` counts embedded-problem evaluations requested by a
    planning algorithm; ``solves`` counts rows actually optimised after
    de-duplication (a slot's payoff depends only on the channel and ``v``).
    """

    embedded_calls: int = 0
    solves: int = 0
    dinkelbach_iterations: int = 0
    sweeps: int = 0
    nonconverged: int = 0

    def merge(self, other: "SolverStats") -> None:
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass(frozen=True)
class EmbeddedContext:
    """Batched problem data, arrays of shape (B, K)."""

    a: np.ndarray
    x_hi: np.ndarray
    c: np.ndarray  # conversion efficiency times |g|^2
    hP: np.ndarray  # P|h|^2
    sigma_b2: float
    sigma_D2: float

    @property
    def x_lo(self) -> float:
        return self.sigma_b2

    @property
    def shape(self):
        return self.a.shape

    def take(self, rows) -> "EmbeddedContext":
        return EmbeddedContext(self.a[rows], self.x_hi[rows], self.c[rows], self.hP[rows],
                               self.sigma_b2, self.sigma_D2)


def build_context(v_levels, h2, g2, params: SystemParams, storage: str = HARVEST_USE_STORE) -> EmbeddedContext:
    """Problem data for variations ``v_levels`` (grid steps) and power gains.

    ``storage="hsu"`` routes all forwarding power through the battery, so the
    storage efficiency applies to the whole harvested budget.
    """
    v_levels = np.atleast_2d(np.asarray(v_levels))
    h2 = np.atleast_2d(np.asarray(h2, dtype=float))
    g2 = np.atleast_2d(np.asarray(g2, dtype=float))
    if not np.all(charge_feasible(v_levels, h2, params)):
        raise InfeasibleDecision("requested charge exceeds harvestable power")
    v = v_levels * params.step
    e1, e12 = params.eta1, params.eta1 * params.eta2
    hP = params.P * h2
    if storage == HARVEST_USE_STORE:
        shift = np.maximum(0.0, v / e1) + np.minimum(0.0, v / e12)
        c = e1 * g2
    elif storage == HARVEST_STORE_USE:
        shift = v / e12
        c = e12 * g2
    else:
        raise ValueError(f"unknown storage model {storage!r}")
    a = hP + shift + params.sigma_b2
    x_hi = hP + np.minimum(0.0, v / e12) + params.sigma_b2
    x_hi = np.minimum(x_hi, a)
    # charging exactly the harvestable power collapses the interval up to rounding
    x_hi = np.where(x_hi - params.sigma_b2 <= 1e-12 * (hP + params.sigma_b2), params.sigma_b2, x_hi)
    return EmbeddedContext(a, x_hi, c, hP, params.sigma_b2, params.sigma_D2)


def _terms(x, ctx: EmbeddedContext):
    """Per-relay signal amplitude and noise terms of the objective."""
    r = np.maximum(ctx.a - x, 0.0)
    s = np.maximum(1.0 - ctx.sigma_b2 / x, 0.0)
    sig = np.sqrt(ctx.c * r * s)
    noise = ctx.c * r * ctx.sigma_b2 / x
    return sig, noise


def objective_j(x, ctx: EmbeddedContext):
    """Destination SNR as a function of the working variables, shape (B,)."""
    x = np.atleast_2d(x)
    tol = 1e-9 * np.maximum(1.0, ctx.x_hi)
    if np.any(x < ctx.x_lo - tol) or np.any(x > ctx.x_hi + tol):
        raise InfeasibleDecision("x outside [sigma_b2, x_hi]")
    sig, noise = _terms(x, ctx)
    return sig.sum(axis=1) ** 2 / (noise.sum(axis=1) + ctx.sigma_D2)


def _split(x, j, ctx):
    """F1 and F2 pieces: coordinate-j terms and the fixed remainder."""
    sig, noise = _terms(x, ctx)
    sig[:, j] = 0.0
    noise[:, j] = 0.0
    return sig.sum(axis=1), noise.sum(axis=1) + ctx.sigma_D2


def subtractive_value(xj, q, j, S, N, ctx):
    """F1(x_j) - q F2(x_j) with the other coordinates folded into S and N."""
    a, c = ctx.a[:, j], ctx.c[:, j]
    r = np.maximum(a - xj, 0.0)
    s = np.maximum(1.0 - ctx.sigma_b2 / xj, 0.0)
    f1 = (np.sqrt(c * r * s) + S) ** 2
    f2 = c * r * ctx.sigma_b2 / xj + N
    return f1 - q * f2, f1, f2


def _derivative(xj, q, a, c, S, sb2):
    u = (a - xj) * (1.0 - sb2 / xj)
    du = -1.0 + a * sb2 / xj ** 2
    sig = np.sqrt(c * np.maximum(u, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(S > 0, S / sig, 0.0)
        ratio = np.where((S > 0) & (sig == 0), np.inf, ratio)
        grad_f1 = c * du * (1.0 + ratio)
        grad_f1 = np.where((c == 0) | ((du == 0) & ~np.isfinite(ratio)), 0.0, grad_f1)
    return grad_f1 + q * c * sb2 * a / xj ** 2


def _maximize_subtractive(q, S, a, c, x_lo, hi, settings: SolverSettings):
    """Per-row argmax of the concave F1 - q F2 on [x_lo, hi] by derivative bisection."""
    out = np.full(a.shape, float(x_lo))
    live = (hi > x_lo) & (c > 0)
    if not np.any(live):
        return out
    idx = np.nonzero(live)[0]
    hi_i = hi[idx]
    qi, ai, ci, Si = q[idx], a[idx], c[idx], S[idx]
    nudge = 1e-12 * (hi_i - x_lo)
    d_lo = _derivative(x_lo + nudge, qi, ai, ci, Si, x_lo)
    d_hi = _derivative(hi_i - nudge, qi, ai, ci, Si, x_lo)
    res = np.where(d_lo <= 0, x_lo, np.where(d_hi >= 0, hi_i, np.nan))
    todo = np.isnan(res)
    b_lo, b_hi = np.full(idx.size, float(x_lo)), hi_i.copy()
    act = np.nonzero(todo & (b_hi - b_lo > settings.bisection_tol))[0]
    while act.size:
        mid = 0.5 * (b_lo[act] + b_hi[act])
        d = _derivative(mid, qi[act], ai[act], ci[act], Si[act], x_lo)
        up = d > 0
        b_lo[act[up]] = mid[up]
        b_hi[act[~up]] = mid[~up]
        act = act[b_hi[act] - b_lo[act] > settings.bisection_tol]
    out[idx] = np.where(todo, 0.5 * (b_lo + b_hi), res)
    return out


def solve_p4(q, j: int, x_fixed, ctx: EmbeddedContext, settings: SolverSettings = SolverSettings()) -> np.ndarray:
    """Maximiser over coordinate j of F1 - q F2, other coordinates fixed at ``x_fixed``.

    Ties (a coordinate the objective does not depend on) resolve to the lower bound.
    """
    x_fixed = np.atleast_2d(np.asarray(x_fixed, float))
    S, _ = _split(x_fixed, j, ctx)
    q = np.broadcast_to(np.asarray(q, float), S.shape)
    return _maximize_subtractive(q, S, ctx.a[:, j], ctx.c[:, j], ctx.x_lo, ctx.x_hi[:, j], settings)


@dataclass
class DinkelbachResult:
    x: np.ndarray
    q: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    trace: list = field(default_factory=list)  # per row: list of (q_n, F(q_n))


def dinkelbach(j: int, x: np.ndarray, ctx: EmbeddedContext, settings: SolverSettings = SolverSettings()) -> DinkelbachResult:
    """Optimise coordinate j of every row with the other coordinates held at ``x``."""
    x = np.atleast_2d(np.asarray(x, float))
    B = x.shape[0]
    S, N = _split(x, j, ctx)
    a, c, hi = ctx.a[:, j], ctx.c[:, j], ctx.x_hi[:, j]
    q = np.zeros(B)
    x_best = np.full(B, ctx.x_lo)
    q_best = np.zeros(B)
    iters = np.zeros(B, int)
    converged = np.zeros(B, bool)
    traces = [[] for _ in range(B)] if settings.trace else []
    ratio_best = np.full(B, -np.inf)
    act = np.arange(B)
    for _ in range(settings.max_dinkelbach):
        if not act.size:
            break
        xj = _maximize_subtractive(q[act], S[act], a[act], c[act], ctx.x_lo, hi[act], settings)
        F, f1, f2 = subtractive_value(xj, q[act], j, S[act], N[act], ctx.take(act))
        iters[act] += 1
        ratio = f1 / f2
        if settings.trace:
            for r, qn, Fn in zip(act, q[act], F):
                traces[r].append((float(qn), float(Fn)))
        better = ratio > ratio_best[act]
        ratio_best[act[better]] = ratio[better]
        x_best[act[better]] = xj[better]
        done = F < settings.dinkelbach_tol
        x_best[act[done]] = xj[done]
        q_best[act[done]] = ratio[done]
        converged[act[done]] = True
        q[act[~done]] = ratio[~done]
        act = act[~done]
    if act.size:
        q_best[act] = ratio_best[act]
    return DinkelbachResult(x_best, q_best, iters, converged, traces)


@dataclass
class EmbeddedResult:
    lambda_I: np.ndarray  # (B, K)
    snr: np.ndarray  # (B,)
    x: np.ndarray  # (B, K)
    sweeps: np.ndarray
    converged: np.ndarray
    dinkelbach_iterations: int
    trace: list = field(default_factory=list)

    def rate(self, log_base: float = 2.0) -> np.ndarray:
        return rate_from_snr(self.snr, log_base)


def solve_context(ctx: EmbeddedContext, settings: SolverSettings = SolverSettings(),
                  stats: SolverStats | None = None) -> EmbeddedResult:
    """Cyclic coordinate ascent (relay order 0..K-1) with Dinkelbach coordinate updates.

    With ``settings.trace`` each row's trace is a list of dicts with keys
    ``sweep, j, iter, q, F, J`` (``iter``/``q``/``F`` from Dinkelbach; ``J``
    after the coordinate update).
    """
    B, K = ctx.shape
    x = np.full((B, K), ctx.x_lo)
    J = objective_j(x, ctx)
    sweeps = np.zeros(B, int)
    converged = np.zeros(B, bool)
    traces = [[] for _ in range(B)] if settings.trace else []
    total_dk = 0
    # zero-gain or collapsed coordinates stay at x_lo
    movable = (ctx.c > 0) & (ctx.x_hi > ctx.x_lo)
    act = np.nonzero(movable.any(axis=1))[0]
    converged[~movable.any(axis=1)] = True
    for sweep in range(1, settings.max_sweeps + 1):
        if not act.size:
            break
        sub = ctx.take(act)
        J_start = J[act].copy()
        for j in range(K):
            rows = np.nonzero(movable[act, j])[0]
            if not rows.size:
                continue
            rctx = sub.take(rows)
            res = dinkelbach(j, x[act[rows]], rctx, settings)
            total_dk += int(res.iterations.sum())
            cand = x[act[rows]].copy()
            cand[:, j] = res.x
            J_new = objective_j(cand, rctx)
            keep = J_new >= J[act[rows]]
            upd = act[rows][keep]
            x[upd] = cand[keep]
            J[upd] = J_new[keep]
            if settings.trace:
                for n, r in enumerate(act[rows]):
                    for it, (qn, Fn) in enumerate(res.trace[n], start=1):
                        traces[r].append({"sweep": sweep, "j": j, "iter": it, "q": qn,
                                          "F": Fn, "J": float(J[r])})
        sweeps[act] = sweep
        done = (J[act] - J_start) < settings.alternating_tol
        converged[act[done]] = True
        act = act[~done]
    lam = np.where(ctx.hP > 0, (x - ctx.sigma_b2) / np.where(ctx.hP > 0, ctx.hP, 1.0), 0.0)
    lam = np.clip(lam, 0.0, None)
    if stats is not None:
        stats.solves += B
        stats.sweeps += int(sweeps.sum())
        stats.dinkelbach_iterations += total_dk
        stats.nonconverged += int((~converged).sum())
    return EmbeddedResult(lam, J, x, sweeps, converged, total_dk, traces)


def solve_embedded(v_levels, h2, g2, params: SystemParams, settings: SolverSettings = SolverSettings(),
                   stats: SolverStats | None = None, storage: str = HARVEST_USE_STORE) -> EmbeddedResult:
    """Optimal information splits for given variations; inputs may be (K,) or (B, K)."""
    ctx = build_context(v_levels, h2, g2, params, storage)
    return solve_context(ctx, settings, stats)


def j_upper(ctx: EmbeddedContext) -> np.ndarray:
    """Bound obtained by letting every relay use all power for both information and forwarding."""
    b = ctx.hP + ctx.sigma_b2
    r = ctx.a - ctx.sigma_b2
    num = np.sqrt(ctx.c * r * (1.0 - ctx.sigma_b2 / b)).sum(axis=1) ** 2
    den = (ctx.c * r * ctx.sigma_b2 / b).sum(axis=1) + ctx.sigma_D2
    return num / den
