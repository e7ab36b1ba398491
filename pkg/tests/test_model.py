"""Single-slot physics: split ratios, relay power, SNR, payoff, battery moves."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from husrelay.model import (Decision, InfeasibleDecision, SlotChannel, SystemParams, amplification_gain,
                            battery_step, beamforming_phase, charge_quantize, decision_feasible, payoff,
                            rate_from_snr, relay_transmit_power, slot_snr, split_from_variation,
                            split_ratios)

# P=10, |h|^2=1 gives a harvest cap eta1*eta2*P|h|^2 = 3.2
BASE = SystemParams(P=10.0, K=1, T=1, L=4, alpha=0.4)  # step = 1


def one_relay(h=1.0, g=1.0):
    return SlotChannel(np.array([h]), np.array([g]))


# -- parameter validation -------------------------------------------------------

@pytest.mark.parametrize("field,value", [("P", 0.0), ("K", 0), ("T", 0), ("L", 0), ("eta1", 0.0),
                                         ("eta1", 1.5), ("eta2", 0.0), ("sigma_b2", 0.0),
                                         ("sigma_D2", -1.0), ("sigma_a2", 0.1), ("m", 0)])
def test_params_reject_invalid(field, value):
    with pytest.raises(ValueError, match=field):
        SystemParams(**{field: value})


def test_grid_step_times_levels():
    p = SystemParams(P=7.3, alpha=0.9, L=6)
    assert p.grid.levels[-1] == pytest.approx(p.b_max)
    assert p.step * p.L == pytest.approx(p.b_max, rel=1e-15)


def test_snr_db_sets_power():
    assert SystemParams(sigma_b2=2.0).with_snr_db(10).P == pytest.approx(20.0)


# -- spec examples ----------------------------------------------------------------

@pytest.mark.parametrize("h,g,expected", [
    (1, 1, 0.0),
    (1j, 1, -math.pi / 2),
    (np.exp(1j * math.pi / 4), np.exp(1j * math.pi / 4), -math.pi / 2),
    (0, 1j, 0.0),
])
def test_beamforming_phase(h, g, expected):
    assert beamforming_phase(h, g) == pytest.approx(expected)


def test_beamforming_phase_makes_composite_real():
    rng = np.random.default_rng(1)
    h, g = rng.normal(size=2) + 1j * rng.normal(size=2)
    z = h * g * np.exp(1j * beamforming_phase(h, g))
    assert abs(z.imag) < 1e-12 and z.real > 0


@pytest.mark.parametrize("headroom,eta2_gross,expected", [(1, 2.5, 1), (4, 0.7, 0), (0, 10.0, 0)])
def test_charge_quantize(headroom, eta2_gross, expected):
    assert charge_quantize(headroom, eta2_gross / 0.8, 1.0, 0.8) == expected


@given(st.integers(0, 10), st.floats(0, 100), st.floats(0.01, 5), st.floats(0.05, 1))
def test_charge_quantize_bounds(headroom, gross, step, eta2):
    n = charge_quantize(headroom, gross, step, eta2)
    assert 0 <= n <= headroom
    assert n * step <= eta2 * gross + 1e-12


def test_split_from_variation_examples():
    assert split_from_variation(1.0, 1.0, BASE) == (1.0, 0.0)
    b, lam_b = split_from_variation(-2.0, 1.0, BASE)
    assert b == 0.0 and lam_b == pytest.approx(0.625)
    with pytest.raises(InfeasibleDecision):
        split_from_variation(-4.0, 1.0, BASE)


@pytest.mark.parametrize("lam,v,expected", [(0.5, 0.0, 2.0), (0.0, -2.0, 1.5), (0.5, 1.0, 3.0)])
def test_relay_transmit_power_examples(lam, v, expected):
    assert relay_transmit_power(lam, v, 1.0, BASE) == pytest.approx(expected)


@pytest.mark.parametrize("lam,p_r,expected", [(0.5, 2.0, math.sqrt(1 / 3)), (0.3, 0.0, 0.0), (0.0, 1.0, 1.0)])
def test_amplification_gain_examples(lam, p_r, expected):
    assert amplification_gain(lam, p_r, 1.0, BASE) == pytest.approx(expected)


@pytest.mark.parametrize("lam,expected", [(0.5, 1.25), (0.0, 0.0), (1.0, 0.0)])
def test_slot_snr_examples(lam, expected):
    assert slot_snr(one_relay(), Decision((0,), [lam]), BASE) == pytest.approx(expected)


@pytest.mark.parametrize("snr,expected", [(0.0, 0.0), (1.25, 0.5 * math.log2(2.25)), (3.0, 1.0)])
def test_rate_examples(snr, expected):
    assert rate_from_snr(snr) == pytest.approx(expected)


def test_payoff_matches_snr_example():
    assert payoff(one_relay(), Decision((0,), [0.5]), BASE) == pytest.approx(0.5849625, abs=1e-6)


def test_rate_log_base_configurable():
    assert rate_from_snr(math.e - 1, log_base=math.e) == pytest.approx(0.5)


def test_battery_step_examples():
    assert battery_step((2,), (1,), 4) == (1,)
    assert battery_step((2,), (2,), 4) == (0,)
    with pytest.raises(InfeasibleDecision):
        battery_step((2,), (3,), 4)


def test_decision_feasible_examples():
    ch = one_relay()
    assert decision_feasible((0,), (0,), ch, BASE)
    assert not decision_feasible((0,), (1,), ch, BASE)
    assert not decision_feasible((4,), (-4,), ch, BASE)
    assert decision_feasible((4,), (-3,), ch, BASE) is False  # would overflow the battery
    assert decision_feasible((1,), (-3,), ch, BASE)


def test_infeasible_lambda_rejected():
    # charging 2 of a 3.2 cap leaves lambda_I <= 0.375
    with pytest.raises(InfeasibleDecision):
        slot_snr(one_relay(), Decision((-2,), [0.5]), BASE)
    assert slot_snr(one_relay(), Decision((-2,), [0.375]), BASE) >= 0


# -- properties ---------------------------------------------------------------------

def _random_decision(rng, p, K):
    h = (rng.normal(size=K) + 1j * rng.normal(size=K)) / math.sqrt(2)
    g = (rng.normal(size=K) + 1j * rng.normal(size=K)) / math.sqrt(2)
    ch = SlotChannel(h, g)
    v = []
    for h2 in ch.h2:
        lo = -min(p.L, math.floor(p.eta1 * p.eta2 * p.P * h2 / p.step))
        v.append(int(rng.integers(lo, p.L + 1)))
    upper = [1.0 if d >= 0 else 1 + d * p.step / (p.eta1 * p.eta2 * p.P * h2) for d, h2 in zip(v, ch.h2)]
    lam = rng.random(K) * np.array(upper)
    return ch, Decision(v, lam)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=200, deadline=None)
def test_split_ratios_sum_to_one_and_eq9_consistency(seed):
    rng = np.random.default_rng(seed)
    p = SystemParams(P=float(rng.uniform(0.5, 50)), K=3, L=4)
    ch, d = _random_decision(rng, p, 3)
    sr = split_ratios(d, ch, p)
    assert np.allclose(sr.lambda_I + sr.lambda_F + sr.lambda_B, 1.0, atol=1e-15)
    assert np.all(sr.lambda_B >= 0) and np.all(sr.lambda_B <= 1)
    assert np.all(sr.lambda_F >= -1e-12)
    for k in range(3):
        e = d.variation[k] * p.step
        p_r = relay_transmit_power(d.lambda_I[k], e, ch.h[k], p)
        direct = p.eta1 * sr.lambda_F[k] * p.P * ch.h2[k] + max(0.0, e)
        assert p_r == pytest.approx(direct, rel=1e-12, abs=1e-12)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=100, deadline=None)
def test_snr_nondecreasing_in_power(seed):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=2) + 1j * rng.normal(size=2)
    g = rng.normal(size=2) + 1j * rng.normal(size=2)
    d = Decision((0, 0), rng.random(2))
    ch = SlotChannel(h, g)
    snrs = [slot_snr(ch, d, SystemParams(P=P, K=2)) for P in (0.1, 1.0, 3.0, 10.0, 100.0)]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(snrs, snrs[1:]))


@given(st.lists(st.integers(0, 5), min_size=1, max_size=4), st.data())
def test_battery_step_reversible(state, data):
    L = 5
    v = [data.draw(st.integers(s - L, s)) for s in state]
    nxt = battery_step(state, v, L)
    assert battery_step(nxt, [-d for d in v], L) == tuple(state)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=100, deadline=None)
def test_energy_conservation_on_grid(seed):
    rng = np.random.default_rng(seed)
    L, K, T = 6, 2, 12
    state = (0,) * K
    charged = discharged = 0
    for _ in range(T):
        v = [int(rng.integers(s - L, s + 1)) for s in state]
        charged += sum(-d for d in v if d < 0)
        discharged += sum(d for d in v if d > 0)
        state = battery_step(state, v, L)
    assert charged - discharged == sum(state)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=100, deadline=None)
def test_zero_forward_link_is_reduced_system(seed):
    rng = np.random.default_rng(seed)
    p3 = SystemParams(P=10.0, K=3, L=4)
    ch, d = _random_decision(rng, p3, 3)
    dead = int(rng.integers(3))
    g = ch.g.copy()
    g[dead] = 0
    keep = [k for k in range(3) if k != dead]
    full = slot_snr(SlotChannel(ch.h, g), d, p3)
    p2 = p3.replace(K=2)
    reduced = slot_snr(SlotChannel(ch.h[keep], g[keep]),
                       Decision([d.variation[k] for k in keep], d.lambda_I[keep]), p2)
    assert full == pytest.approx(reduced, rel=1e-12, abs=1e-15)
