"""Baseline strategies: time switching, storage models, relay selection."""

import numpy as np
import pytest

from husrelay.channel import ChannelTrace, sample_trace
from husrelay.comparators import (ComparatorConfig, min_slots_to_deliver, run_fixed_ratio,
                                  run_harvest_store_use, run_harvest_use, run_relay_selection,
                                  run_time_switching, select_relays, time_switching_rate)
from husrelay.model import SystemParams, rate_from_snr
from husrelay.planner import backward_induction, run_greedy

P10 = SystemParams(K=2, T=10, L=4).with_snr_db(10)


def paired_means(fn_a, fn_b, p, seeds):
    a = np.array([fn_a(sample_trace(p, seed=s), p).r_total for s in seeds])
    b = np.array([fn_b(sample_trace(p, seed=s), p).r_total for s in seeds])
    return a, b


# -- time switching ---------------------------------------------------------------------

def test_time_switching_edges():
    h2, g2 = np.array([1.0, 0.5]), np.array([0.3, 0.2])
    assert time_switching_rate(0.0, h2, g2, P10) == 0.0
    assert time_switching_rate(1.0, h2, g2, P10) == 0.0
    assert time_switching_rate(1 - 1e-12, h2, g2, P10) < 1e-9


def test_time_switching_single_relay_by_hand():
    p = SystemParams(P=10.0, K=1)
    tau = 0.5
    # p_R = 2*0.4*0.5*10/0.5 = 8; beta^2 = 8/11; snr = 10*beta^2 / (beta^2 + 1)
    b2 = 8 / 11
    expected = 0.5 * 0.5 * np.log2(1 + 10 * b2 / (b2 + 1))
    assert time_switching_rate(tau, [1.0], [1.0], p) == pytest.approx(expected)


def test_time_switching_grid_optimum():
    tr = sample_trace(P10, seed=2)
    plan = run_time_switching(tr, P10)
    cfg = ComparatorConfig()
    for t in range(tr.T):
        rates = time_switching_rate(cfg.tau_grid, tr.h2[t], tr.g2[t], P10)
        assert plan.per_slot_payoff[t] == rates.max()
        assert plan.meta["tau"][t] in cfg.tau_grid
    assert np.all(cfg.tau_grid > 0) and np.all(cfg.tau_grid < 1) and cfg.tau_grid.size == 99


def test_comparator_config_validation():
    with pytest.raises(ValueError):
        ComparatorConfig(strategy="nope")
    with pytest.raises(ValueError):
        ComparatorConfig(tau_step=0.0)


def test_delay_helper():
    assert min_slots_to_deliver([0.5, 0.5, 1.0], 1.0) == 2
    assert min_slots_to_deliver([0.1, 0.1], 1.0) == float("inf")


def _mean_delay(snr, target, seeds=range(200)):
    p = SystemParams(K=2, T=40, L=4).with_snr_db(snr)
    ps, ts = [], []
    for s in seeds:
        tr = sample_trace(p, seed=s)
        ps.append(min_slots_to_deliver(run_greedy(tr, p).per_slot_payoff, target))
        ts.append(min_slots_to_deliver(run_time_switching(tr, p).per_slot_payoff, target))
    return np.mean(ps), np.mean(ts)


def test_delay_power_splitting_faster_at_20db():
    ps, ts = _mean_delay(20.0, 20.0)
    assert ps <= ts


@pytest.mark.xfail(strict=True, reason="classical time switching delivers faster at 10 dB "
                                       "(200 seeds, 3 bits: 20.6 vs 15.6 slots); see decisions ledger")
def test_delay_power_splitting_faster_at_10db():
    ps, ts = _mean_delay(10.0, 3.0)
    assert ps <= ts


# -- storage models ---------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_lossless_storage_models_coincide(seed):
    p = P10.replace(eta2=1.0)
    tr = sample_trace(p, seed=seed)
    assert run_harvest_store_use(tr, p).r_total == backward_induction(tr, p).r_total


def test_harvest_use_is_greedy_alias():
    for seed in range(100):
        tr = sample_trace(P10, seed=seed)
        a, b = run_harvest_use(tr, P10), run_greedy(tr, P10)
        assert a.r_total == b.r_total and np.all(a.variations == 0)


def test_harvest_use_worked_instance():
    p = SystemParams(P=10.0, K=1, T=1, L=4)
    assert run_harvest_use(ChannelTrace(np.ones((1, 1)), np.ones((1, 1))), p).r_total == pytest.approx(0.6, abs=1e-4)


def test_zero_channels_give_zero():
    tr = ChannelTrace(np.zeros((10, 2)), np.zeros((10, 2)))
    for fn in (run_harvest_store_use, run_harvest_use, run_time_switching, run_fixed_ratio):
        assert fn(tr, P10).r_total == 0


def test_storage_ordering_small_sample():
    hus, hsu = paired_means(backward_induction, run_harvest_store_use, P10, range(30))
    assert np.all(hus >= hsu - 1e-12)  # hsu's feasible plans are dominated slot by slot


def test_fixed_ratio_below_greedy():
    for seed in range(20):
        tr = sample_trace(P10, seed=seed)
        assert run_fixed_ratio(tr, P10).r_total <= run_greedy(tr, P10).r_total + 1e-9


def test_fixed_ratio_by_hand():
    p = SystemParams(P=10.0, K=1, T=1)
    # lambda_I = 0.5 reproduces the single-slot SNR 1.25
    plan = run_fixed_ratio(ChannelTrace(np.ones((1, 1)), np.ones((1, 1))), p)
    assert plan.r_total == pytest.approx(rate_from_snr(1.25))


# -- relay selection ----------------------------------------------------------------------------

def test_best_relay_argmax():
    tr = ChannelTrace(np.array([[0.3, 1.0]]), np.array([[1.0, 1.7]]))
    assert select_relays(tr, "best").tolist() == [1]
    with pytest.raises(ValueError):
        select_relays(tr, "worst")


def test_random_selection_seeded_and_uniform():
    p = SystemParams(K=3, T=30000)
    tr = sample_trace(p, seed=0)
    a, b = select_relays(tr, "random", seed=5), select_relays(tr, "random", seed=5)
    assert np.array_equal(a, b)
    assert np.allclose(np.bincount(a, minlength=3) / a.size, 1 / 3, atol=0.01)


@pytest.mark.parametrize("mode", ["best", "random"])
def test_single_relay_selection_is_backward_induction(mode):
    p = P10.replace(K=1)
    for seed in range(5):
        tr = sample_trace(p, seed=seed)
        assert run_relay_selection(tr, p, mode).r_total == backward_induction(tr, p).r_total


def test_selection_dominated_by_beamforming():
    p = SystemParams(K=3, T=5, L=4).with_snr_db(10)
    for seed in range(10):
        tr = sample_trace(p, seed=seed)
        bf = backward_induction(tr, p).r_total
        assert run_relay_selection(tr, p, "best").r_total <= bf + 1e-9
        assert run_relay_selection(tr, p, "random", seed=seed).r_total <= bf + 1e-9
