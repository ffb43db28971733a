import math

import pytest
from hypothesis import given, settings, strategies as st

from pncarq.atoms import builtin_cross_atom, builtin_star_atom
from pncarq.markov import th3
from pncarq.simulator import CSV_COLUMNS, SimConfig, csv_row, degradation, overhead_metric, run


def sim(atom, **kw):
    kw.setdefault("rounds", 20_000)
    kw.setdefault("warmup", 1_000)
    return run(SimConfig(atom, **kw))


# --- perfect channels -------------------------------------------------------

@pytest.mark.parametrize("coupling", ["non-coupled", "coupled"])
@pytest.mark.parametrize("tracking", ["off", "single", "multi"])
def test_cross_lossless_is_exactly_two(coupling, tracking):
    s = sim(builtin_cross_atom(1.0), coupling=coupling, tracking=tracking)
    assert s.throughput_per_round == 2.0
    assert s.throughput_per_slot == 1.0
    assert s.wasteful == 0


def test_star_lossless_is_one_per_slot():
    s = sim(builtin_star_atom(1.0))
    assert s.throughput_per_slot == 1.0
    assert s.throughput_per_round == 3.0


def test_realistic_lossless_pays_only_ack_airtime():
    # one ACK round every 4 rounds, each costing 2(K + W/8)/D slot-equivalents
    s = sim(builtin_cross_atom(1.0), mode="realistic", W=170, N=4)
    assert s.wasteful == 0
    ack_per_round = 2 * (30 + 170 / 8) / 600 / 4
    assert s.throughput_per_round == pytest.approx(2 / (1 + ack_per_round / 2), rel=1e-3)


# --- spec examples ----------------------------------------------------------

def test_no_tracking_matches_closed_form():
    s = sim(builtin_cross_atom(0.8), tracking="off", rounds=200_000, warmup=10_000)
    assert s.throughput_per_round == pytest.approx(th3(0.8), abs=0.01)
    assert th3(0.8) == pytest.approx(1.024)


@pytest.mark.slow
def test_idealized_benchmark_at_08():
    s = sim(builtin_cross_atom(0.8), rounds=1_000_000, warmup=10_000)
    assert s.throughput_per_round == pytest.approx(1.14, abs=0.01)


def test_realistic_optimized_at_08():
    s = sim(builtin_cross_atom(0.8), mode="realistic", W=170, N=4, rounds=200_000, warmup=10_000)
    assert s.throughput_per_round == pytest.approx(1.11, abs=0.02)


def test_degradation_examples():
    assert degradation(1.11, 1.14) == pytest.approx(0.026, abs=5e-4)
    assert degradation(1.67, 1.73) == pytest.approx(0.035, abs=5e-4)
    assert degradation(1.3, 1.3) == 0


def test_overhead_examples():
    assert overhead_metric(1.11, 1.14) == pytest.approx(0.027, abs=5e-4)
    assert overhead_metric(1.67, 1.73) == pytest.approx(0.036, abs=5e-4)
    assert overhead_metric(0.9, 0.9) == 0


def test_metric_errors():
    with pytest.raises(ValueError):
        degradation(1.0, 0.0)
    with pytest.raises(ValueError):
        overhead_metric(0.0, 1.0)


# --- validation -------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    dict(W=0), dict(N=0), dict(rounds=100, warmup=100), dict(mode="lossy"),
    dict(tracking="full"), dict(coupling="loose"),
    dict(coupling="coupled", W=4), dict(coupling="coupled", mode="realistic"),
])
def test_invalid_configs_rejected(kw):
    base = dict(rounds=1000, warmup=10)
    base.update(kw)
    with pytest.raises(ValueError):
        run(SimConfig(builtin_cross_atom(0.9), **base))


# --- properties -------------------------------------------------------------

def test_deterministic_under_fixed_seed():
    cfg = SimConfig(builtin_cross_atom(0.7), mode="realistic", W=40, N=2, seed=7,
                    rounds=5_000, warmup=500)
    assert run(cfg) == run(cfg)


def test_seed_changes_realisation():
    a = sim(builtin_cross_atom(0.7), seed=1, rounds=5_000, warmup=500)
    b = sim(builtin_cross_atom(0.7), seed=2, rounds=5_000, warmup=500)
    assert a.total_delivered != b.total_delivered


@settings(max_examples=15, deadline=None)
@given(p=st.floats(0.3, 1.0), W=st.integers(1, 40), N=st.integers(1, 6),
       realistic=st.booleans(), tracking=st.sampled_from(["off", "single", "multi"]),
       seed=st.integers(0, 2**32 - 1))
def test_conservation(p, W, N, realistic, tracking, seed):
    s = sim(builtin_cross_atom(p), mode="realistic" if realistic else "idealized",
            W=W, N=N, tracking=tracking, seed=seed, rounds=1_500, warmup=100)
    for f, got in s.total_delivered.items():
        assert got <= s.distinct_sent[f]
    assert s.wasteful <= s.transmissions
    if not realistic:
        assert s.wasteful == 0


@pytest.mark.parametrize("W,N", [(16, 2), (64, 4), (170, 4)])
@pytest.mark.parametrize("tracking", ["single", "multi"])
def test_pools_stay_within_a_multiple_of_w(W, N, tracking):
    s = sim(builtin_cross_atom(0.6), mode="realistic", W=W, N=N, tracking=tracking,
            rounds=60_000, warmup=1_000)
    assert s.max_o_pool <= 3 * W
    assert s.max_c_pool <= 3 * W


def test_multi_tracking_pools_stay_small_when_idealized():
    s = sim(builtin_cross_atom(0.5), tracking="multi", rounds=20_000)
    assert s.max_o_pool <= 2


@pytest.mark.parametrize("tracking", ["single", "multi"])
def test_zero_waste_under_idealized_ack(tracking):
    for p in (0.5, 0.8):
        s = sim(builtin_cross_atom(p), W=16, tracking=tracking)
        assert s.wasteful == 0
        assert s.transmissions > 0


def test_window_size_does_not_change_idealized_throughput():
    res = [sim(builtin_cross_atom(0.75), W=W, rounds=50_000, warmup=2_000) for W in (1, 4, 16)]
    base = res[0]
    for s in res[1:]:
        assert abs(s.throughput_per_round - base.throughput_per_round) <= base.ci95
    assert base.multi_iter_fraction == 0.0


def test_throughput_monotone_in_p():
    ps = [0.57, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95]
    res = [sim(builtin_cross_atom(p), rounds=30_000, warmup=1_000) for p in ps]
    for lo, hi in zip(res, res[1:]):
        assert hi.throughput_per_round >= lo.throughput_per_round - max(lo.ci95, hi.ci95)


def test_ci_shrinks_with_rounds():
    a = sim(builtin_cross_atom(0.8), rounds=10_000, warmup=500)
    b = sim(builtin_cross_atom(0.8), rounds=90_000, warmup=500)
    assert b.ci95 < a.ci95
    assert math.isfinite(a.ci95) and a.ci95 > 0


def test_csv_row_has_documented_columns():
    cfg = SimConfig(builtin_cross_atom(0.9), rounds=2_000, warmup=100)
    row = csv_row(cfg, run(cfg))
    assert tuple(row) == CSV_COLUMNS
