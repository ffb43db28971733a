import pytest
from hypothesis import given, strategies as st

from pncarq.atoms import builtin_cross_atom
from pncarq.optimizer import (InfeasibleBudget, OverheadBudget, optimize, overhead_e1,
                              pick_n, w_upper_bound)


def test_e1_at_operating_point():
    assert overhead_e1(170, 4, 30, 600, 1.0) == pytest.approx((30 + 21.25) / 2400)
    assert overhead_e1(170, 4, 30, 600, 1.0) == pytest.approx(0.0214, abs=1e-4)


@given(p=st.floats(0.05, 1.0), N=st.integers(1, 50))
def test_e1_halves_when_n_doubles(p, N):
    assert overhead_e1(170, 2 * N, 30, 600, p) == pytest.approx(overhead_e1(170, N, 30, 600, p) / 2)


def test_e1_vanishes_as_p_drops():
    vals = [overhead_e1(170, 4, 30, 600, p) for p in (0.5, 0.1, 0.01, 0.001)]
    assert vals == sorted(vals, reverse=True)
    assert vals[-1] < 1e-7


def test_pick_n():
    assert pick_n(0.0125, 30, 600) == 4
    assert pick_n(0.01, 30, 600) == 5
    assert pick_n(0.05, 30, 600) == 1
    assert pick_n(0.9, 30, 600) == 1


def test_w_upper_bound():
    assert w_upper_bound(0.025, 4, 30, 600) == 240
    assert w_upper_bound(0.02135, 4, 30, 600) == 169
    assert abs(w_upper_bound(0.02135, 4, 30, 600) - 170) <= 1
    with pytest.raises(InfeasibleBudget):
        w_upper_bound(30 / (4 * 600), 4, 30, 600)


def test_budget_split():
    b = OverheadBudget()
    assert b.e1_header + b.e1_bitmap == pytest.approx(b.e1)
    assert b.e2 == pytest.approx(b.e0 - b.e1)
    with pytest.raises(ValueError):
        OverheadBudget(e0=0.02, e1=0.025)
    with pytest.raises(ValueError):
        OverheadBudget(e1_header=0.03)


def test_lossless_picks_the_bound():
    res = optimize(builtin_cross_atom, p=1.0, rounds=3_000, warmup=200)
    assert res.W == res.w_max == 240
    assert res.N == 4
    assert res.e1_at_p1 <= res.budget.e1


def small_search(seed):
    return optimize(builtin_cross_atom, OverheadBudget(e1=0.0135), p=0.7,
                    rounds=6_000, warmup=500, seed=seed, step=10)


def test_search_is_reproducible_and_within_budget():
    a, b = small_search(3), small_search(3)
    assert (a.W, a.N) == (b.W, b.N)
    assert [s.throughput for s in a.sweep] == [s.throughput for s in b.sweep]
    assert a.e1_at_p1 <= a.budget.e1
    # never worse than the bound point by more than its interval
    top = next(s for s in a.sweep if s.W == a.w_max)
    assert a.throughput >= top.throughput - top.ci95
