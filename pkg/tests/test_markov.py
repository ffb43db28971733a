import numpy as np
from scipy.optimize import brentq
import pytest
from hypothesis import given, settings, strategies as st

from pncarq import markov
from pncarq.markov import (absorption_probabilities, enumerate_round_transitions,
                           expected_sojourn, grid_check, hop_by_hop, th1, th2, th3, viability)

NONE, O, X = 0, 1, 2


def mc_absorb(p1, p2, start, n, seed=0):
    """Play window-1 rounds from a joint state until a packet is delivered.

    Returns (share absorbed with two deliveries, mean rounds, std of rounds).
    """
    rng = np.random.default_rng(seed)
    sc = np.full(n, start[0])
    sd = np.full(n, start[1])
    t = np.zeros(n, dtype=int)
    done = np.zeros(n, dtype=int)  # 0 running, else number delivered
    live = np.arange(n)
    while live.size:
        m = live.size
        dec, dc, dd = (rng.random((3, m)) < p1)
        oc, od = (rng.random((2, m)) < p2)
        t[live] += 1
        new = []
        for s, coded, over in ((sc, dec & dc, oc), (sd, dec & dd, od)):
            cur = s[live]
            has_x = (cur == X) | coded
            has_o = (cur == O) | over
            fin = has_x & has_o
            s[live] = np.where(has_x, X, np.where(has_o, O, NONE))
            new.append(fin)
        k = new[0].astype(int) + new[1]
        hit = k > 0
        done[live[hit]] = k[hit]
        live = live[~hit]
    return (done == 2).mean(), t.mean(), t.std()


def test_x_to_xo_matches_closed_form():
    rng = np.random.default_rng(3)
    for p1, p2 in rng.uniform(0.01, 1.0, size=(100, 2)):
        c = enumerate_round_transitions(p1, p2)
        got = c.Q[c.index("X"), c.index("XO")]
        assert abs(got - p2 * (1 - p1**2) * (1 - p2)) < 1e-12


def test_x_to_xo_at_point_eight():
    c = enumerate_round_transitions(0.8, 0.8)
    assert c.Q[c.index("X"), c.index("XO")] == pytest.approx(0.0576)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_rows_and_absorption_normalized(p1, p2):
    for proto in ("noncoupled-tracking", "coupled-tracking"):
        c = enumerate_round_transitions(p1, p2, proto)
        assert np.all(np.abs(c.row_sums() - 1) < 1e-12)
        for probs in absorption_probabilities(c).values():
            assert abs(sum(probs.values()) - 1) < 1e-10
        assert min(expected_sojourn(c).values()) >= 1 - 1e-12


def test_perfect_channels():
    c = enumerate_round_transitions(1.0, 1.0)
    assert c.R[c.index("ϕ"), 1] == 1.0
    assert absorption_probabilities(c)["ϕ"]["2"] == 1.0
    assert expected_sojourn(c)["ϕ"] == 1.0
    assert th1(1, 1) == th2(1, 1) == th3(1, 1) == 2.0


def test_restart_map():
    c = enumerate_round_transitions(0.8, 0.8)
    assert c.restart == {"1": "O", "2": "ϕ"}
    assert set(c.labels) == {"ϕ", "O", "X", "XO", "OO", "XX"}


def test_coupled_state_space():
    c = enumerate_round_transitions(0.8, 0.8, "coupled-tracking")
    assert {"1ϕ", "1O", "1X"} <= set(c.labels)
    assert len(c.labels) == 9


@pytest.mark.parametrize("label,start", [("ϕ", (NONE, NONE)), ("O", (O, NONE))])
def test_monte_carlo_absorption_and_sojourn(label, start):
    n = 10**6
    c = enumerate_round_transitions(0.8, 0.8)
    exact_p = absorption_probabilities(c)[label]["2"]
    exact_t = expected_sojourn(c)[label]
    share, mean_t, sd_t = mc_absorb(0.8, 0.8, start, n)
    assert abs(share - exact_p) < 3 * np.sqrt(exact_p * (1 - exact_p) / n)
    assert abs(mean_t - exact_t) < 3 * sd_t / np.sqrt(n)


def test_benchmark_values():
    assert th1(0.9, 0.9) == pytest.approx(1.50, abs=0.005)
    assert th1(0.57, 0.57) == pytest.approx(0.57, abs=0.006)


def test_coupled_below_noncoupled():
    assert th2(0.9, 0.9) == pytest.approx(1.32, abs=0.03)
    assert th2(0.8, 0.8) < th1(0.8, 0.8)


def test_no_tracking_forms():
    assert th3(0.8) == pytest.approx(1.024)
    assert th3(0.8, 0.8) == pytest.approx(1.024)
    assert th3(1, 1, 1, 1, 1) == 2
    assert th3(0.9, 0.8, 0.8, 0.7, 0.7) == pytest.approx(1.008)
    with pytest.raises(ValueError):
        th3(0.5, 0.5, 0.5)


def test_hop_by_hop_and_viability():
    assert hop_by_hop(0.8) == 0.4
    assert hop_by_hop(1) == 0.5
    assert not viability(0.57)
    assert viability(0.58)
    crossover = brentq(lambda p: th1(p, p) - p, 0.5, 0.7)
    assert 0.57 < crossover < 0.58


def test_grid_report_shape():
    r = grid_check("prop2", 0.1)
    assert r.points == 81
    assert r.all_positive
    with pytest.raises(ValueError):
        grid_check("prop1", 0.2)


def test_bad_probability():
    with pytest.raises(ValueError):
        enumerate_round_transitions(0.0, 0.5)
    with pytest.raises(ValueError):
        enumerate_round_transitions(0.5, 0.5, "other")


def test_smooth_in_p():
    ps = np.linspace(0.5, 1.0, 51)
    v = np.array([th1(p, p) for p in ps])
    assert np.all(np.diff(v) > 0)
    assert np.abs(np.diff(v, 2)).max() < 0.01
