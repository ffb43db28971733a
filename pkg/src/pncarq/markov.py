"""Exact idealized throughput of the cross atom by absorbing Markov chains.

Each chain is built by enumerating the 32 joint outcomes of the five link
events of one round (relay decode, two downlinks, two overhears) and
applying the window-1 tracking update to each destination.  Nothing is
hand-coded per edge.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

# per-destination storage under window 1
NONE, OVERHEARD, CODED, DONE = "n", "O", "X", "D"

NONCOUPLED_LABELS = ("ϕ", "O", "X", "XO", "OO", "XX")
_PAIR_OF = {
    "ϕ": (NONE, NONE),
    "O": (OVERHEARD, NONE),
    "X": (CODED, NONE),
    "XO": (CODED, OVERHEARD),
    "OO": (OVERHEARD, OVERHEARD),
    "XX": (CODED, CODED),
}
_ORDER = {CODED: 0, OVERHEARD: 1, NONE: 2, DONE: 3}


def _canon(a: str, b: str) -> tuple[str, str]:
    return tuple(sorted((a, b), key=_ORDER.__getitem__))


_LABEL_OF = {_canon(*v): k for k, v in _PAIR_OF.items()}


@dataclass
class AbsorbingChain:
    labels: tuple[str, ...]
    Q: np.ndarray  # transient -> transient, one round
    R: np.ndarray  # transient -> absorbing label, one round
    absorbing: tuple[str, ...]
    restart: dict[str, str] = field(default_factory=dict)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def row_sums(self) -> np.ndarray:
        return self.Q.sum(axis=1) + self.R.sum(axis=1)

    def check(self, tol: float = 1e-12) -> None:
        if np.any(np.abs(self.row_sums() - 1.0) > tol):
            raise ValueError("chain rows do not sum to 1")


def _check_p(*ps: float) -> None:
    for p in ps:
        if not 0.0 < p <= 1.0:
            raise ValueError(f"probability {p} outside (0, 1]")


def _outcomes(p1: float, p2: float):
    """Yield ``(prob, coded_c, coded_d, over_c, over_d)`` for all 32 outcomes."""
    probs = (p1, p1, p1, p2, p2)
    for ev in itertools.product((0, 1), repeat=5):
        pr = 1.0
        for e, p in zip(ev, probs):
            pr *= p if e else 1.0 - p
        dec, dc, dd, oc, od = ev
        yield pr, bool(dec and dc), bool(dec and dd), bool(oc), bool(od)


def _update(s: str, coded: bool, over: bool) -> str:
    if s == DONE:
        return DONE
    has_x = s == CODED or coded
    has_o = s == OVERHEARD or over
    if has_x and has_o:
        return DONE
    return CODED if has_x else (OVERHEARD if has_o else NONE)


def enumerate_round_transitions(p1: float, p2: float,
                                protocol: str = "noncoupled-tracking") -> AbsorbingChain:
    """One-round chain of the cross atom under window-1 idealized ARQ.

    ``p1`` is the LSP of the relay links (decode and downlinks), ``p2`` of
    the overhear links.
    """
    _check_p(p1, p2)
    if protocol == "noncoupled-tracking":
        labels = NONCOUPLED_LABELS
        Q = np.zeros((6, 6))
        R = np.zeros((6, 2))
        for i, lab in enumerate(labels):
            sc, sd = _PAIR_OF[lab]
            for pr, xc, xd, oc, od in _outcomes(p1, p2):
                nc, nd = _update(sc, xc, oc), _update(sd, xd, od)
                k = (nc == DONE) + (nd == DONE)
                if k:
                    R[i, k - 1] += pr
                else:
                    Q[i, labels.index(_LABEL_OF[_canon(nc, nd)])] += pr
        chain = AbsorbingChain(labels, Q, R, ("1", "2"), {"1": "O", "2": "ϕ"})
    elif protocol == "coupled-tracking":
        # joint states over {n, O, X, D}^2 lumped by symmetry, minus (D, D)
        states = sorted({_canon(a, b) for a in _ORDER for b in _ORDER} - {(DONE, DONE)},
                        key=lambda s: (_ORDER[s[0]], _ORDER[s[1]]))
        states.insert(0, states.pop(states.index((NONE, NONE))))
        labels = tuple("ϕ" if s == (NONE, NONE) else _coupled_label(s) for s in states)
        n = len(states)
        Q = np.zeros((n, n))
        R = np.zeros((n, 1))
        for i, (sc, sd) in enumerate(states):
            for pr, xc, xd, oc, od in _outcomes(p1, p2):
                t = _canon(_update(sc, xc, oc), _update(sd, xd, od))
                if t == (DONE, DONE):
                    R[i, 0] += pr
                else:
                    Q[i, states.index(t)] += pr
        chain = AbsorbingChain(labels, Q, R, ("2",), {"2": "ϕ"})
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    chain.check()
    return chain


def _coupled_label(s: tuple[str, str]) -> str:
    a, b = s
    if b == DONE:
        return "1" + ("ϕ" if a == NONE else a)
    return "".join("ϕ" if x == NONE else x for x in (a, b))


def _solve(chain: AbsorbingChain, rhs: np.ndarray) -> np.ndarray:
    M = np.eye(len(chain.labels)) - chain.Q
    try:
        out = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError("chain is not absorbing") from exc
    if not np.all(np.isfinite(out)):
        raise ValueError("chain is not absorbing")
    return out


def absorption_probabilities(chain: AbsorbingChain) -> dict[str, dict[str, float]]:
    B = _solve(chain, chain.R)
    return {lab: {a: float(B[i, k]) for k, a in enumerate(chain.absorbing)}
            for i, lab in enumerate(chain.labels)}


def expected_sojourn(chain: AbsorbingChain) -> dict[str, float]:
    T = _solve(chain, np.ones(len(chain.labels)))
    return {lab: float(T[i]) for i, lab in enumerate(chain.labels)}


def th1(p1: float, p2: float) -> float:
    """Non-coupled ARQ with stored-packet tracking, packets per round."""
    chain = enumerate_round_transitions(p1, p2, "noncoupled-tracking")
    B = absorption_probabilities(chain)
    T = expected_sojourn(chain)
    p12 = B["O"]["2"]
    p21 = B["ϕ"]["1"]
    if p12 + p21 == 0.0:  # lossless: every round delivers two
        return 2.0 / T["ϕ"]
    P1 = p21 / (p12 + p21)
    P2 = p12 / (p12 + p21)
    return (P1 + 2 * P2) / (P1 * T["O"] + P2 * T["ϕ"])


def th2(p1: float, p2: float) -> float:
    """Coupled ARQ with stored-packet tracking, packets per round."""
    chain = enumerate_round_transitions(p1, p2, "coupled-tracking")
    return 2.0 / expected_sojourn(chain)["ϕ"]


def th3(*p: float) -> float:
    """Throughput without tracking.

    One or two arguments give the homogeneous form ``2 p1^2 p2`` (``p2``
    defaults to ``p1``); five arguments give ``p1 (p2 p4 + p3 p5)``.
    """
    if len(p) == 1:
        p = (p[0], p[0])
    _check_p(*p)
    if len(p) == 2:
        return 2 * p[0] ** 2 * p[1]
    if len(p) == 5:
        p1, p2, p3, p4, p5 = p
        return p1 * (p2 * p4 + p3 * p5)
    raise ValueError("th3 takes 1, 2 or 5 probabilities")


# smallest meaningful homogeneous LSP, as rounded in the literature; the exact
# crossover of th1(p, p) / 2 with p / 2 sits at about 0.5756
VIABILITY_THRESHOLD = 0.57


def hop_by_hop(p: float) -> float:
    """Traditional store-and-forward relaying with per-hop ARQ, packets per
    time slot (each packet needs two hops)."""
    _check_p(p)
    return p / 2


def viability(p: float) -> bool:
    """Whether PNC with tracking beats hop-by-hop relaying per time slot at
    homogeneous LSP ``p`` (the cross atom spends two slots per round)."""
    return th1(p, p) / 2 > hop_by_hop(p)


@dataclass(frozen=True)
class GridReport:
    prop: str
    step: float
    min_margin: float
    argmin: tuple[float, float]
    all_positive: bool
    points: int


def margin(prop: str, p1: float, p2: float) -> float:
    if prop == "prop1":
        return th1(p1, p2) - th3(p1, p2)
    if prop == "prop2":
        return th1(p1, p2) - th2(p1, p2)
    raise ValueError(f"unknown property {prop!r}")


def grid_check(prop: str, step: float = 0.05) -> GridReport:
    """Evaluate the proposition margin on the open unit square."""
    if not 0.0 < step <= 0.1:
        raise ValueError("step must lie in (0, 0.1]")
    n = int(round(1.0 / step))
    axis = [round(k * step, 10) for k in range(1, n) if k * step < 1.0]
    best, arg, count = float("inf"), (0.0, 0.0), 0
    for a in axis:
        for b in axis:
            m = margin(prop, a, b)
            count += 1
            if m < best:
                best, arg = m, (a, b)
    return GridReport(prop, step, best, arg, best > 0.0, count)
