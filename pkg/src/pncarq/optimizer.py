"""Choosing the window size W and ACK frequency N under an overhead budget.

N is fixed first from the header share of the feedback budget, W is bounded
from the closed-form feedback overhead at p=1, and the bound is then walked
downward by simulation at the worst-case link quality until throughput
starts to fall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .atoms import AtomSpec
from .markov import VIABILITY_THRESHOLD
from .simulator import SimConfig, SimStats, run


class InfeasibleBudget(ValueError):
    """The feedback budget cannot even pay for the ACK header."""


@dataclass(frozen=True)
class OverheadBudget:
    e0: float = 0.05
    e1: float = 0.025
    e1_header: float = 0.0125

    def __post_init__(self):
        if not 0 < self.e1 < self.e0 < 1:
            raise ValueError("need 0 < e1 < e0 < 1")
        if not 0 < self.e1_header < self.e1:
            raise ValueError("need 0 < e1_header < e1")

    @property
    def e1_bitmap(self) -> float:
        return self.e1 - self.e1_header

    @property
    def e2(self) -> float:
        return self.e0 - self.e1


def overhead_e1(W: int, N: int, K: float, D: float, p: float) -> float:
    """Average ACK airtime per data transmission of one flow."""
    if W <= 0 or N <= 0 or K < 0 or D <= 0:
        raise ValueError("W, N, D must be positive and K non-negative")
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    return (K + W / 8) / ((N / p**2) * D)


def pick_n(e1_header: float, K: float, D: float) -> int:
    """Smallest N with K/(N*D) <= e1_header."""
    if not 0 < e1_header < 1:
        raise ValueError("e1_header must lie in (0, 1)")
    # round first so that e.g. 30/(0.0125*600) = 4.000000000000001 gives 4
    return max(1, math.ceil(round(K / (e1_header * D), 9)))


def w_upper_bound(e1: float, N: int, K: float, D: float) -> int:
    """Largest W keeping the p=1 feedback overhead within ``e1``."""
    bound = math.floor(round(8 * e1 * N * D - 8 * K, 9))
    if bound <= 0:
        raise InfeasibleBudget(f"budget e1={e1} cannot cover the {K}-byte header with N={N}")
    return bound


@dataclass
class SweepPoint:
    W: int
    throughput: float
    ci95: float
    wasteful_fraction: float


@dataclass
class OptimizeResult:
    W: int
    N: int
    throughput: float
    w_max: int
    p: float
    budget: OverheadBudget
    sweep: list[SweepPoint] = field(default_factory=list)

    K: int = 30
    D: int = 600

    @property
    def e1_at_p1(self) -> float:
        """Feedback overhead of the chosen point at p=1."""
        return overhead_e1(self.W, self.N, self.K, self.D, 1.0)


def optimize(atom_at, budget: OverheadBudget = OverheadBudget(), K: int = 30, D: int = 600,
             p: float = VIABILITY_THRESHOLD, rounds: int = 200_000, warmup: int = 10_000,
             seed: int = 1, step: int = 10, refine_step: int = 2) -> OptimizeResult:
    """Search W downward from the budget bound at link quality ``p``.

    ``atom_at`` maps a homogeneous LSP to an :class:`AtomSpec` (for instance
    :func:`builtin_cross_atom`).  Every point of the sweep reuses the same
    seed, so neighbouring W values see the same channel realisation.
    """
    N = pick_n(budget.e1_header, K, D)
    w_max = w_upper_bound(budget.e1, N, K, D)
    atom: AtomSpec = atom_at(p)
    base = SimConfig(atom, mode="realistic", W=w_max, N=N, K=K, D=D, seed=seed,
                     rounds=rounds, warmup=warmup)
    cache: dict[int, SweepPoint] = {}

    def measure(W: int) -> SweepPoint:
        if W not in cache:
            s: SimStats = run(replace(base, W=W))
            cache[W] = SweepPoint(W, s.throughput_per_round, s.ci95, s.wasteful_fraction)
        return cache[W]

    best = measure(w_max)
    W = w_max - step
    while W >= 1:
        pt = measure(W)
        if pt.throughput > best.throughput:
            best = pt
        elif pt.throughput < best.throughput - pt.ci95:
            break
        W -= step
    lo = max(1, best.W - step + refine_step)
    hi = min(w_max, best.W + step - refine_step)
    for W in range(lo, hi + 1, refine_step):
        pt = measure(W)
        if pt.throughput > best.throughput:
            best = pt
    sweep = sorted(cache.values(), key=lambda s: -s.W)
    return OptimizeResult(best.W, N, best.throughput, w_max, p, budget, sweep, K, D)
