"""Round-driven simulation of an atom under PNC ARQ."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import stats as _st

from .arq import (AckCounter, WindowState, ack_bytes, advance_flow, apply_sack, encode_sack,
                  next_to_send, sync_window)
from .atoms import AtomSpec
from .channel import ChannelStream, event_table, parse_seed
from .tracking import DOWNLINK, OVERHEAR, PoolSet, multi_iteration_stats

MIN_BATCHES = 30


@dataclass(frozen=True)
class SimConfig:
    atom: AtomSpec
    mode: str = "idealized"          # idealized | realistic
    coupling: str = "non-coupled"    # coupled | non-coupled
    tracking: str = "single"         # off | single | multi
    W: int = 1
    N: int = 1
    K: int = 30
    D: int = 600
    seed: int = 1
    rounds: int = 200_000
    warmup: int = 10_000
    batches: int = MIN_BATCHES

    def validate(self) -> None:
        errs = []
        if self.mode not in ("idealized", "realistic"):
            errs.append(f"unknown mode {self.mode!r}")
        if self.coupling not in ("coupled", "non-coupled"):
            errs.append(f"unknown coupling {self.coupling!r}")
        if self.tracking not in ("off", "single", "multi"):
            errs.append(f"unknown tracking {self.tracking!r}")
        if self.W < 1:
            errs.append("W must be >= 1")
        if self.N < 1:
            errs.append("N must be >= 1")
        if self.K < 0 or self.D <= 0:
            errs.append("K must be >= 0 and D > 0")
        if self.rounds <= self.warmup or self.warmup < 0:
            errs.append("rounds must exceed warmup")
        if self.batches < 2 or self.rounds - self.warmup < self.batches:
            errs.append("need at least 2 batches and one round per batch")
        if self.coupling == "coupled" and (self.mode != "idealized" or self.W != 1):
            errs.append("coupled ARQ requires idealized ACKs and W=1")
        if errs:
            raise ValueError("; ".join(errs))


@dataclass
class SimStats:
    delivered: dict[str, int]
    rounds: int
    data_slots: int
    ack_slot_equivalents: float
    transmissions: int
    wasteful: int
    ack_events: int
    ack_lost: int
    ack_collisions: int
    ack_rounds: int
    first_iteration: int
    later_iterations: int
    throughput_per_round: float
    throughput_per_slot: float
    ci95: float
    slots_per_round: int
    total_delivered: dict[str, int] = field(default_factory=dict)
    distinct_sent: dict[str, int] = field(default_factory=dict)
    max_o_pool: int = 0
    max_c_pool: int = 0

    @property
    def wasteful_fraction(self) -> float:
        return self.wasteful / self.transmissions if self.transmissions else 0.0

    @property
    def ack_loss_fraction(self) -> float:
        return self.ack_lost / self.ack_events if self.ack_events else 0.0

    @property
    def multi_iter_fraction(self) -> float:
        return multi_iteration_stats(self.first_iteration, self.later_iterations)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(wasteful_fraction=self.wasteful_fraction,
                 ack_loss_fraction=self.ack_loss_fraction,
                 multi_iter_fraction=self.multi_iter_fraction)
        return d


CSV_COLUMNS = ("seed", "atom", "mode", "coupling", "tracking", "W", "N", "K", "D",
               "rounds", "delivered", "throughput_per_round", "throughput_per_slot",
               "ci95", "wasteful_fraction", "ack_events", "ack_loss_fraction",
               "multi_iter_fraction")


def csv_row(config: SimConfig, s: SimStats) -> dict:
    return {
        "seed": config.seed, "atom": config.atom.name, "mode": config.mode,
        "coupling": config.coupling, "tracking": config.tracking, "W": config.W,
        "N": config.N, "K": config.K, "D": config.D, "rounds": config.rounds,
        "delivered": "|".join(f"{k}={v}" for k, v in s.delivered.items()),
        "throughput_per_round": f"{s.throughput_per_round:.6f}",
        "throughput_per_slot": f"{s.throughput_per_slot:.6f}",
        "ci95": f"{s.ci95:.6f}",
        "wasteful_fraction": f"{s.wasteful_fraction:.6f}",
        "ack_events": s.ack_events,
        "ack_loss_fraction": f"{s.ack_loss_fraction:.6f}",
        "multi_iter_fraction": f"{s.multi_iter_fraction:.6f}",
    }


def degradation(actual: float, benchmark: float) -> float:
    if benchmark <= 0:
        raise ValueError("benchmark must be positive")
    return (benchmark - actual) / benchmark


def overhead_metric(actual: float, benchmark: float) -> float:
    """Extra airtime per delivered packet relative to the benchmark."""
    if actual <= 0 or benchmark <= 0:
        raise ValueError("throughputs must be positive")
    return (2 / actual - 2 / benchmark) / (2 / benchmark)


class _Retired:
    """Coupled sources share one index; everything below it is retired."""

    below = 0

    def __contains__(self, seq: int) -> bool:
        return seq < self.below


class _Plan:
    """Pattern compiled to index-based steps for the round loop."""

    def __init__(self, atom: AtomSpec, realistic: bool):
        self.flows = [f.id for f in atom.flows]
        self.dst_of = {f.id: f.dst for f in atom.flows}
        self.flow_at = {f.dst: f.id for f in atom.flows}
        self.src_of = {f.id: f.src for f in atom.flows}
        events = [e for e, _ in event_table(atom, realistic)]
        pos = {e: i for i, e in enumerate(events)}
        relays = {n for n, r in atom.nodes if r == "relay"}
        self.steps = []
        for slot in atom.slots:
            tx_items = []
            for tx in slot.transmissions:
                if tx.node in relays:
                    tx_items.append((tx.node, atom.resolve(slot, tx.rule)))
            rxs = []
            for rx in slot.receptions:
                kind = atom.link(rx.link).kind
                idx = pos[f"{slot.index}:{rx.node}<-{rx.link}"]
                relay_src = next((t for t in rx.rule if t in relays), None)
                flows = tuple(sorted(atom.resolve(slot, rx.rule)))
                if kind == "relay-decode":
                    rxs.append(("decode", idx, rx.node, flows))
                elif relay_src is not None:
                    rxs.append(("relay", idx, rx.node, relay_src))
                elif rx.node in self.flow_at:
                    rxs.append(("direct", idx, rx.node, flows))
            self.steps.append((tx_items, rxs))
        self.ack_up = {d: pos.get(f"ack-up:{d}") for d in self.flow_at}
        self.ack_over = {d: pos.get(f"ack-over:{d}") for d in self.flow_at}
        self.ack_down = {s: pos.get(f"ack-down:{s}") for s in self.src_of.values()}


def run(config: SimConfig) -> SimStats:
    config.validate()
    atom = config.atom
    realistic = config.mode == "realistic"
    coupled = config.coupling == "coupled"
    plan = _Plan(atom, realistic)
    flows = plan.flows
    nf = len(flows)
    fidx = {f: i for i, f in enumerate(flows)}
    spr = atom.slots_per_round
    tracking = config.tracking
    pools = [PoolSet(f, "multi" if tracking == "multi" else "single") for f in flows]
    windows = [WindowState(config.W) for _ in flows]
    wmap = dict(zip(flows, windows))
    counters = [AckCounter(config.N) for _ in flows]
    retired = _Retired()
    if not realistic:
        for i, p in enumerate(pools):
            for j, g in enumerate(flows):
                if j != i:
                    p.learn_peer(g, live=retired if coupled else pools[j].delivered)
    ack_cost = ack_bytes(config.K, config.W) / config.D
    stream = ChannelStream(atom, parse_seed(config.seed), realistic).blocks()

    # compile the pattern against flow indices
    steps = []
    for tx_items, rxs in plan.steps:
        txs = [(node, tuple(sorted(fidx[f] for f in fset)), fset) for node, fset in tx_items]
        out = []
        for kind, idx, node, arg in rxs:
            f = plan.flow_at.get(node)
            if kind == "decode":
                out.append((0, idx, node, frozenset(arg), -1))
            elif f is None:
                continue
            elif kind == "relay":
                out.append((1, idx, arg, None, fidx[f]))
            else:
                out.append((2, idx, None, tuple(fidx[g] for g in arg), fidx[f]))
        steps.append((txs, out))
    ack_up = [plan.ack_up[plan.dst_of[f]] for f in flows]
    ack_down = [plan.ack_down[plan.src_of[f]] for f in flows]
    ack_over = [plan.ack_over[plan.dst_of[f]] for f in flows]

    measured = config.rounds - config.warmup
    nb = config.batches
    bounds = np.linspace(0, measured, nb + 1).astype(int)[1:]
    batch_deliv = np.zeros(nb)
    batch_equiv = np.zeros(nb)
    bi = 0
    next_bound = config.warmup + int(bounds[0])

    delivered = [0] * nf
    total_delivered = [0] * nf
    highest = [-1] * nf
    transmissions = wasteful = 0
    ack_events = ack_lost = collisions = ack_rounds = 0
    ack_equiv = 0.0
    max_o = max_c = 0
    first0 = later0 = 0
    keep_pools = tracking != "off"
    franges = range(nf)
    warmup = config.warmup
    W = config.W

    for r in range(config.rounds):
        ev = next(stream)
        measuring = r >= warmup
        if r == warmup:
            first0 = sum(p.first_iteration for p in pools)
            later0 = sum(p.later_iterations for p in pools)

        # 1. sources pick packets
        if coupled:
            picks = advance_flow("coupled", wmap)
            seqs = [picks[f][0] for f in flows]
            prev_below = retired.below
            retired.below = seqs[0]
        else:
            seqs = [next_to_send(w)[0] for w in windows]
        for i in franges:
            seq = seqs[i]
            if seq > highest[i]:
                highest[i] = seq
            if measuring:
                w = windows[i]
                if seq in pools[i].delivered and seq not in w.acked and seq >= w.sn_min:
                    wasteful += 1
        if measuring:
            transmissions += nf

        # 2-3. pattern slots and destination processing
        decoded = {}
        coded_rx = [False] * nf
        new = 0
        fresh = []
        for txs, rxs in steps:
            relay_out = {}
            for node, members, fset in txs:
                parts = decoded.get(node)
                if parts:
                    cover = frozenset().union(*[d for d in parts if d <= fset])
                    relay_out[node] = members if cover == fset else None
            for kind, idx, node, arg, fi in rxs:
                if not ev[idx]:
                    continue
                if kind == 0:
                    decoded.setdefault(node, []).append(arg)
                    continue
                if kind == 1:
                    members = relay_out.get(node)
                    if members is None:
                        continue
                    if fi in members:
                        coded_rx[fi] = True
                    via = DOWNLINK
                else:
                    members = arg
                    via = OVERHEAR
                item = frozenset([(flows[g], seqs[g]) for g in members])
                got = pools[fi].on_receive(item, via)
                if got:
                    n = len(got)
                    total_delivered[fi] += n
                    fresh += got
                    if measuring:
                        delivered[fi] += n
                        new += n

        if not keep_pools:
            for p in pools:
                if p.o_pool or p.c_pool:
                    p.o_pool.clear()
                    p.c_pool.clear()
                    p.known.clear()
                    p._index.clear()
        elif measuring:
            for p in pools:
                if len(p.o_pool) > max_o:
                    max_o = len(p.o_pool)
                if len(p.c_pool) > max_c:
                    max_c = len(p.c_pool)

        # 4-5. feedback
        equiv = spr
        if not realistic:
            # exact knowledge plus ACK wrap back every round
            for i in franges:
                w = windows[i]
                if fresh:
                    sync_window(w, pools[i].delivered)
                else:
                    w.cursor = w.sn_min
            if keep_pools:
                if coupled:
                    if retired.below != prev_below:
                        gone = [(f, prev_below) for f in flows]
                        for p in pools:
                            p.forget(gone)
                elif fresh:
                    for p in pools:
                        p.forget(fresh)
        else:
            due = [i for i in franges if counters[i].record(coded_rx[i])]
            if due:
                equiv += 2 * ack_cost
                if measuring:
                    ack_rounds += 1
                    ack_events += len(due)
                if len(due) >= 3:
                    at_relay = {}
                    if measuring:
                        collisions += 1
                else:
                    at_relay = {i: encode_sack(pools[i].delivered, W) for i in due if ev[ack_up[i]]}
                reached = 0
                if at_relay:
                    for i, fr in at_relay.items():
                        if ev[ack_down[i]]:
                            apply_sack(windows[i], fr, wrap=True)
                            reached += 1
                    for i in franges:
                        if ev[ack_over[i]]:
                            for j, fr in at_relay.items():
                                if j != i:
                                    pools[i].learn_peer(flows[j], fr)
                if measuring:
                    ack_lost += len(due) - reached

        if measuring:
            batch_deliv[bi] += new
            batch_equiv[bi] += equiv / spr
            ack_equiv += equiv - spr
            if r + 1 >= next_bound and bi < nb - 1:
                bi += 1
                next_bound = warmup + int(bounds[bi])

    rounds_equiv = batch_equiv.sum()
    thr = batch_deliv.sum() / rounds_equiv
    per_batch = batch_deliv / batch_equiv
    half = float(_st.t.ppf(0.975, nb - 1) * per_batch.std(ddof=1) / math.sqrt(nb))
    return SimStats(
        delivered=dict(zip(flows, delivered)),
        rounds=measured,
        data_slots=measured * spr,
        ack_slot_equivalents=ack_equiv,
        transmissions=transmissions,
        wasteful=wasteful,
        ack_events=ack_events,
        ack_lost=ack_lost,
        ack_collisions=collisions,
        ack_rounds=ack_rounds,
        first_iteration=sum(p.first_iteration for p in pools) - first0,
        later_iterations=sum(p.later_iterations for p in pools) - later0,
        throughput_per_round=thr,
        throughput_per_slot=thr / spr,
        ci95=half,
        slots_per_round=spr,
        total_delivered=dict(zip(flows, total_delivered)),
        distinct_sent={f: highest[i] + 1 for i, f in enumerate(flows)},
        max_o_pool=max_o,
        max_c_pool=max_c,
    )
