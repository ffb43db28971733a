"""Stored-packet tracking at a destination.

Items are XOR combinations of native packets, represented as frozensets of
``(flow_id, seq)`` pairs; XOR of two items is their symmetric difference.
A destination keeps overheard items in the O-pool and undecoded coded items
(each holding exactly one packet of its desired flow) in the C-pool.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

from .arq import DeliveredSet, SackFrame

NativeId = tuple[str, int]
XorItem = frozenset

OVERHEAR = "overhear"
DOWNLINK = "relay-downlink"


def xor(*items: Iterable[NativeId]) -> frozenset:
    out: set = set()
    for it in items:
        out ^= set(it)
    return frozenset(out)


@dataclass(frozen=True)
class Extraction:
    native: NativeId
    iteration: int
    chain: tuple[frozenset, ...]  # items whose XOR is {native}


class _PeerKnowledge:
    """Known-delivered packets of one foreign flow."""

    __slots__ = ("cum", "above", "live")

    def __init__(self, live=None):
        self.cum = 0
        self.above: frozenset[int] | set[int] = frozenset()
        self.live = live  # idealized mode: any container of retired seqs

    def __contains__(self, seq: int) -> bool:
        if self.live is not None:
            return seq in self.live
        return seq < self.cum or seq in self.above


class PoolSet:
    """Tracking state of one destination.

    ``mode`` is ``"single"`` (match the new item against the complementary
    pool once) or ``"multi"`` (keep peeling derived natives to a fixpoint).
    """

    def __init__(self, desired: str, mode: str = "single", audit: list | None = None):
        if mode not in ("single", "multi"):
            raise ValueError(f"unknown tracking mode {mode!r}")
        self.desired = desired
        self.mode = mode
        self.o_pool: set[frozenset] = set()
        self.c_pool: set[frozenset] = set()
        self.delivered = DeliveredSet()
        self.known: set[NativeId] = set()  # singleton O-pool natives
        self.peers: dict[str, _PeerKnowledge] = {}
        self._index: dict[NativeId, set[frozenset]] = defaultdict(set)
        self.first_iteration = 0
        self.later_iterations = 0
        self.audit = audit

    # ------------------------------------------------------------------
    # bookkeeping

    def _desired_of(self, item) -> NativeId | None:
        d = self.desired
        for nid in item:
            if nid[0] == d:
                return nid
        return None

    def _store(self, pool: set, item: frozenset) -> None:
        pool.add(item)
        idx = self._index
        for nid in item:
            idx[nid].add(item)
        if pool is self.o_pool and len(item) == 1:
            self.known.update(item)

    def _drop(self, pool: set, item: frozenset) -> None:
        pool.discard(item)
        idx = self._index
        for nid in item:
            s = idx.get(nid)
            if s is not None:
                s.discard(item)
                if not s:
                    del idx[nid]
        if pool is self.o_pool and len(item) == 1:
            self.known.difference_update(item)

    def _is_known(self, nid: NativeId) -> bool:
        if nid[0] == self.desired:
            return nid[1] in self.delivered
        return nid in self.known

    def _peer_delivered(self, nid: NativeId) -> bool:
        k = self.peers.get(nid[0])
        return k is not None and nid[1] in k

    def _deliver(self, nid: NativeId, iteration: int, chain) -> Extraction | None:
        if not self.delivered.add(nid[1]):
            return None
        if iteration == 1:
            self.first_iteration += 1
        else:
            self.later_iterations += 1
        ex = Extraction(nid, iteration, tuple(chain))
        if self.audit is not None:
            self.audit.append(ex)
        return ex

    def _drop_coded_for(self, nid: NativeId) -> None:
        for item in list(self._index.get(nid, ())):
            if item in self.c_pool and self._desired_of(item) == nid:
                self._drop(self.c_pool, item)

    def _try_coded(self, c: frozenset, d: NativeId, extra: frozenset | None = None):
        """Cancel ``c`` with known natives and at most one stored composite;
        return the chain if exactly ``{d}`` remains."""
        known = self.known
        rest = [nid for nid in c if nid != d and nid not in known]
        used = [frozenset((nid,)) for nid in c if nid != d and nid in known]
        if not rest:
            return [c, *used]
        rest_set = frozenset(rest)
        if extra is not None and len(extra) > 1:
            if extra == rest_set:
                return [c, *used, extra]
            return None
        for comp in self._index.get(rest[0], ()):
            if comp in self.o_pool and len(comp) > 1 and comp == rest_set:
                return [c, *used, comp]
        return None

    # ------------------------------------------------------------------
    # public operations

    def on_receive(self, item: Iterable[NativeId], via: str) -> list[NativeId]:
        """Process a received item; returns newly extracted desired natives."""
        item = frozenset(item)
        if not item:
            raise ValueError("empty item")
        out: list[Extraction] = []
        d = self._desired_of(item)
        if via == DOWNLINK and d is not None:
            if d[1] in self.delivered or item in self.c_pool:
                return []
            chain = self._try_coded(item, d)
            if chain is not None:
                ex = self._deliver(d, 1, chain)
                if ex:
                    out.append(ex)
            else:
                self._store(self.c_pool, item)
        elif via in (OVERHEAR, DOWNLINK):
            if item in self.o_pool:
                return []
            # a packet on the air is still in play even if known delivered;
            # pruning happens when new delivery knowledge arrives
            self._store(self.o_pool, item)
            candidates = set()
            for nid in item:
                candidates |= self._index.get(nid, set())
            for c in candidates:
                if c not in self.c_pool:
                    continue
                cd = self._desired_of(c)
                if cd[1] in self.delivered:
                    continue
                chain = self._try_coded(c, cd, extra=item if len(item) > 1 else None)
                if chain is not None:
                    ex = self._deliver(cd, 1, chain)
                    if ex:
                        out.append(ex)
        else:
            raise ValueError(f"unknown reception kind {via!r}")
        if self.mode == "multi" and out:
            self._peel([ex.native for ex in out], out)
        for ex in out:
            self._drop_coded_for(ex.native)
        return [ex.native for ex in out]

    def _peel(self, frontier: list[NativeId], out: list[Extraction]) -> None:
        iteration = 2
        derived: list[NativeId] = []
        while frontier:
            nxt: list[NativeId] = []
            for nid in frontier:
                for item in list(self._index.get(nid, ())):
                    if item not in self.c_pool and item not in self.o_pool:
                        continue
                    rest = [x for x in item if not self._is_known(x)]
                    if len(rest) != 1:
                        continue
                    x = rest[0]
                    chain = [item] + [frozenset((y,)) for y in item if y != x]
                    if x[0] == self.desired:
                        ex = self._deliver(x, iteration, chain)
                        if ex:
                            out.append(ex)
                            nxt.append(x)
                    elif x not in self.known:
                        # stored even if its own flow is done so the peel can
                        # continue through it; dropped again below
                        self._store(self.o_pool, frozenset((x,)))
                        derived.append(x)
                        nxt.append(x)
            frontier = nxt
            iteration += 1
        for x in derived:
            if self._peer_delivered(x):
                self._drop(self.o_pool, frozenset((x,)))

    def learn_peer(self, flow: str, frame: SackFrame | None = None,
                   live=None) -> list[frozenset]:
        """Record delivery knowledge about a foreign flow and prune.

        ``frame`` is an overheard SACK of that flow; ``live`` is any object
        supporting ``seq in live`` for packets its source will never send
        again (used for idealized, always-current knowledge).
        """
        if flow == self.desired:
            return []
        k = self.peers.get(flow)
        if k is None:
            k = self.peers[flow] = _PeerKnowledge(live)
        if frame is not None:
            if frame.cum >= k.cum:
                k.cum = frame.cum
                k.above = frozenset(frame.cum + i + 1 for i, b in enumerate(frame.bitmap) if b)
        return self.prune()

    def forget(self, nids: Iterable[NativeId]) -> None:
        """Targeted prune after ``nids`` became known delivered elsewhere."""
        idx = self._index
        o_pool = self.o_pool
        for nid in nids:
            items = idx.get(nid)
            if not items:
                continue
            for item in [it for it in items if it in o_pool]:
                if all(self._peer_delivered(n) for n in item):
                    self._drop(o_pool, item)

    def prune(self) -> list[frozenset]:
        """Drop C-pool items whose desired packet is delivered and O-pool
        items made only of packets known delivered to their own flows."""
        removed = []
        for item in list(self.c_pool):
            if self._desired_of(item)[1] in self.delivered:
                self._drop(self.c_pool, item)
                removed.append(item)
        for item in list(self.o_pool):
            if all(self._peer_delivered(n) for n in item):
                self._drop(self.o_pool, item)
                removed.append(item)
        return removed


def prune(pools: PoolSet, peer_updates: Mapping[str, SackFrame] | None = None) -> list[frozenset]:
    removed = []
    for flow, frame in (peer_updates or {}).items():
        removed += pools.learn_peer(flow, frame)
    removed += pools.prune()
    return removed


def on_receive(pools: PoolSet, item: Iterable[NativeId], via: str) -> list[NativeId]:
    return pools.on_receive(item, via)


def multi_iteration_stats(first: int, later: int) -> float:
    """Share of extractions that needed more than one iteration."""
    total = first + later
    return later / total if total else 0.0
