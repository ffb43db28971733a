"""Seeded Bernoulli erasure channel.

Every link event draws from its own Philox-4x64 stream keyed by
``(master_seed, blake2b(event_id))``.  Round ``r`` of an event is the
``r % BLOCK``-th uniform of block ``r // BLOCK``, where the block index sits
in the second counter word, so an outcome depends only on
``(master_seed, event_id, round_index)`` and never on which other events
were read or in which order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .atoms import AtomSpec

BLOCK = 4096
_MASK64 = (1 << 64) - 1


def parse_seed(value: str | int) -> int:
    """Accept a decimal or ``0x`` hex seed and reduce it to 64 bits."""
    if isinstance(value, int):
        return value & _MASK64
    text = value.strip().lower()
    return int(text, 16 if text.startswith("0x") else 10) & _MASK64


def _event_hash(event: str) -> int:
    return int.from_bytes(hashlib.blake2b(event.encode(), digest_size=8).digest(), "big")


def _block(seed: int, event: str, block: int) -> np.ndarray:
    bitgen = np.random.Philox(key=[seed & _MASK64, _event_hash(event)], counter=[0, block, 0, 0])
    return np.random.Generator(bitgen).random(BLOCK)


def uniforms(seed: int, event: str, start: int, count: int) -> np.ndarray:
    """Uniform draws of ``event`` for rounds ``start .. start+count-1``."""
    if count <= 0:
        return np.empty(0)
    first, last = start // BLOCK, (start + count - 1) // BLOCK
    data = np.concatenate([_block(seed, event, b) for b in range(first, last + 1)])
    off = start - first * BLOCK
    return data[off:off + count]


def event_table(atom: AtomSpec, realistic: bool = False) -> tuple[tuple[str, float], ...]:
    """All stochastic events of one round in a fixed order."""
    events = list(atom.data_events())
    if realistic:
        events += sorted(atom.ack_lsps().items())
    return tuple(events)


@dataclass(frozen=True)
class RoundChannelOutcome:
    round_index: int
    success: dict[str, bool]


def sample_round(atom: AtomSpec, round_index: int, master_seed: int,
                 realistic: bool = False) -> RoundChannelOutcome:
    seed = parse_seed(master_seed)
    out = {}
    b, off = divmod(round_index, BLOCK)
    for ev, lsp in event_table(atom, realistic):
        out[ev] = bool(_block(seed, ev, b)[off] < lsp)
    return RoundChannelOutcome(round_index, out)


class ChannelStream:
    """Sequential reader used by the simulator; yields one tuple of booleans
    per round, ordered as :func:`event_table`."""

    def __init__(self, atom: AtomSpec, seed: int, realistic: bool = False):
        self.events = event_table(atom, realistic)
        self.seed = parse_seed(seed)
        self._lsp = np.array([lsp for _, lsp in self.events])[:, None]

    def blocks(self, start_round: int = 0):
        b = start_round // BLOCK
        off = start_round - b * BLOCK
        while True:
            u = np.stack([_block(self.seed, ev, b) for ev, _ in self.events])
            rows = (u < self._lsp).T.tolist()
            yield from rows[off:]
            off = 0
            b += 1
