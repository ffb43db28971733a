"""Selective-repeat sender window, SACK frames and ACK scheduling."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

SEQ_MODULUS = 1 << 32


class ProtocolDesync(RuntimeError):
    """A SACK does not fit the sender's current window."""


class Status(str, Enum):
    ACKED = "acked"
    SENT = "sent-unacked"
    UNSENT = "unsent"


class DeliveredSet:
    """Receiver-side delivered sequence numbers kept as ``cum`` plus the
    out-of-order set above it."""

    __slots__ = ("cum", "above")

    def __init__(self, seqs: Iterable[int] = ()):
        self.cum = 0
        self.above: set[int] = set()
        for s in seqs:
            self.add(s)

    def add(self, seq: int) -> bool:
        if seq < self.cum or seq in self.above:
            return False
        if seq == self.cum:
            self.cum += 1
            above = self.above
            while self.cum in above:
                above.remove(self.cum)
                self.cum += 1
        else:
            self.above.add(seq)
        return True

    def __contains__(self, seq: int) -> bool:
        return seq < self.cum or seq in self.above

    def __len__(self) -> int:
        return self.cum + len(self.above)

    def copy(self) -> "DeliveredSet":
        d = DeliveredSet()
        d.cum = self.cum
        d.above = set(self.above)
        return d


@dataclass(frozen=True)
class SackFrame:
    cum: int
    bitmap: tuple[bool, ...]

    @property
    def window(self) -> int:
        return len(self.bitmap) + 1

    def __str__(self) -> str:
        return "{%d, %s}" % (self.cum, "".join("1" if b else "0" for b in self.bitmap))

    @classmethod
    def parse(cls, text: str) -> "SackFrame":
        """Parse the ``{cum, bits}`` notation, e.g. ``{7, 0100101}``."""
        body = text.strip().lstrip("{").rstrip("}")
        cum, bits = (t.strip() for t in body.split(","))
        if set(bits) - {"0", "1"}:
            raise ValueError(f"bad bitmap {bits!r}")
        return cls(int(cum), tuple(b == "1" for b in bits))

    def to_bytes(self) -> bytes:
        """4-byte big-endian ``cum mod 2**32`` then the bitmap, MSB first,
        zero padded to whole bytes."""
        nbytes = (len(self.bitmap) + 7) // 8
        acc = 0
        for b in self.bitmap:
            acc = (acc << 1) | int(b)
        acc <<= nbytes * 8 - len(self.bitmap)
        return (self.cum % SEQ_MODULUS).to_bytes(4, "big") + acc.to_bytes(nbytes, "big")

    @classmethod
    def from_bytes(cls, data: bytes, window: int, near: int = 0) -> "SackFrame":
        """Decode a wire frame; ``near`` (the sender's ``sn_min``) resolves
        the 32-bit wrap of ``cum``."""
        nbits = window - 1
        nbytes = (nbits + 7) // 8
        if len(data) != 4 + nbytes:
            raise ValueError(f"expected {4 + nbytes} bytes for W={window}, got {len(data)}")
        wire = int.from_bytes(data[:4], "big")
        delta = (wire - near) % SEQ_MODULUS
        if delta >= SEQ_MODULUS // 2:
            delta -= SEQ_MODULUS
        acc = int.from_bytes(data[4:], "big") if nbytes else 0
        pad = nbytes * 8 - nbits
        if acc & ((1 << pad) - 1):
            raise ValueError("nonzero pad bits")
        acc >>= pad
        bits = tuple(bool((acc >> (nbits - 1 - k)) & 1) for k in range(nbits))
        return cls(near + delta, bits)


def ack_bytes(k_header: int, window: int) -> float:
    """Airtime size of one ACK.  The bitmap is charged as ``W/8`` bytes even
    though it carries ``W-1`` bits."""
    return k_header + window / 8


def encode_sack(delivered: DeliveredSet | Iterable[int], window: int) -> SackFrame:
    if window < 1:
        raise ValueError("window must be >= 1")
    if not isinstance(delivered, DeliveredSet):
        delivered = DeliveredSet(delivered)
    cum = delivered.cum
    limit = cum + window
    if any(s >= limit for s in delivered.above):
        raise ValueError(f"delivered packet beyond cum+W-1 = {limit - 1}")
    above = delivered.above
    return SackFrame(cum, tuple((cum + k) in above for k in range(1, window)))


def decode_sack(frame: SackFrame) -> tuple[int, frozenset[int]]:
    """Return ``(cum, received)``: every sequence number below ``cum`` is
    received, plus the explicit set inside ``(cum, cum+W-1]``."""
    return frame.cum, frozenset(frame.cum + k + 1 for k, b in enumerate(frame.bitmap) if b)


def missing(frame: SackFrame) -> list[int]:
    _, got = decode_sack(frame)
    return [s for s in range(frame.cum, frame.cum + frame.window) if s not in got]


@dataclass
class WindowState:
    size: int
    sn_min: int = 0
    acked: set[int] = field(default_factory=set)
    sent: set[int] = field(default_factory=set)
    cursor: int = 0  # absolute sequence number of the next candidate

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("window size must be >= 1")
        self.cursor = max(self.cursor, self.sn_min)

    @property
    def right(self) -> int:
        return self.sn_min + self.size - 1

    def status(self, offset: int) -> Status:
        seq = self.sn_min + offset
        if seq in self.acked:
            return Status.ACKED
        return Status.SENT if seq in self.sent else Status.UNSENT

    def statuses(self) -> list[Status]:
        return [self.status(k) for k in range(self.size)]


def next_to_send(w: WindowState) -> tuple[int, bool]:
    """Pick the next packet and advance the cursor.

    Returns ``(seq, boundary_wrap)``; acked packets are skipped and running
    off the right edge wraps back to ``sn_min``.
    """
    right = w.right
    seq = max(w.cursor, w.sn_min)
    acked = w.acked
    while seq <= right and seq in acked:
        seq += 1
    wrapped = False
    if seq > right:
        wrapped = True
        seq = w.sn_min  # never acked
    w.cursor = seq + 1
    w.sent.add(seq)
    return seq, wrapped


def apply_sack(w: WindowState, frame: SackFrame, wrap: bool = True) -> WindowState:
    """Align the window with a destination's SACK.

    ``wrap=True`` is the ACK wrap back: the cursor returns to the new left
    boundary and a new transmission cycle starts.  ``wrap=False`` only
    updates knowledge, keeping the cursor where it was.
    """
    cum, got = decode_sack(frame)
    if cum < w.sn_min or cum > w.sn_min + w.size:
        raise ProtocolDesync(f"cum {cum} outside window [{w.sn_min}, {w.sn_min + w.size}]")
    if any(s > w.right for s in got):
        raise ProtocolDesync(f"SACK reports packets beyond right boundary {w.right}")
    w.sn_min = cum
    w.acked = {s for s in w.acked if s > cum} | set(got)
    w.sent = {s for s in w.sent if s >= cum}
    if wrap:
        w.cursor = cum
    else:
        w.cursor = max(w.cursor, cum)
    return w


def sync_window(w: WindowState, delivered: DeliveredSet, wrap: bool = True) -> WindowState:
    """Idealized feedback: same result as ``apply_sack(w, encode_sack(
    delivered, w.size), wrap)`` without building the frame."""
    cum = delivered.cum
    if cum < w.sn_min or cum > w.sn_min + w.size:
        raise ProtocolDesync(f"cum {cum} outside window [{w.sn_min}, {w.sn_min + w.size}]")
    right = w.sn_min + w.size - 1
    if any(s > right for s in delivered.above):
        raise ProtocolDesync(f"delivered packets beyond right boundary {right}")
    if cum != w.sn_min:
        w.sn_min = cum
        w.sent = {s for s in w.sent if s >= cum}
    if wrap:
        w.cursor = cum
    elif w.cursor < cum:
        w.cursor = cum
    w.acked = set(delivered.above)
    return w


@dataclass
class AckCounter:
    threshold: int
    receptions: int = 0

    def __post_init__(self):
        if self.threshold < 1:
            raise ValueError("ACK frequency N must be >= 1")

    def record(self, coded_received: bool) -> bool:
        """Count one coded reception from the relay; True when an ACK is due.
        Overheard items never count."""
        if not coded_received:
            return False
        self.receptions += 1
        if self.receptions >= self.threshold:
            self.receptions = 0
            return True
        return False


def record_reception(c: AckCounter, coded_received: bool) -> tuple[AckCounter, bool]:
    due = c.record(coded_received)
    return c, due


def advance_flow(mode: str, windows: Mapping[str, WindowState],
                 idealized: bool = True) -> dict[str, tuple[int, bool]]:
    """Per-flow ``(seq, boundary_wrap)`` to transmit this round.

    Non-coupled flows follow their own windows.  Coupled flows share one
    index: all retransmit ``i`` until every flow's packet ``i`` is known
    delivered, which with shared idealized knowledge and ``W=1`` is the
    smallest ``sn_min`` over the flows.
    """
    if mode == "non-coupled":
        return {f: next_to_send(w) for f, w in windows.items()}
    if mode != "coupled":
        raise ValueError(f"unknown coupling mode {mode!r}")
    if not idealized:
        raise ValueError("coupled ARQ is only defined with idealized ACKs")
    if any(w.size != 1 for w in windows.values()):
        raise ValueError("coupled ARQ requires W=1")
    index = min(w.sn_min for w in windows.values())
    for w in windows.values():
        w.sent.add(index)
    return {f: (index, False) for f in windows}
