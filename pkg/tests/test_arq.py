import pytest
from hypothesis import given, settings, strategies as st

from pncarq.arq import (AckCounter, DeliveredSet, ProtocolDesync, SackFrame, Status, WindowState,
                        ack_bytes, advance_flow, apply_sack, decode_sack, encode_sack, missing,
                        next_to_send, record_reception, sync_window)


def test_encode_examples():
    d = set(range(7)) | {9, 12, 14}
    assert str(encode_sack(d, 8)) == "{7, 0100101}"
    assert str(encode_sack(set(range(3)) | {4}, 5)) == "{3, 1000}"
    assert str(encode_sack(set(), 5)) == "{0, 0000}"


def test_decode_examples():
    cum, got = decode_sack(SackFrame.parse("{7, 0100101}"))
    assert cum == 7 and got == {9, 12, 14}
    assert missing(SackFrame.parse("{7, 0100101}")) == [7, 8, 10, 11, 13]
    assert decode_sack(SackFrame.parse("{3, 1000}")) == (3, frozenset({4}))
    assert missing(SackFrame.parse("{5, 1111}")) == [5]


def test_encode_rejects_packets_beyond_window():
    with pytest.raises(ValueError):
        encode_sack({0, 1, 9}, 4)


def test_wire_format():
    f = SackFrame.parse("{7, 0100101}")
    raw = f.to_bytes()
    assert raw == bytes([0, 0, 0, 7, 0b01001010])
    assert SackFrame.from_bytes(raw, 8) == f
    big = SackFrame(2**32 + 5, (True,) * 3)
    assert SackFrame.from_bytes(big.to_bytes(), 4, near=2**32) == big
    with pytest.raises(ValueError):
        SackFrame.from_bytes(bytes([0, 0, 0, 7, 0b01001011]), 8)


def test_ack_bytes_charges_w_over_8():
    assert ack_bytes(30, 170) == 30 + 21.25



@settings(max_examples=10_000, deadline=None)
@given(w=st.integers(1, 64), cum=st.integers(0, 2**40), data=st.data())
def test_sack_roundtrip(w, cum, data):
    above = data.draw(st.sets(st.integers(cum + 1, cum + w - 1), max_size=w)) if w > 1 else set()
    d = DeliveredSet()
    d.cum = cum
    d.above = set(above)
    f = encode_sack(d, w)
    assert decode_sack(f) == (cum, frozenset(above))
    assert SackFrame.from_bytes(f.to_bytes(), w, near=max(0, cum - w)) == f
    assert SackFrame.parse(str(f)) == f


def test_fresh_window_sends_in_order():
    w = WindowState(4)
    assert [next_to_send(w) for _ in range(5)] == [(0, False), (1, False), (2, False), (3, False),
                                                   (0, True)]


def test_worked_ack_wrap_back():
    w = WindowState(5, sn_min=1, sent={1, 2, 3, 4}, cursor=5)
    apply_sack(w, SackFrame.parse("{3, 1000}"))
    assert w.sn_min == 3
    assert w.status(1) == Status.ACKED
    assert w.cursor == 3
    assert next_to_send(w) == (3, False)
    assert next_to_send(w) == (5, False)  # 4 is skipped
    assert next_to_send(w) == (6, False)
    assert next_to_send(w) == (7, False)
    assert next_to_send(w) == (3, True)  # boundary wrap back


def test_full_slide():
    w = WindowState(5, sn_min=0, sent={0, 1, 2})
    apply_sack(w, SackFrame(4, (False,) * 4))
    assert w.sn_min == 4
    assert w.statuses() == [Status.UNSENT] * 5


def test_apply_is_idempotent():
    w = WindowState(8, sent=set(range(8)), cursor=8)
    f = SackFrame.parse("{2, 0100100}")
    apply_sack(w, f)
    snap = (w.sn_min, set(w.acked), set(w.sent), w.cursor)
    apply_sack(w, f)
    assert (w.sn_min, w.acked, w.sent, w.cursor) == snap


def test_desync_detected():
    w = WindowState(4, sn_min=10)
    with pytest.raises(ProtocolDesync):
        apply_sack(w, SackFrame(3, (False,) * 3))
    with pytest.raises(ProtocolDesync):
        apply_sack(w, SackFrame(20, (False,) * 3))


def test_knowledge_update_keeps_cursor():
    w = WindowState(4)
    for _ in range(3):
        next_to_send(w)
    apply_sack(w, SackFrame.parse("{1, 000}"), wrap=False)
    assert w.cursor == 3


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 6)), max_size=60), st.integers(1, 8))
def test_never_sends_acked_and_sn_min_monotone(ops, size):
    w = WindowState(size)
    d = DeliveredSet()
    last = 0
    for deliver, k in ops:
        seq, _ = next_to_send(w)
        assert seq not in w.acked
        assert w.sn_min <= seq <= w.right
        if deliver:
            d.add(seq)
        if k == 0:
            apply_sack(w, encode_sack(d, size))
        assert w.sn_min >= last
        assert w.status(0) != Status.ACKED
        last = w.sn_min


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 5), max_size=30), st.integers(1, 8))
def test_sync_window_matches_sack_path(offsets, size):
    a, b = WindowState(size), WindowState(size)
    d = DeliveredSet()
    for off in offsets:
        s1, _ = next_to_send(a)
        s2, _ = next_to_send(b)
        assert s1 == s2
        if off < 3:
            d.add(s1)
        wrap = off % 2 == 0
        apply_sack(a, encode_sack(d, size), wrap=wrap)
        sync_window(b, d, wrap=wrap)
        assert (a.sn_min, a.acked, a.cursor) == (b.sn_min, b.acked, b.cursor)


def test_ack_counter():
    c = AckCounter(1)
    assert c.record(True)
    c = AckCounter(4)
    assert [c.record(True) for _ in range(4)] == [False, False, False, True]
    assert c.receptions == 0
    assert not c.record(False)
    assert c.receptions == 0
    c, due = record_reception(AckCounter(2), True)
    assert (c.receptions, due) == (1, False)
    with pytest.raises(ValueError):
        AckCounter(0)


def test_coupled_waits_for_slowest_flow():
    a, b = WindowState(1), WindowState(1)
    wins = {"AC": a, "BD": b}
    assert advance_flow("coupled", wins) == {"AC": (0, False), "BD": (0, False)}
    apply_sack(a, encode_sack({0}, 1))  # A_0 delivered, B_0 not
    assert advance_flow("coupled", wins) == {"AC": (0, False), "BD": (0, False)}
    apply_sack(b, encode_sack({0}, 1))
    assert advance_flow("coupled", wins) == {"AC": (1, False), "BD": (1, False)}


def test_noncoupled_flows_advance_independently():
    a, b = WindowState(1), WindowState(1)
    wins = {"AC": a, "BD": b}
    advance_flow("non-coupled", wins)
    apply_sack(a, encode_sack({0}, 1))
    picks = advance_flow("non-coupled", wins)
    assert picks["AC"][0] == 1 and picks["BD"][0] == 0


def test_coupled_scope():
    with pytest.raises(ValueError):
        advance_flow("coupled", {"x": WindowState(2)})
    with pytest.raises(ValueError):
        advance_flow("coupled", {"x": WindowState(1)}, idealized=False)
