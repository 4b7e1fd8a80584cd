import pytest
from hypothesis import given, strategies as st

from squashsim.shadows import HandleQueue, HandleQueueError, ShadowKind


def _queue_with(*seqs):
    hq = HandleQueue()
    for s in seqs:
        hq.push_handle(s, ShadowKind.C)
    return hq


def test_push_keeps_fifo_order():
    hq = _queue_with(1, 3, 5)
    assert [e.seq for e in hq.entries()] == [1, 3, 5]
    assert hq.oldest_seq() == 1
    assert hq.youngest_handle() == 5


def test_push_into_empty_is_head_and_tail():
    hq = _queue_with(7)
    assert hq.oldest_seq() == hq.youngest_handle() == 7


def test_push_out_of_order_rejected():
    hq = _queue_with(4)
    with pytest.raises(HandleQueueError):
        hq.push_handle(3, ShadowKind.E)
    with pytest.raises(HandleQueueError):
        hq.push_handle(4, ShadowKind.E)


def test_youngest_counts_squashed_entries():
    hq = _queue_with(1, 3, 5)
    hq.mark_squashed_after(1)
    assert hq.youngest_handle() == 5
    assert hq.oldest_seq() == 1


def test_youngest_of_empty_is_none():
    assert HandleQueue().youngest_handle() is None


def test_mark_squashed_after_flags_only_younger():
    hq = _queue_with(1, 3, 5, 8)
    hq.mark_squashed_after(3)
    flags = {e.seq: e.squashed for e in hq.entries()}
    assert flags == {1: False, 3: False, 5: True, 8: True}


def test_mark_resolved_unknown_seq_errors():
    hq = _queue_with(1)
    with pytest.raises(HandleQueueError):
        hq.mark_resolved(99)


def test_resolved_head_pops():
    hq = _queue_with(1, 3)
    hq.mark_resolved(1)
    assert hq.pop_safe() == [1]
    assert hq.oldest_seq() == 3


def test_resolved_mid_queue_waits_for_head():
    hq = _queue_with(1, 3, 5)
    hq.mark_resolved(3)
    hq.mark_resolved(5)
    assert hq.pop_safe() == []  # unresolved head blocks everything
    hq.mark_resolved(1)
    assert hq.pop_safe() == [1, 3, 5]


def test_squashed_entries_drain_behind_resolved_head():
    hq = _queue_with(1, 3, 5, 8)
    hq.mark_squashed_after(1)
    assert hq.pop_safe() == []
    hq.mark_resolved(1)
    assert hq.pop_safe() == [1, 3, 5, 8]
    assert len(hq) == 0


def test_shadows_predicate_ignores_resolved_and_squashed():
    hq = _queue_with(1, 3, 5)
    assert hq.shadows(2)
    assert hq.shadows(99)
    assert not hq.shadows(1)  # nothing older than the oldest handle
    hq.mark_resolved(1)
    assert not hq.shadows(2)
    assert hq.shadows(4)  # 3 still unresolved
    hq.mark_squashed_after(1)
    assert not hq.shadows(99)


@given(st.lists(st.tuples(st.sampled_from(["push", "resolve", "squash", "pop"]),
                          st.integers(0, 30)), max_size=80))
def test_fifo_discipline_property(ops):
    hq = HandleQueue()
    pushed: list[int] = []
    popped: list[int] = []
    next_seq = 0
    live: list[int] = []
    for op, arg in ops:
        if op == "push":
            hq.push_handle(next_seq, ShadowKind.C)
            pushed.append(next_seq)
            live.append(next_seq)
            next_seq += 1
        elif op == "resolve" and live:
            hq.mark_resolved(live[arg % len(live)])
        elif op == "squash" and live:
            hq.mark_squashed_after(live[arg % len(live)])
        elif op == "pop":
            got = hq.pop_safe()
            popped.extend(got)
            live = [s for s in live if s not in got]
    popped.extend(hq.pop_safe())
    # popped seqs are always a prefix of pushed seqs, in insertion order
    assert popped == pushed[: len(popped)]
