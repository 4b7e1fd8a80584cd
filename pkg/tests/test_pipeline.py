import pytest

from squashsim.config import ConfigError, MachineConfig, PolicyKind
from squashsim.pipeline import ISSUED, LivelockError, Pipeline, run
from squashsim.shadows import ShadowKind
from squashsim.trace import Instruction, InstructionKind, Trace, gen_loop_trace


def _trace(*rows):
    ins = []
    for row in rows:
        kind, shadow = row[0], row[1]
        ins.append(
            Instruction(
                seq=len(ins),
                pc=row[2],
                kind=kind,
                shadow_class=shadow,
                exec_latency=row[3] if len(row) > 3 else 1,
                resolve_latency=row[4] if len(row) > 4 else 1,
                misspeculate=row[5] if len(row) > 5 else False,
            )
        )
    return Trace(name="t", seed=0, instructions=ins)


def _plains(n, base=0x9000):
    return [(InstructionKind.PLAIN, None, base + 4 * i) for i in range(n)]


def test_dispatch_pushes_handles_on_queue():
    t = _trace((InstructionKind.LOAD, ShadowKind.E, 0x400, 1, 5),
               (InstructionKind.PLAIN, None, 0x404))
    p = Pipeline(t, MachineConfig())
    p.cycle = 1
    p.dispatch()
    assert len(p.rob) == 2
    assert [e.seq for e in p.hq.entries()] == [0]
    assert p.rob[0].hashes  # precomputed at dispatch


def test_dispatch_stalls_when_rob_full():
    t = _trace(*_plains(5))
    p = Pipeline(t, MachineConfig(rob_size=2, width=8))
    p.cycle = 1
    p.dispatch()
    assert len(p.rob) == 2
    assert p.cursor == 2
    p.dispatch()
    assert len(p.rob) == 2  # no state change while full


def test_issue_respects_width():
    t = _trace(*_plains(10))
    p = Pipeline(t, MachineConfig(width=3))
    p.cycle = 1
    p.dispatch()
    assert len(p.rob) == 3  # dispatch is width-bound too
    p.cycle = 2
    p.try_issue()
    assert sum(1 for e in p.rob if e.state == ISSUED) == 3


def test_empty_trace_zero_metrics():
    m = run(Trace(name="empty", seed=0, instructions=[]), MachineConfig())
    assert m.cycles == 0
    assert m.committed == 0
    assert m.dynamic_executed == 0


def test_straight_line_plain_identical_across_baseline_and_bloom():
    t = _trace(*_plains(100))
    base = run(t, MachineConfig(policy=PolicyKind.BASELINE))
    bloom = run(t, MachineConfig(policy=PolicyKind.DOS_BLOOM))
    assert base.cycles == bloom.cycles
    assert base.delayed_issues == 0
    assert bloom.delayed_issues == 0
    assert base.committed == bloom.committed == 100


def test_run_twice_identical_metrics():
    t = gen_loop_trace(8, 60, 0.1, seed=7)
    cfg = MachineConfig(policy=PolicyKind.DOS_BLOOM, oracle=True, seed=7)
    a = run(t, cfg)
    b = run(t, cfg)
    assert a == b


def test_marked_misspeculation_squashes_and_recovers():
    # branch marked to misspeculate once: younger issued work is discarded,
    # re-dispatched with fresh seqs, and the run still commits everything
    t = _trace(
        (InstructionKind.BRANCH, ShadowKind.C, 0x100, 1, 3, True),
        *_plains(4),
    )
    m = run(t, MachineConfig())
    assert m.squashes == 1
    assert m.committed == 5
    assert m.dynamic_executed > 5  # replayed work
    assert m.dynamic_executed == m.committed + m.squashed_executions


def test_squash_record_excludes_never_issued():
    # delay-all keeps younger work un-issued, so the squash inserts nothing
    t = _trace(
        (InstructionKind.BRANCH, ShadowKind.C, 0x100, 1, 4, True),
        *_plains(3),
    )
    records = []

    class Obs:
        def on_issue(self, e, speculative, cycle): pass
        def on_handle_safe(self, seq): pass
        def on_squash(self, record, hq): records.append(record)

    run(t, MachineConfig(policy=PolicyKind.DELAY_ALL), observer=Obs())
    assert len(records) == 1
    assert records[0].squashed_issued_pcs == frozenset()


def test_squash_record_carries_issued_pcs_and_youngest():
    t = _trace(
        (InstructionKind.BRANCH, ShadowKind.C, 0x100, 1, 6, True),
        (InstructionKind.PLAIN, None, 0x200),
        (InstructionKind.BRANCH, ShadowKind.C, 0x300, 1, 30),
        (InstructionKind.PLAIN, None, 0x400),
    )
    records = []

    class Obs:
        def on_issue(self, e, speculative, cycle): pass
        def on_handle_safe(self, seq): pass
        def on_squash(self, record, hq): records.append((record, list(hq)))

    run(t, MachineConfig(), observer=Obs())
    record, hq_seqs = records[0]
    assert record.squashed_issued_pcs == frozenset({0x200, 0x300, 0x400})
    assert record.youngest_handle == 2  # seq of the younger queued branch
    assert hq_seqs == [0, 2]


def test_in_order_commit_and_forward_progress():
    t = gen_loop_trace(6, 40, 0.2, seed=3)
    for policy in PolicyKind:
        m = run(t, MachineConfig(policy=policy, seed=3))
        assert m.committed == len(t), policy
        assert m.dynamic_executed == m.committed + m.squashed_executions


def test_rob_head_never_delayed_under_delay_all():
    # without the head exemption delay-all would deadlock behind its own handle
    t = _trace(
        (InstructionKind.LOAD, ShadowKind.E, 0x100, 1, 4),
        (InstructionKind.LOAD, ShadowKind.E, 0x104, 1, 4),
        *_plains(4),
    )
    m = run(t, MachineConfig(policy=PolicyKind.DELAY_ALL))
    assert m.committed == 6
    assert m.delayed_issues > 0


def test_baseline_never_delays():
    t = gen_loop_trace(8, 50, 0.3, seed=5)
    m = run(t, MachineConfig(policy=PolicyKind.BASELINE, seed=5))
    assert m.delayed_issues == 0
    assert m.fp_count == 0


def test_exec_latency_orders_commit():
    t = _trace((InstructionKind.LOAD, None, 0x100, 5), *_plains(1))
    m = run(t, MachineConfig())
    # the load's execution pins the in-order commit of both instructions
    assert m.cycles >= 6
    assert m.committed == 2


def test_livelock_guard_raises():
    t = _trace((InstructionKind.LOAD, None, 0x100, 40))
    with pytest.raises(LivelockError):
        run(t, MachineConfig(livelock_budget=10))


def test_config_validation():
    with pytest.raises(ConfigError):
        MachineConfig(bits=48).validate()
    with pytest.raises(ConfigError):
        MachineConfig(rob_size=0).validate()
    with pytest.raises(ConfigError):
        MachineConfig(hashes=0).validate()
    with pytest.raises(ConfigError):
        MachineConfig(fp_counting="sometimes").validate()
    MachineConfig().validate()


def test_commit_width_and_head_blocking():
    t = _trace(*_plains(6))
    p = Pipeline(t, MachineConfig(width=3))
    p.cycle = 1
    p.dispatch()
    assert p.commit() == 0  # head still Dispatched
    p.cycle = 2
    p.try_issue()
    p.cycle = 3
    p._complete_executions()
    assert p.commit() == 3  # full width of Executed entries at the head
    assert p.metrics.committed == 3


def test_squash_completeness():
    t = _trace(
        (InstructionKind.BRANCH, ShadowKind.C, 0x100, 1, 30),
        *_plains(5),
    )
    p = Pipeline(t, MachineConfig())
    p.cycle = 1
    p.dispatch()
    p.cycle = 2
    p.try_issue()
    record = p.squash_from(0)
    assert record.cause_seq == 0
    assert all(e.seq <= 0 for e in p.rob)
    assert record.squashed_issued_pcs  # younger entries had issued
    with pytest.raises(KeyError):
        p.squash_from(99)


def test_head_with_filtered_pc_still_issues():
    # the PC of the head is in the filters, but the head is exempt
    t = _trace(
        (InstructionKind.BRANCH, ShadowKind.C, 0x100, 1, 3, True),
        (InstructionKind.PLAIN, None, 0x200),
        (InstructionKind.BRANCH, ShadowKind.C, 0x100, 1, 3),  # same PC as the squasher
        *_plains(2),
    )
    m = run(t, MachineConfig(policy=PolicyKind.DOS_BLOOM))
    assert m.committed == 5  # the recorded-PC branch eventually led the ROB and issued


def test_bloom_delay_increments_counter():
    t = _trace(
        (InstructionKind.BRANCH, ShadowKind.C, 0x100, 1, 4, True),
        (InstructionKind.PLAIN, None, 0x200),
        (InstructionKind.PLAIN, None, 0x204),
    )
    m = run(t, MachineConfig(policy=PolicyKind.DOS_BLOOM))
    assert m.squashes == 1
    assert m.delayed_issues > 0  # replayed PCs hit the filter and waited


def test_full_handle_queue_stalls_dispatch_without_deadlock():
    # squashed handles stay queued until they reach the head, so a tiny
    # machine can fill its handle queue with zombies; dispatch must stall
    # and resume, never deadlock
    t = _trace(
        (InstructionKind.BRANCH, ShadowKind.C, 0x100, 1, 3, True),
        (InstructionKind.BRANCH, ShadowKind.C, 0x104, 1, 3),
        (InstructionKind.BRANCH, ShadowKind.C, 0x108, 1, 3),
        (InstructionKind.PLAIN, None, 0x200),
    )
    m = run(t, MachineConfig(rob_size=2, width=2))
    assert m.committed == 4


def test_squash_recovery_stalls_redispatch():
    t = _trace(
        (InstructionKind.BRANCH, ShadowKind.C, 0x100, 1, 3, True),
        *_plains(6),
    )
    fast = run(t, MachineConfig(squash_recovery=0))
    slow = run(t, MachineConfig(squash_recovery=5))
    assert fast.committed == slow.committed == 7
    assert slow.cycles > fast.cycles
