"""Replay-attack scenario builders and the attacker-driven scenario runner.

Three patterns are modeled:

* ``single``: one exception-class handle forced to misspeculate r times
  with a side-channel transmit instruction in the same window.
* ``serial``: h independent acquire/use/release episodes, one handle
  each, separated by at least a reorder-buffer window so no squash
  reaches a neighbouring episode.  Each episode amplifies its own
  transmit instruction, so the attack totals add up across handles.
* ``nested``: h control-flow handles in one window with strictly
  decreasing resolve latencies inward.  Every re-dispatch of an inner
  handle is re-acquired and misspeculates r more times, so attack totals
  multiply across handles.

Handle acquire/release is modeled as control over resolution outcomes: an
armed handle instance misspeculates on its first r resolutions and then
resolves correctly.  A release cascades inward: once a handle's outer
neighbour has finished for good, the handle itself stops misspeculating,
ending the attack after a single unsafe epoch.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from .config import MachineConfig
from .metrics import Metrics
from .pipeline import LivelockError, Pipeline, RobEntry, SquashRecord
from .policy import PolicyState, restore_context, save_context
from .shadows import ShadowKind
from .trace import Instruction, InstructionKind, Trace


class ScenarioPattern(str, Enum):
    SINGLE = "single"
    SERIAL = "serial"
    NESTED = "nested"

    def __str__(self) -> str:
        return self.value


# -- attacker script actions ---------------------------------------------------


@dataclass(frozen=True)
class ForceMisspeculate:
    """Slot misspeculates on the first `times` resolutions of each dynamic
    instance (None = unbounded); `outer_slot` is the enclosing handle for
    nested patterns."""

    slot: int
    times: int | None
    outer_slot: int | None = None


@dataclass(frozen=True)
class AcquireHandle:
    slot: int


@dataclass(frozen=True)
class ReleaseHandle:
    slot: int
    after_replays: int = 0


@dataclass(frozen=True)
class ContextSwitch:
    """Leave and re-enter the context at a trace position (save/restore)."""

    at_position: int


Action = ForceMisspeculate | AcquireHandle | ReleaseHandle | ContextSwitch


def compile_actions(actions: list[Action]) -> tuple[dict[int, ForceMisspeculate], list[int]]:
    """Reduce a script to per-slot misspeculation budgets and switch points."""
    force: dict[int, ForceMisspeculate] = {}
    acquired: dict[int, AcquireHandle] = {}
    switches: list[int] = []
    for act in actions:
        if isinstance(act, ForceMisspeculate):
            force[act.slot] = act
        elif isinstance(act, AcquireHandle):
            acquired[act.slot] = act
            force[act.slot] = ForceMisspeculate(act.slot, None)
        elif isinstance(act, ReleaseHandle):
            if act.slot not in acquired:
                raise ValueError(f"release of slot {act.slot} without acquire")
            force[act.slot] = ForceMisspeculate(act.slot, act.after_replays)
        elif isinstance(act, ContextSwitch):
            switches.append(act.at_position)
        else:
            raise TypeError(f"unknown action {act!r}")
    return force, sorted(switches)


@dataclass
class Scenario:
    name: str
    pattern: ScenarioPattern
    trace: Trace
    actions: list[Action]
    transmit_pcs: tuple[int, ...]
    handle_slots: tuple[int, ...]
    params: dict = field(default_factory=dict)


@dataclass
class AttackReport:
    scenario: str
    pattern: ScenarioPattern
    policy: str
    params: dict
    cycles: int
    squashes: int
    livelock: bool
    spec_executions_of_s: dict[int, int]
    total_issues_of_s: dict[int, int]
    attack_region_executions: int
    hot_spec_issues: int  # speculative S issues while a squash-time handle was still unsafe
    metrics: Metrics

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "pattern": str(self.pattern),
            "policy": self.policy,
            **{k: v for k, v in sorted(self.params.items())},
            "cycles": self.cycles,
            "squashes": self.squashes,
            "livelock": self.livelock,
            "attack_region_executions": self.attack_region_executions,
            "spec_executions_of_s": sum(self.spec_executions_of_s.values()),
            "total_issues_of_s": sum(self.total_issues_of_s.values()),
            "hot_spec_issues": self.hot_spec_issues,
        }


# -- scenario builders ----------------------------------------------------------

_HANDLE_PC_BASE = 0x4000
_TRANSMIT_PC_BASE = 0x5000
_PAD_PC_BASE = 0x70000

_SINGLE_RESOLVE = 6


def _pad(instructions: list[Instruction], n: int) -> None:
    for _ in range(n):
        instructions.append(
            Instruction(
                seq=len(instructions),
                pc=_PAD_PC_BASE + 4 * len(instructions),
                kind=InstructionKind.PLAIN,
            )
        )


def build_single(replays: int, gap: int = 2, pad: int = 8) -> Scenario:
    """One page-faulting handle replayed `replays` times before release."""
    if replays < 0:
        raise ValueError(f"replays must be >= 0, got {replays}")
    if gap < 0:
        raise ValueError(f"gap must be >= 0, got {gap}")
    ins: list[Instruction] = []
    ins.append(
        Instruction(0, _HANDLE_PC_BASE, InstructionKind.LOAD, ShadowKind.E,
                    exec_latency=1, resolve_latency=_SINGLE_RESOLVE)
    )
    _pad(ins, gap)
    s_pc = _TRANSMIT_PC_BASE
    ins.append(Instruction(len(ins), s_pc, InstructionKind.TRANSMIT))
    _pad(ins, pad)
    trace = Trace(name=f"single-r{replays}", seed=0, instructions=ins)
    actions: list[Action] = [AcquireHandle(0), ReleaseHandle(0, after_replays=replays)]
    return Scenario(
        name=trace.name,
        pattern=ScenarioPattern.SINGLE,
        trace=trace,
        actions=actions,
        transmit_pcs=(s_pc,),
        handle_slots=(0,),
        params={"handles": 1, "replays": replays, "gap": gap},
    )


def build_serial(handles: int, replays: int, gap: int = 2, window_pad: int = 64) -> Scenario:
    """h acquire/use/release episodes in sequence, one handle each.

    Episodes are separated by `window_pad` plain instructions so that one
    episode's squashes never reach the next; keep `window_pad` at least as
    large as the reorder buffer.  With one handle the scenario reduces to
    the single pattern.
    """
    if handles < 1:
        raise ValueError(f"handles must be >= 1, got {handles}")
    if replays < 1:
        raise ValueError(f"replays must be >= 1, got {replays}")
    if gap < 0:
        raise ValueError(f"gap must be >= 0, got {gap}")
    ins: list[Instruction] = []
    actions: list[Action] = []
    transmit_pcs = []
    handle_slots = []
    for i in range(handles):
        slot = len(ins)
        handle_slots.append(slot)
        ins.append(
            Instruction(slot, _HANDLE_PC_BASE + 0x100 * i, InstructionKind.LOAD,
                        ShadowKind.E, exec_latency=1, resolve_latency=_SINGLE_RESOLVE)
        )
        _pad(ins, gap)
        s_pc = _TRANSMIT_PC_BASE + 0x100 * i
        transmit_pcs.append(s_pc)
        ins.append(Instruction(len(ins), s_pc, InstructionKind.TRANSMIT))
        _pad(ins, window_pad)
        actions.append(AcquireHandle(slot))
        actions.append(ReleaseHandle(slot, after_replays=replays))
    trace = Trace(name=f"serial-h{handles}-r{replays}", seed=0, instructions=ins)
    return Scenario(
        name=trace.name,
        pattern=ScenarioPattern.SERIAL,
        trace=trace,
        actions=actions,
        transmit_pcs=tuple(transmit_pcs),
        handle_slots=tuple(handle_slots),
        params={"handles": handles, "replays": replays, "gap": gap},
    )


def nested_latencies(handles: int, replays: int, innermost: int = 3, slack: int = 8) -> list[int]:
    """Resolve latencies (outermost first) wide enough for the full replay
    tree: each handle's next resolution lands after the complete inner
    subtree, so attack totals multiply exactly.

    The budget assumes the machine re-fills the window within a few
    cycles of a squash (the default width and a reorder buffer that fits
    all handles plus the transmit instruction).  On narrower machines the
    outer handles interrupt the inner sessions early and the attacker
    simply achieves fewer replays."""
    lats = [innermost]
    for _ in range(handles - 1):
        lats.append((replays + 1) * lats[-1] + slack)
    return list(reversed(lats))


def build_nested(handles: int, replays: int, gap: int = 2, pad: int = 4,
                 resolve_latencies: list[int] | None = None) -> Scenario:
    """h nested control-flow handles; outer handles resolve slower than
    inner ones so each outer squash re-arms the whole inner subtree."""
    if handles < 1:
        raise ValueError(f"handles must be >= 1, got {handles}")
    if replays < 1:
        raise ValueError(f"replays must be >= 1, got {replays}")
    if gap < 0:
        raise ValueError(f"gap must be >= 0, got {gap}")
    if resolve_latencies is None:
        resolve_latencies = nested_latencies(handles, replays)
    if len(resolve_latencies) != handles:
        raise ValueError(
            f"expected {handles} resolve latencies, got {len(resolve_latencies)}"
        )
    if any(a <= b for a, b in zip(resolve_latencies, resolve_latencies[1:])):
        raise ValueError(
            "outer handles must resolve slower than inner ones: "
            f"latencies {resolve_latencies} are not strictly decreasing"
        )
    if resolve_latencies[-1] < 1:
        raise ValueError("innermost resolve latency must be >= 1")

    ins: list[Instruction] = []
    actions: list[Action] = []
    handle_slots = []
    for i in range(handles):
        slot = len(ins)
        handle_slots.append(slot)
        ins.append(
            Instruction(slot, _HANDLE_PC_BASE + 0x100 * i, InstructionKind.BRANCH,
                        ShadowKind.C, exec_latency=1,
                        resolve_latency=resolve_latencies[i])
        )
        outer = handle_slots[i - 1] if i > 0 else None
        actions.append(ForceMisspeculate(slot, replays, outer_slot=outer))
    _pad(ins, gap)
    s_pc = _TRANSMIT_PC_BASE
    ins.append(Instruction(len(ins), s_pc, InstructionKind.TRANSMIT))
    _pad(ins, pad)
    trace = Trace(name=f"nested-h{handles}-r{replays}", seed=0, instructions=ins)
    return Scenario(
        name=trace.name,
        pattern=ScenarioPattern.NESTED,
        trace=trace,
        actions=actions,
        transmit_pcs=(s_pc,),
        handle_slots=tuple(handle_slots),
        params={"handles": handles, "replays": replays, "gap": gap,
                "latencies": ",".join(map(str, resolve_latencies))},
    )


def build_unbounded(gap: int = 2, pad: int = 8) -> Scenario:
    """A handle that never resolves correctly: sustained replay (livelock)."""
    scenario = build_single(0, gap=gap, pad=pad)
    return Scenario(
        name="unbounded-replay",
        pattern=ScenarioPattern.SINGLE,
        trace=scenario.trace,
        actions=[AcquireHandle(0)],
        transmit_pcs=scenario.transmit_pcs,
        handle_slots=scenario.handle_slots,
        params={"handles": 1, "replays": None, "gap": gap},
    )


# -- attacker-driven resolution --------------------------------------------------


class ScenarioResolver:
    """Resolution outcomes under attacker control.

    An armed instance misspeculates on its first `times` resolutions and
    resolves correctly afterwards.  Releasing a handle releases every
    handle nested inside it, so once the outermost handle of a chain has
    resolved correctly for good, in-flight inner instances stop
    misspeculating instead of opening a fresh replay round.
    """

    def __init__(self, force: dict[int, ForceMisspeculate]) -> None:
        self.force = force
        self.finished: set[int] = set()
        self.offset = 0  # trace positions are segment-local after a context switch
        self._inner: dict[int, list[int]] = {}
        for fm in force.values():
            if fm.outer_slot is not None:
                self._inner.setdefault(fm.outer_slot, []).append(fm.slot)

    def __call__(self, entry: RobEntry) -> bool:
        pos = entry.instr.seq + self.offset
        fm = self.force.get(pos)
        if fm is None:
            return False  # victim instructions resolve correctly
        armed = pos not in self.finished and (
            fm.outer_slot is None or fm.outer_slot not in self.finished
        )
        if armed and (fm.times is None or entry.res_count <= fm.times):
            return True
        if fm.outer_slot is None or fm.outer_slot in self.finished:
            # released for good; a squash by the outer handle would have
            # re-armed this slot, so the release cascades inward
            self._finish(pos)
        return False

    def _finish(self, pos: int) -> None:
        stack = [pos]
        while stack:
            p = stack.pop()
            if p in self.finished:
                continue
            self.finished.add(p)
            stack.extend(self._inner.get(p, ()))


class AttackObserver:
    """Counts issue events of the transmit PCs and checks the security bound.

    After a squash discards an issued transmit instruction, its PC is
    "hot" until every handle that was queued at that squash has become
    safe; a speculative issue of a hot PC is a bound violation.
    """

    def __init__(self, transmit_pcs: tuple[int, ...]) -> None:
        self.transmit_pcs = frozenset(transmit_pcs)
        self.total: dict[int, int] = {pc: 0 for pc in transmit_pcs}
        self.speculative: dict[int, int] = {pc: 0 for pc in transmit_pcs}
        self.hot_spec_issues = 0
        self._hot: dict[int, list[set[int]]] = {}
        self._by_handle: dict[int, list[tuple[int, set[int]]]] = {}

    def on_issue(self, entry: RobEntry, speculative: bool, cycle: int) -> None:
        pc = entry.instr.pc
        if pc not in self.transmit_pcs:
            return
        self.total[pc] += 1
        if speculative:
            self.speculative[pc] += 1
            if self._hot.get(pc):
                self.hot_spec_issues += 1

    def on_squash(self, record: SquashRecord, hq_seqs: list[int]) -> None:
        if not hq_seqs:
            return
        for pc in record.squashed_issued_pcs & self.transmit_pcs:
            live = set(hq_seqs)
            self._hot.setdefault(pc, []).append(live)
            for seq in hq_seqs:
                self._by_handle.setdefault(seq, []).append((pc, live))

    def on_handle_safe(self, seq: int) -> None:
        for pc, live in self._by_handle.pop(seq, ()):
            live.discard(seq)
            if not live:
                sets = self._hot.get(pc)
                if sets is not None:
                    self._hot[pc] = [s for s in sets if s]


def run_scenario(scenario: Scenario, config: MachineConfig,
                 context_id: int = 0) -> AttackReport:
    """Drive the pipeline with the attacker script; exact counts, deterministic."""
    config.validate()
    force, switches = compile_actions(scenario.actions)
    observer = AttackObserver(scenario.transmit_pcs)
    resolver = ScenarioResolver(force)
    livelock = False
    try:
        if switches:
            metrics = _run_with_switches(scenario, config, resolver, observer,
                                         switches, context_id)
        else:
            metrics = Pipeline(scenario.trace, config, resolver=resolver,
                               observer=observer).run()
    except LivelockError as err:
        metrics = err.metrics
        livelock = True

    return AttackReport(
        scenario=scenario.name,
        pattern=scenario.pattern,
        policy=str(config.policy),
        params=dict(scenario.params),
        cycles=metrics.cycles,
        squashes=metrics.squashes,
        livelock=livelock,
        spec_executions_of_s=dict(observer.speculative),
        total_issues_of_s=dict(observer.total),
        attack_region_executions=sum(observer.total.values()),
        hot_spec_issues=observer.hot_spec_issues,
        metrics=metrics,
    )


def _run_with_switches(scenario, config, resolver, observer, switches, context_id):
    """Split the victim trace at context-switch points; drain, save, and
    restore the policy state around each boundary."""
    bounds = [b for b in switches if 0 < b < len(scenario.trace.instructions)]
    starts = [0] + bounds
    ends = bounds + [len(scenario.trace.instructions)]
    state = PolicyState(config, context_id=context_id)
    total: Metrics | None = None
    for lo, hi in zip(starts, ends):
        seg = [replace(ins, seq=i) for i, ins in enumerate(scenario.trace.instructions[lo:hi])]
        trace = Trace(name=f"{scenario.trace.name}[{lo}:{hi}]", seed=scenario.trace.seed,
                      instructions=seg)
        resolver.offset = lo  # budgets stay keyed by whole-trace positions
        pipe = Pipeline(trace, config, policy=state, resolver=resolver, observer=observer)
        m = pipe.run()
        total = m if total is None else total.merge(m)
        blob = save_context(state)
        state = restore_context(blob, config, context_id)
    total.trace_id = scenario.trace.trace_id
    return total
