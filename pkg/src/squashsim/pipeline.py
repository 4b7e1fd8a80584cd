"""Simplified out-of-order engine with squash/replay semantics.

Per-cycle phase order: execution completions, scheduled resolutions
(which may squash), in-order commit (exception-class handles resolve only
once they reach the reorder-buffer head), handle-queue pops, issue under
the active policy, then dispatch.  The instruction at the head of the
reorder buffer is never delayed, which guarantees forward progress under
every policy.

On a squash, every younger entry is drained, the PCs of the ones that had
actually issued are recorded with the policy, and the front end restarts
right after the misspeculating instruction, which itself stays put and
re-executes.  Hash indices for the Bloom filters are computed once per PC
at dispatch and kept in the entry.
"""

from __future__ import annotations

import bisect
import heapq
from dataclasses import dataclass

from .config import MachineConfig
from .filters import compute_hashes, indices_to_mask
from .metrics import Metrics
from .policy import PolicyState
from .shadows import ShadowKind
from .trace import Instruction, Trace

DISPATCHED = 0
ISSUED = 1
EXECUTED = 2

_STATE_NAMES = {DISPATCHED: "Dispatched", ISSUED: "Issued", EXECUTED: "Executed"}


class LivelockError(RuntimeError):
    """No commit within the configured cycle budget (sustained replay)."""

    def __init__(self, message: str, metrics: Metrics) -> None:
        super().__init__(message)
        self.metrics = metrics


@dataclass(frozen=True)
class SquashRecord:
    """What one squash event discarded."""

    cause_seq: int
    squashed_issued_pcs: frozenset[int]
    youngest_handle: int | None


class RobEntry:
    __slots__ = (
        "seq", "instr", "state", "issue_cycle", "exec_done_cycle",
        "resolved", "resolve_ready", "res_count", "gen", "hashes", "mask",
        "fp_counted",
    )

    def __init__(self, seq: int, instr: Instruction, hashes: tuple[int, ...], mask: int) -> None:
        self.seq = seq
        self.instr = instr
        self.state = DISPATCHED
        self.issue_cycle: int | None = None
        self.exec_done_cycle: int | None = None
        self.resolved = False
        self.resolve_ready: int | None = None
        self.res_count = 0
        self.gen = 0
        self.hashes = hashes
        self.mask = mask
        self.fp_counted = False  # one FP per delay episode in "entry" counting

    def __repr__(self) -> str:  # diagnostics only
        return (
            f"RobEntry(seq={self.seq}, pc=0x{self.instr.pc:x}, "
            f"state={_STATE_NAMES[self.state]}, resolved={self.resolved})"
        )


class TraceResolver:
    """Default speculation outcomes: a pre-marked instruction misspeculates
    once at its trace position; re-dispatched instances resolve correctly."""

    def __init__(self) -> None:
        self._consumed: set[int] = set()

    def __call__(self, entry: RobEntry) -> bool:
        pos = entry.instr.seq
        if entry.instr.misspeculate and pos not in self._consumed:
            self._consumed.add(pos)
            return True
        return False


class Pipeline:
    """One execution context of the machine."""

    def __init__(
        self,
        trace: Trace,
        config: MachineConfig,
        policy: PolicyState | None = None,
        resolver=None,
        observer=None,
    ) -> None:
        config.validate()
        self.config = config
        self.records = trace.instructions
        self.policy = policy if policy is not None else PolicyState(config)
        self.hq = self.policy.handle_queue
        self.resolver = resolver if resolver is not None else TraceResolver()
        self.observer = observer

        self.metrics = Metrics(trace_id=trace.trace_id, policy=str(config.policy))
        self.cycle = 0
        self.cursor = 0
        self.next_seq = self.policy.next_seq
        self.rob: list[RobEntry] = []
        self.alive: dict[int, RobEntry] = {}
        self.pending: list[int] = []  # dispatched, not yet issued; sorted by seq
        self._exec_events: list[tuple[int, int, int]] = []     # (cycle, seq, gen)
        self._resolve_events: list[tuple[int, int, int]] = []  # (cycle, seq, gen)
        self._pc_cache: dict[int, tuple[tuple[int, ...], int]] = {}
        self._fp_entry_mode = config.fp_counting == "entry"
        self._last_commit_cycle = 0
        self._dispatch_resume = 0
        # policy counters are cumulative across context segments
        self._fp_base = self.policy.fp_count
        self._po_base = self.policy.perfect_only_count
        self._rot_base = self.policy.rotations
        self._clr_base = self.policy.filter_clears

    # -- lifecycle ------------------------------------------------------------

    def run(self) -> Metrics:
        budget = self.config.effective_budget
        while self.cursor < len(self.records) or self.rob:
            self.cycle += 1
            self.tick()
            if self.cycle - self._last_commit_cycle > budget:
                self._finalize()
                head = f" (head={self.rob[0]!r})" if self.rob else ""
                raise LivelockError(
                    f"no commit for {budget} cycles at cycle {self.cycle}{head}",
                    self.metrics,
                )
        self._finalize()
        self.policy.next_seq = self.next_seq
        return self.metrics

    def _finalize(self) -> None:
        self.metrics.cycles = self.cycle
        self.metrics.fp_count = self.policy.fp_count - self._fp_base
        self.metrics.perfect_only_count = self.policy.perfect_only_count - self._po_base
        self.metrics.rotations = self.policy.rotations - self._rot_base
        self.metrics.filter_clears = self.policy.filter_clears - self._clr_base

    def tick(self) -> None:
        self._complete_executions()
        self._fire_resolutions()
        self.commit()
        self._pop_safe_handles()
        self.try_issue()
        self.dispatch()

    # -- phases ----------------------------------------------------------------

    def _complete_executions(self) -> None:
        events = self._exec_events
        while events and events[0][0] <= self.cycle:
            _, seq, gen = heapq.heappop(events)
            e = self.alive.get(seq)
            if e is not None and e.gen == gen and e.state == ISSUED:
                e.state = EXECUTED
                e.exec_done_cycle = self.cycle

    def _fire_resolutions(self) -> None:
        events = self._resolve_events
        while events and events[0][0] <= self.cycle:
            _, seq, gen = heapq.heappop(events)
            e = self.alive.get(seq)
            if e is None or e.gen != gen or e.resolved or e.state == DISPATCHED:
                continue
            self._resolve(e)

    def _resolve(self, e: RobEntry) -> None:
        e.res_count += 1
        if self.resolver(e):
            self.metrics.squashes += 1
            self.squash_from(e.seq)
        else:
            e.resolved = True
            self.hq.mark_resolved(e.seq)

    def commit(self) -> int:
        """Retire up to `width` executed entries from the head, in order."""
        retired = 0
        while self.rob and retired < self.config.width:
            head = self.rob[0]
            if head.state != EXECUTED:
                break
            shadow = head.instr.shadow_class
            if shadow is None or head.resolved:
                self.rob.pop(0)
                del self.alive[head.seq]
                self.metrics.committed += 1
                self._last_commit_cycle = self.cycle
                retired += 1
                continue
            if shadow is ShadowKind.E:
                # fault handling happens only at the head of the ROB
                if self.cycle >= head.resolve_ready:
                    self._resolve(head)
                    if not head.resolved:
                        break  # squashed and re-executing
                    continue
            break
        return retired

    def _pop_safe_handles(self) -> None:
        for seq in self.hq.pop_safe():
            self.policy.on_handle_safe(seq)
            if self.observer is not None:
                self.observer.on_handle_safe(seq)

    def try_issue(self) -> list[int]:
        """Consult up to `width` of the oldest dispatched entries against the
        policy; returns the seqs issued this cycle."""
        if not self.pending:
            return []
        width = self.config.width
        policy = self.policy
        head_seq = self.rob[0].seq if self.rob else None
        fp_entry_mode = self._fp_entry_mode
        consulted = 0
        removed: list[int] = []
        for i, seq in enumerate(self.pending):
            if consulted >= width:
                break
            consulted += 1
            e = self.alive[seq]
            if seq == head_seq:
                reason = None  # the ROB head is never delayed
            elif fp_entry_mode:
                before = policy.fp_count
                reason = policy.issue_decision(seq, e.instr.pc, e.mask,
                                               count_fp=not e.fp_counted)
                if policy.fp_count != before:
                    e.fp_counted = True
            else:
                reason = policy.issue_decision(seq, e.instr.pc, e.mask)
            if reason is None:
                self._issue(e)
                removed.append(i)
            else:
                self.metrics.delayed_issues += 1
        issued = [self.pending[i] for i in removed]
        for i in reversed(removed):
            del self.pending[i]
        return issued

    def _issue(self, e: RobEntry) -> None:
        e.state = ISSUED
        e.issue_cycle = self.cycle
        heapq.heappush(self._exec_events, (self.cycle + e.instr.exec_latency, e.seq, e.gen))
        shadow = e.instr.shadow_class
        if shadow is not None:
            if shadow is ShadowKind.E:
                e.resolve_ready = self.cycle + e.instr.resolve_latency
            else:
                heapq.heappush(
                    self._resolve_events,
                    (self.cycle + e.instr.resolve_latency, e.seq, e.gen),
                )
        m = self.metrics
        m.dynamic_executed += 1
        pc = e.instr.pc
        m.per_pc_issues[pc] = m.per_pc_issues.get(pc, 0) + 1
        speculative = self.hq.shadows(e.seq)
        if speculative:
            m.per_pc_spec_issues[pc] = m.per_pc_spec_issues.get(pc, 0) + 1
        if self.observer is not None:
            self.observer.on_issue(e, speculative, self.cycle)

    def dispatch(self) -> int:
        """Bring in up to `width` instructions; stalls when the ROB or the
        handle queue is full.  Returns the count dispatched."""
        if self.cycle < self._dispatch_resume:
            return 0
        n = 0
        width = self.config.width
        rob_size = self.config.rob_size
        while self.cursor < len(self.records) and n < width and len(self.rob) < rob_size:
            rec = self.records[self.cursor]
            if rec.shadow_class is not None and len(self.hq) >= rob_size:
                break  # handle queue full; stall until zombies drain
            seq = self.next_seq
            self.next_seq += 1
            hashes, mask = self._hash_pc(rec.pc)
            e = RobEntry(seq, rec, hashes, mask)
            self.rob.append(e)
            self.alive[seq] = e
            self.pending.append(seq)  # seq is monotonic, list stays sorted
            if rec.shadow_class is not None:
                self.hq.push_handle(seq, rec.shadow_class)
            self.policy.on_dispatch()
            self.cursor += 1
            n += 1
        return n

    # -- squash ----------------------------------------------------------------

    def squash_from(self, cause_seq: int) -> SquashRecord:
        """Drain everything younger than cause_seq; the cause re-executes."""
        cause = self.alive.get(cause_seq)
        if cause is None:
            raise KeyError(f"squash_from: seq {cause_seq} not in the ROB")

        victims: list[RobEntry] = []
        while self.rob and self.rob[-1].seq > cause_seq:
            victims.append(self.rob.pop())
        issued = [v for v in victims if v.state != DISPATCHED]
        for v in victims:
            del self.alive[v.seq]
        cut = bisect.bisect_right(self.pending, cause_seq)
        del self.pending[cut:]

        self.hq.mark_squashed_after(cause_seq)
        youngest = self.hq.youngest_handle()
        pcs = frozenset(v.instr.pc for v in issued)
        masks = [v.mask for v in issued]
        record = SquashRecord(cause_seq, pcs, youngest)
        self.policy.on_squash(pcs, masks, youngest)

        self.metrics.squashed_executions += len(issued)
        if cause.state != DISPATCHED:
            # the misspeculated execution of the cause itself is discarded
            self.metrics.squashed_executions += 1
        cause.state = DISPATCHED
        cause.gen += 1
        cause.issue_cycle = None
        cause.exec_done_cycle = None
        cause.resolve_ready = None
        cause.fp_counted = False
        bisect.insort(self.pending, cause_seq)

        self.cursor = cause.instr.seq + 1
        self._dispatch_resume = self.cycle + self.config.squash_recovery
        if self.observer is not None:
            self.observer.on_squash(record, [h.seq for h in self.hq.entries()])
        return record

    # -- helpers ----------------------------------------------------------------

    def _hash_pc(self, pc: int) -> tuple[tuple[int, ...], int]:
        cached = self._pc_cache.get(pc)
        if cached is None:
            hashes = compute_hashes(pc, self.policy.hash_seeds, self.config.bits)
            cached = (hashes, indices_to_mask(hashes))
            self._pc_cache[pc] = cached
        return cached


def run(trace: Trace, config: MachineConfig, policy: PolicyState | None = None,
        resolver=None, observer=None) -> Metrics:
    """Simulate a trace to completion and return its metrics."""
    return Pipeline(trace, config, policy=policy, resolver=resolver, observer=observer).run()
