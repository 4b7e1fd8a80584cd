"""Per-run counters and derived statistics."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Metrics:
    """Exact counters for one run (or one merged sequence of segments).

    ``dynamic_executed`` counts issue events, including work that is later
    discarded; ``squashed_executions`` counts the discarded part, so
    ``dynamic_executed == committed + squashed_executions`` always holds.
    """

    trace_id: str = ""
    policy: str = ""
    cycles: int = 0
    dynamic_executed: int = 0
    committed: int = 0
    squashes: int = 0
    squashed_executions: int = 0
    delayed_issues: int = 0
    fp_count: int = 0
    perfect_only_count: int = 0  # exact-oracle hits the Bloom filters missed (must stay 0)
    filter_clears: int = 0
    rotations: int = 0
    per_pc_spec_issues: dict[int, int] = field(default_factory=dict)
    per_pc_issues: dict[int, int] = field(default_factory=dict)

    def merge(self, other: "Metrics") -> "Metrics":
        """Accumulate a later segment of the same context into this one."""
        self.cycles += other.cycles
        self.dynamic_executed += other.dynamic_executed
        self.committed += other.committed
        self.squashes += other.squashes
        self.squashed_executions += other.squashed_executions
        self.delayed_issues += other.delayed_issues
        self.fp_count += other.fp_count
        self.perfect_only_count += other.perfect_only_count
        self.filter_clears += other.filter_clears
        self.rotations += other.rotations
        for pc, n in other.per_pc_spec_issues.items():
            self.per_pc_spec_issues[pc] = self.per_pc_spec_issues.get(pc, 0) + n
        for pc, n in other.per_pc_issues.items():
            self.per_pc_issues[pc] = self.per_pc_issues.get(pc, 0) + n
        return self

    def as_dict(self) -> dict:
        return {
            "trace_id": self.trace_id,
            "policy": self.policy,
            "cycles": self.cycles,
            "dynamic_executed": self.dynamic_executed,
            "committed": self.committed,
            "squashes": self.squashes,
            "squashed_executions": self.squashed_executions,
            "delayed_issues": self.delayed_issues,
            "fp_count": self.fp_count,
            "filter_clears": self.filter_clears,
            "rotations": self.rotations,
            "fp_rate": fp_rate(self),
        }


def fp_rate(metrics: Metrics) -> float | None:
    """Bloom false positives over executed (including squashed) instructions.

    Undefined (None) when nothing executed.
    """
    if metrics.dynamic_executed == 0:
        return None
    return metrics.fp_count / metrics.dynamic_executed


def perf_proxy(metrics_a: Metrics, metrics_b: Metrics) -> float:
    """Relative slowdown cycles_b / cycles_a for runs of the same trace."""
    if metrics_a.trace_id != metrics_b.trace_id:
        raise ValueError(
            f"perf_proxy across different traces: {metrics_a.trace_id!r} vs {metrics_b.trace_id!r}"
        )
    if metrics_a.cycles == 0:
        raise ValueError("reference run has zero cycles")
    return metrics_b.cycles / metrics_a.cycles
