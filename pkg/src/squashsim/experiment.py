"""Mid-level orchestration: policy comparisons, context interleaving, sweeps."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from itertools import product

from .config import MachineConfig, PolicyKind
from .metrics import Metrics
from .pipeline import Pipeline
from .policy import PolicyState, restore_context, save_context
from .trace import Trace


def run_workload(trace: Trace, config: MachineConfig) -> Metrics:
    return Pipeline(trace, config.validate()).run()


def run_policies(trace: Trace, config: MachineConfig,
                 policies: list[PolicyKind] | None = None) -> dict[PolicyKind, Metrics]:
    """Run one trace under several policies with otherwise identical config."""
    out = {}
    for kind in policies or list(PolicyKind):
        out[kind] = run_workload(trace, config.with_policy(kind))
    return out


def _segments(trace: Trace, boundaries: list[int]) -> list[Trace]:
    cuts = sorted({b for b in boundaries if 0 < b < len(trace.instructions)})
    starts = [0] + cuts
    ends = cuts + [len(trace.instructions)]
    segs = []
    for lo, hi in zip(starts, ends):
        ins = [replace(i, seq=n) for n, i in enumerate(trace.instructions[lo:hi])]
        segs.append(Trace(name=f"{trace.name}[{lo}:{hi}]", seed=trace.seed, instructions=ins))
    return segs


def run_segmented(trace: Trace, config: MachineConfig, boundaries: list[int],
                  context_id: int = 0) -> Metrics:
    """Run a trace in segments, draining and save/restoring the policy state
    at every boundary, and merge the per-segment metrics."""
    config.validate()
    state = PolicyState(config, context_id=context_id)
    total: Metrics | None = None
    for seg in _segments(trace, boundaries):
        m = Pipeline(seg, config, policy=state).run()
        total = m if total is None else total.merge(m)
        state = restore_context(save_context(state), config, context_id)
    if total is None:
        total = Metrics(trace_id=trace.trace_id, policy=str(config.policy))
    total.trace_id = trace.trace_id
    return total


def run_interleaved(workloads: dict[int, tuple[Trace, list[int]]],
                    config: MachineConfig) -> dict[int, Metrics]:
    """Round-robin contexts at their segment boundaries.

    Each context's defense state is saved to its blob when it yields and
    restored when it is scheduled again; per-context metrics accumulate
    across its own segments only.
    """
    config.validate()
    schedule: list[tuple[int, Trace]] = []
    per_ctx_segments = {
        cid: _segments(trace, bounds) for cid, (trace, bounds) in workloads.items()
    }
    max_len = max(len(s) for s in per_ctx_segments.values())
    order = sorted(per_ctx_segments)
    for i in range(max_len):
        for cid in order:
            segs = per_ctx_segments[cid]
            if i < len(segs):
                schedule.append((cid, segs[i]))

    blobs = {cid: save_context(PolicyState(config, context_id=cid)) for cid in order}
    totals: dict[int, Metrics | None] = {cid: None for cid in order}
    for cid, seg in schedule:
        state = restore_context(blobs[cid], config, cid)
        m = Pipeline(seg, config, policy=state).run()
        totals[cid] = m if totals[cid] is None else totals[cid].merge(m)
        blobs[cid] = save_context(state)
    out = {}
    for cid in order:
        total = totals[cid] or Metrics(policy=str(config.policy))
        total.trace_id = workloads[cid][0].trace_id
        out[cid] = total
    return out


# -- parameter sweeps -----------------------------------------------------------


def sweep_points(base: MachineConfig, bits: list[int], hashes: list[int],
                 filters: list[int], thresholds: list[int | None]) -> list[MachineConfig]:
    """Cartesian product of filter parameters over a base config."""
    points = []
    for m, k, n, t in product(bits, hashes, filters, thresholds):
        points.append(replace(base, bits=m, hashes=k, filters=n, threshold=t))
    return points


def _sweep_one(args: tuple[Trace, MachineConfig]) -> Metrics:
    trace, config = args
    return run_workload(trace, config)


def run_sweep(trace: Trace, points: list[MachineConfig], jobs: int = 1) -> list[dict]:
    """One run per point; rows keep the point order regardless of workers."""
    for p in points:
        p.validate()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, [(trace, p) for p in points]))
    else:
        results = [run_workload(trace, p) for p in points]
    rows = []
    for config, metrics in zip(points, results):
        row = {
            "bits": config.bits,
            "hashes": config.hashes,
            "filters": config.filters,
            "threshold": config.effective_threshold,
            "policy": str(config.policy),
            "seed": config.seed,
        }
        row.update(metrics.as_dict())
        rows.append(row)
    return rows
