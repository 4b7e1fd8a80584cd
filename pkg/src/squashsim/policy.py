"""Issue policies and per-context save/restore of defense state.

Four policies decide whether a dispatched instruction may issue:

* ``baseline``    -- always allow (insecure reference machine).
* ``delay-all``   -- delay while any potential handle older than the
  instruction is still queued; the non-speculative lower bound.
* ``dos-perfect`` -- delay while the PC is in a live exact squash record.
* ``dos-bloom``   -- delay while the PC hits the rolling Bloom filters.
  With the oracle enabled, the exact filter runs in lockstep and a Bloom
  hit without an exact hit counts as a false positive.

Context blob layout (little-endian, versioned)::

    magic   4s   b"SQSM"
    version u16  currently 1
    kind    u8   policy variant (enum order)
    ctx     u64  context id
    dyn     u64  dynamic instructions dispatched so far
    next    u64  next pipeline sequence number
    oracle  u8
    HQ section:      count u32, then per entry seq u64, kind u8, flags u8
    Bloom section (dos-bloom only): m u32, k u32, count u32, active u32,
        threshold u32, window u32, k seeds u64; per filter: bits (m/8
        bytes, little-endian bit packing), assoc flag u8 + u64,
        deadline flag u8 + u64
    Perfect section (dos-perfect, or dos-bloom with oracle): window u32,
        record count u32; per record: expire flag u8 + u64, deadline flag
        u8 + u64, pc count u32, pcs u64 each
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .config import MachineConfig, PolicyKind
from .filters import PerfectFilter, RollingFilters, derive_hash_seeds
from .shadows import HandleEntry, HandleQueue, ShadowKind

BLOB_MAGIC = b"SQSM"
BLOB_VERSION = 1

_KIND_CODE = {k: i for i, k in enumerate(PolicyKind)}
_CODE_KIND = {i: k for i, k in enumerate(PolicyKind)}
_SHADOW_CODE = {k: i for i, k in enumerate(ShadowKind)}
_CODE_SHADOW = {i: k for i, k in enumerate(ShadowKind)}

DELAY_UNSAFE_HANDLE = "unsafe-older-handle"
DELAY_BLOOM_HIT = "bloom-hit"
DELAY_PERFECT_HIT = "perfect-hit"


class ContextBlobError(ValueError):
    """Raised when a context blob is corrupt or bound to another context."""


@dataclass
class ContextBlob:
    context_id: int
    data: bytes


class PolicyState:
    """Per-context defense state: handle queue plus policy-specific filters."""

    def __init__(self, config: MachineConfig, context_id: int = 0) -> None:
        config.validate()
        self.kind = config.policy
        self.config = config
        self.context_id = context_id
        self.handle_queue = HandleQueue()
        self.dyn_count = 0       # dynamic instructions dispatched in this context
        self.next_seq = 0        # pipeline seq continuity across context switches
        self.oracle = config.oracle and self.kind is PolicyKind.DOS_BLOOM
        self.hash_seeds = derive_hash_seeds(config.seed, config.hashes)

        self.filters: RollingFilters | None = None
        self.perfect: PerfectFilter | None = None
        if self.kind is PolicyKind.DOS_BLOOM:
            self.filters = RollingFilters(
                m=config.bits,
                k=config.hashes,
                count=config.filters,
                threshold=config.effective_threshold,
                window_len=config.effective_window,
            )
        if self.kind is PolicyKind.DOS_PERFECT or self.oracle:
            self.perfect = PerfectFilter(window_len=config.effective_window)

        # lockstep accounting (dos-bloom with oracle)
        self.fp_count = 0
        self.perfect_only_count = 0

    # -- issue-time decision ------------------------------------------------

    def issue_decision(self, seq: int, pc: int, mask: int, count_fp: bool = True) -> str | None:
        """Reason to delay, or None to allow.  The ROB head never gets here.

        ``count_fp`` gates false-positive accounting so the pipeline can
        count one FP per delay episode instead of one per evaluation.
        """
        kind = self.kind
        if kind is PolicyKind.BASELINE:
            return None
        if kind is PolicyKind.DELAY_ALL:
            oldest = self.handle_queue.oldest_seq()
            if oldest is not None and oldest < seq:
                return DELAY_UNSAFE_HANDLE
            return None
        if kind is PolicyKind.DOS_PERFECT:
            return DELAY_PERFECT_HIT if self.perfect.query(pc) else None
        # dos-bloom
        hit = self.filters.query(mask)
        if self.oracle:
            exact = self.perfect.query(pc)
            if hit and not exact:
                if count_fp:
                    self.fp_count += 1
            elif exact and not hit:
                self.perfect_only_count += 1
        return DELAY_BLOOM_HIT if hit else None

    # -- pipeline hooks -----------------------------------------------------

    def on_squash(self, pcs: frozenset[int], masks: list[int], youngest_handle: int | None) -> None:
        """Record the issued-and-squashed PCs of one squash event."""
        if self.filters is not None:
            self.filters.record_squash(masks, youngest_handle, self.dyn_count)
        if self.perfect is not None:
            self.perfect.record(pcs, youngest_handle, self.dyn_count)

    def on_handle_safe(self, seq: int) -> None:
        if self.filters is not None:
            self.filters.on_handle_safe(seq, self.dyn_count)
        if self.perfect is not None:
            self.perfect.on_handle_safe(seq, self.dyn_count)

    def on_dispatch(self) -> None:
        self.dyn_count += 1
        if self.filters is not None:
            self.filters.on_dispatch(self.dyn_count)
        if self.perfect is not None:
            self.perfect.on_dispatch(self.dyn_count)

    @property
    def rotations(self) -> int:
        return self.filters.rotations if self.filters is not None else 0

    @property
    def filter_clears(self) -> int:
        return self.filters.clears if self.filters is not None else 0


# -- context serialization ----------------------------------------------------


def _pack_opt(value: int | None) -> bytes:
    if value is None:
        return struct.pack("<BQ", 0, 0)
    return struct.pack("<BQ", 1, value)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.off = 0

    def take(self, fmt: str):
        try:
            out = struct.unpack_from(fmt, self.data, self.off)
        except struct.error as exc:
            raise ContextBlobError(f"truncated blob: {exc}") from None
        self.off += struct.calcsize(fmt)
        return out

    def take_bytes(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise ContextBlobError("truncated blob: byte section")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def take_opt(self) -> int | None:
        flag, value = self.take("<BQ")
        return value if flag else None


def save_context(state: PolicyState) -> ContextBlob:
    """Serialize a quiescent policy state (no in-flight squash)."""
    parts = [
        struct.pack(
            "<4sHBQQQB",
            BLOB_MAGIC,
            BLOB_VERSION,
            _KIND_CODE[state.kind],
            state.context_id,
            state.dyn_count,
            state.next_seq,
            1 if state.oracle else 0,
        )
    ]
    if state.kind is PolicyKind.BASELINE:
        hq_entries: list[HandleEntry] = []
    else:
        hq_entries = state.handle_queue.entries()
    parts.append(struct.pack("<I", len(hq_entries)))
    for e in hq_entries:
        flags = (1 if e.resolved else 0) | (2 if e.squashed else 0)
        parts.append(struct.pack("<QBB", e.seq, _SHADOW_CODE[e.kind], flags))

    if state.filters is not None:
        rf = state.filters
        parts.append(
            struct.pack(
                "<IIIIII",
                rf.m, rf.k, len(rf.filters), rf.active, rf.threshold, rf.window_len,
            )
        )
        parts.append(struct.pack(f"<{len(state.hash_seeds)}Q", *state.hash_seeds))
        nbytes = max(1, rf.m // 8)
        for i, f in enumerate(rf.filters):
            parts.append(f.bits.to_bytes(nbytes, "little"))
            parts.append(_pack_opt(rf.assoc[i]))
            parts.append(_pack_opt(rf.deadline[i]))

    if state.perfect is not None:
        pf = state.perfect
        records = pf.records()
        parts.append(struct.pack("<II", pf.window_len, len(records)))
        for rec in records:
            parts.append(_pack_opt(rec.expire_seq))
            parts.append(_pack_opt(rec.deadline))
            pcs = sorted(rec.pcs)
            parts.append(struct.pack("<I", len(pcs)))
            parts.append(struct.pack(f"<{len(pcs)}Q", *pcs) if pcs else b"")

    return ContextBlob(context_id=state.context_id, data=b"".join(parts))


def restore_context(blob: ContextBlob, config: MachineConfig,
                    context_id: int | None = None) -> PolicyState:
    """Rebuild a policy state; rejects blobs bound to a different context."""
    r = _Reader(blob.data)
    magic, version, kind_code, ctx, dyn, next_seq, oracle = r.take("<4sHBQQQB")
    if magic != BLOB_MAGIC:
        raise ContextBlobError(f"bad magic {magic!r}")
    if version != BLOB_VERSION:
        raise ContextBlobError(f"unsupported blob version {version}")
    if kind_code not in _CODE_KIND:
        raise ContextBlobError(f"unknown policy code {kind_code}")
    if ctx != blob.context_id:
        raise ContextBlobError(f"blob header context {ctx} != envelope {blob.context_id}")
    expected = blob.context_id if context_id is None else context_id
    if ctx != expected:
        raise ContextBlobError(f"blob belongs to context {ctx}, not {expected}")

    kind = _CODE_KIND[kind_code]
    if kind is not config.policy:
        raise ContextBlobError(f"blob policy {kind} != config policy {config.policy}")
    state = PolicyState(config, context_id=ctx)
    state.dyn_count = dyn
    state.next_seq = next_seq
    if bool(oracle) != state.oracle:
        raise ContextBlobError("oracle flag mismatch between blob and config")

    (n_hq,) = r.take("<I")
    for _ in range(n_hq):
        seq, shadow_code, flags = r.take("<QBB")
        state.handle_queue.push_handle(seq, _CODE_SHADOW[shadow_code])
        if flags & 1:
            state.handle_queue.mark_resolved(seq)
        if flags & 2:
            state.handle_queue.mark_squashed_after(seq - 1)

    if state.filters is not None:
        m, k, count, active, threshold, window = r.take("<IIIIII")
        if (m, k) != (state.filters.m, state.filters.k) or count != len(state.filters.filters):
            raise ContextBlobError("filter geometry mismatch between blob and config")
        seeds = r.take(f"<{k}Q")
        if tuple(seeds) != state.hash_seeds:
            raise ContextBlobError("hash seed mismatch between blob and config")
        rf = state.filters
        rf.active = active
        rf.threshold = threshold
        rf.window_len = window
        nbytes = max(1, m // 8)
        for i in range(count):
            rf.filters[i].bits = int.from_bytes(r.take_bytes(nbytes), "little")
            rf.assoc[i] = r.take_opt()
            rf.deadline[i] = r.take_opt()

    if state.perfect is not None:
        window, n_rec = r.take("<II")
        state.perfect.window_len = window
        for _ in range(n_rec):
            expire_seq = r.take_opt()
            deadline = r.take_opt()
            (n_pc,) = r.take("<I")
            pcs = frozenset(r.take(f"<{n_pc}Q")) if n_pc else frozenset()
            rec_dyn = (deadline - window) if deadline is not None else state.dyn_count
            if expire_seq is not None:
                state.perfect.record(pcs, expire_seq, rec_dyn)
            else:
                state.perfect.record(pcs, None, rec_dyn)

    if r.off != len(blob.data):
        raise ContextBlobError(f"{len(blob.data) - r.off} trailing bytes in blob")
    return state
