"""Binary Bloom filters, the rolling active/inactive set, and the exact oracle.

The rolling filters store the PCs of issued-and-squashed instructions.
Each filter is associated with the youngest potential handle that existed
at its most recent insertion; it may only be bulk-reset once that handle
has left the window of speculation, and even then the reset is deferred by
a dynamic-instruction window so that squashed handles cannot be
re-introduced against cleared filters.  Bits are never cleared
individually.

:class:`PerfectFilter` keeps exact per-squash PC sets with the same
youngest-handle association.  It backs the ideal policy variant and the
lockstep false-positive accounting: a Bloom hit without a perfect hit at
the same decision point is a false positive.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

_MASK64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    """64-bit multiply-xor-shift finalizer (splitmix64 style)."""
    x &= _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_hash_seeds(seed: int, k: int) -> tuple[int, ...]:
    """Derive k distinct odd multiplier constants from a run seed."""
    return tuple(_mix64((seed << 8) ^ (0xA5A5_0001 + i)) | 1 for i in range(k))


def compute_hashes(pc: int, seeds: tuple[int, ...], m: int) -> tuple[int, ...]:
    """k filter indices in [0, m) for a PC.

    Each index is the top ``log2(m)`` bits of ``_mix64(pc * seed_i)`` with a
    distinct odd constant per hash function.  Deterministic in (pc, seeds).
    """
    shift = 64 - (m.bit_length() - 1)
    return tuple(_mix64((pc * s) & _MASK64) >> shift for s in seeds)


def indices_to_mask(indices: tuple[int, ...]) -> int:
    mask = 0
    for i in indices:
        mask |= 1 << i
    return mask


class BloomFilter:
    """Binary Bloom filter over a bit array of size m (power of two)."""

    __slots__ = ("m", "k", "bits")

    def __init__(self, m: int, k: int) -> None:
        self.m = m
        self.k = k
        self.bits = 0

    @property
    def set_count(self) -> int:
        return self.bits.bit_count()

    def insert(self, indices: tuple[int, ...]) -> None:
        self.insert_mask(indices_to_mask(indices))

    def insert_mask(self, mask: int) -> None:
        self.bits |= mask

    def query(self, indices: tuple[int, ...]) -> bool:
        return self.query_mask(indices_to_mask(indices))

    def query_mask(self, mask: int) -> bool:
        return (self.bits & mask) == mask

    def clear(self) -> None:
        self.bits = 0

    def to_bytes(self) -> bytes:
        return self.bits.to_bytes(max(1, self.m // 8), "little")

    def load_bytes(self, data: bytes) -> None:
        self.bits = int.from_bytes(data, "little")


class RollingFilters:
    """Cyclical list of Bloom filters; one active, the rest awaiting clears.

    Insertions go to the active filter; queries check every filter.  When
    the active filter reaches the saturation threshold and the next filter
    in the cycle is already clear, the roles rotate.  A filter becomes
    clear-eligible when its associated handle is safe, and actually resets
    once the deferral window of dynamic instructions has passed without a
    re-association.
    """

    def __init__(self, m: int, k: int, count: int = 2, threshold: int | None = None,
                 window_len: int = 0) -> None:
        if count < 2:
            raise ValueError(f"filter count must be >= 2, got {count}")
        self.m = m
        self.k = k
        self.threshold = m // 2 if threshold is None else threshold
        self.window_len = window_len
        self.filters = [BloomFilter(m, k) for _ in range(count)]
        self.active = 0
        self.assoc: list[int | None] = [None] * count
        self.deadline: list[int | None] = [None] * count
        self.rotations = 0
        self.clears = 0

    def query(self, mask: int) -> bool:
        """Hit iff all k bits are set in any filter, active or not."""
        for f in self.filters:
            if (f.bits & mask) == mask:
                return True
        return False

    def query_hashes(self, indices: tuple[int, ...]) -> bool:
        return self.query(indices_to_mask(indices))

    def record_squash(self, masks: list[int], youngest_handle: int | None, dyn_count: int) -> None:
        """Insert squashed-PC masks and (re-)associate the active filter.

        With an empty handle queue the filter gets a synthetic clear
        deadline one window ahead instead of a handle association.
        Rotation is evaluated after the insertion.
        """
        f = self.filters[self.active]
        for mask in masks:
            f.bits |= mask
        if youngest_handle is not None:
            self.assoc[self.active] = youngest_handle
            self.deadline[self.active] = None
        elif self.assoc[self.active] is None:
            self.deadline[self.active] = dyn_count + self.window_len
        self.maybe_rotate()

    def maybe_rotate(self) -> bool:
        """Swap roles when the active filter is saturated and the next is clear."""
        f = self.filters[self.active]
        if f.set_count < self.threshold:
            return False
        nxt = (self.active + 1) % len(self.filters)
        if self.filters[nxt].bits != 0:
            return False
        self.active = nxt
        self.rotations += 1
        return True

    def on_handle_safe(self, safe_seq: int, dyn_count: int) -> list[int]:
        """Arm clear deadlines for filters whose handle is now safe."""
        armed = []
        for i, assoc in enumerate(self.assoc):
            if assoc is not None and assoc <= safe_seq:
                self.assoc[i] = None
                self.deadline[i] = dyn_count + self.window_len
                armed.append(i)
        if armed:
            self._sweep(dyn_count)  # window_len 0 clears right away
        return armed

    def on_dispatch(self, dyn_count: int) -> list[int]:
        """Bulk-reset filters whose deferred clear deadline has passed."""
        return self._sweep(dyn_count)

    def _sweep(self, dyn_count: int) -> list[int]:
        cleared = []
        for i, dl in enumerate(self.deadline):
            if dl is not None and dyn_count >= dl:
                if self.filters[i].bits != 0:
                    self.filters[i].clear()
                    self.clears += 1
                self.deadline[i] = None
                cleared.append(i)
        return cleared


@dataclass
class _Record:
    pcs: frozenset[int]
    expire_seq: int | None  # handle whose safety expires this record
    deadline: int | None    # dynamic-instruction deadline (empty-queue case)


class PerfectFilter:
    """Exact squashed-PC sets with unlimited storage.

    A PC hits while it belongs to a record whose associated handle is
    still unsafe.  Records expire exactly when their handle becomes safe;
    records made under an empty handle queue expire one dynamic-instruction
    window after the squash.
    """

    def __init__(self, window_len: int = 0) -> None:
        self.window_len = window_len
        # youngest-handle seqs and dynamic counts are both non-decreasing
        # across records, so each queue expires strictly from the front
        self._handle_records: deque[_Record] = deque()
        self._timed_records: deque[_Record] = deque()
        self._live: dict[int, int] = {}  # pc -> number of live records holding it

    def query(self, pc: int) -> bool:
        return pc in self._live

    def record(self, pcs: set[int] | frozenset[int], youngest_handle: int | None,
               dyn_count: int) -> None:
        """Store one squash's PC set.

        ``youngest_handle`` values must be non-decreasing across calls
        (they come from the handle-queue tail, which only grows), as must
        ``dyn_count``; expiry pops each queue from the front.
        """
        if not pcs:
            return  # exact sets: nothing to store
        rec = _Record(
            pcs=frozenset(pcs),
            expire_seq=youngest_handle,
            deadline=None if youngest_handle is not None else dyn_count + self.window_len,
        )
        if youngest_handle is not None:
            self._handle_records.append(rec)
        else:
            self._timed_records.append(rec)
        for pc in rec.pcs:
            self._live[pc] = self._live.get(pc, 0) + 1

    def on_handle_safe(self, safe_seq: int, dyn_count: int) -> None:
        q = self._handle_records
        while q and q[0].expire_seq <= safe_seq:
            self._drop(q.popleft())

    def on_dispatch(self, dyn_count: int) -> None:
        q = self._timed_records
        while q and dyn_count >= q[0].deadline:
            self._drop(q.popleft())

    def _drop(self, rec: _Record) -> None:
        for pc in rec.pcs:
            n = self._live[pc] - 1
            if n:
                self._live[pc] = n
            else:
                del self._live[pc]

    def records(self) -> list[_Record]:
        return list(self._handle_records) + list(self._timed_records)
