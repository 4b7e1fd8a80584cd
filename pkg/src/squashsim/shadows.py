"""Speculative shadow kinds and the FIFO queue of potential replay handles.

Every in-flight instruction that can cause a squash casts a shadow and is
entered into the handle queue at dispatch.  Entries leave only from the
head, and only once safe: resolved (or squashed) with no older entry still
in front of them.  Squashed entries stay queued as placeholders until they
reach the head, which is what defeats serial and nested replay patterns.
"""

from __future__ import annotations

import bisect
from collections import deque
from dataclasses import dataclass
from enum import Enum


class ShadowKind(str, Enum):
    E = "E"  # exceptions / page faults; resolve only at the ROB head
    C = "C"  # control flow
    D = "D"  # stores with unknown address
    M = "M"  # speculative reordering against the memory model

    def __str__(self) -> str:
        return self.value


class HandleQueueError(RuntimeError):
    """Raised on FIFO invariant breaches (out-of-order push, unknown seq)."""


@dataclass
class HandleEntry:
    seq: int
    kind: ShadowKind
    resolved: bool = False
    squashed: bool = False


class HandleQueue:
    """FIFO of potential replay handles, keyed by dynamic sequence number."""

    def __init__(self) -> None:
        self._entries: deque[HandleEntry] = deque()
        self._by_seq: dict[int, HandleEntry] = {}
        # live = neither resolved nor squashed; kept sorted (pushes are monotonic)
        self._live_unresolved: list[int] = []

    def __len__(self) -> int:
        return len(self._entries)

    def __bool__(self) -> bool:
        return bool(self._entries)

    def entries(self) -> list[HandleEntry]:
        return list(self._entries)

    def push_handle(self, seq: int, kind: ShadowKind) -> None:
        if self._entries and seq <= self._entries[-1].seq:
            raise HandleQueueError(
                f"push_handle out of order: seq {seq} <= tail {self._entries[-1].seq}"
            )
        entry = HandleEntry(seq, ShadowKind(kind))
        self._entries.append(entry)
        self._by_seq[seq] = entry
        self._live_unresolved.append(seq)

    def youngest_handle(self) -> int | None:
        """Tail seq, counting squashed-but-present entries; None when empty."""
        return self._entries[-1].seq if self._entries else None

    def oldest_seq(self) -> int | None:
        return self._entries[0].seq if self._entries else None

    def oldest_live_unresolved(self) -> int | None:
        """Oldest entry that still casts a shadow (not resolved, not squashed)."""
        return self._live_unresolved[0] if self._live_unresolved else None

    def shadows(self, seq: int) -> bool:
        """True if some live unresolved entry older than seq exists."""
        oldest = self.oldest_live_unresolved()
        return oldest is not None and oldest < seq

    def mark_resolved(self, seq: int) -> None:
        entry = self._by_seq.get(seq)
        if entry is None:
            raise HandleQueueError(f"mark_resolved: unknown seq {seq}")
        if not entry.resolved:
            entry.resolved = True
            self._drop_live(seq)

    def mark_squashed_after(self, seq: int) -> None:
        """Flag every entry younger than seq; the causing entry stays live."""
        for entry in reversed(self._entries):
            if entry.seq <= seq:
                break
            if not entry.squashed:
                entry.squashed = True
                if not entry.resolved:
                    self._drop_live(entry.seq)

    def pop_safe(self) -> list[int]:
        """Remove the head while it is resolved or squashed; return popped seqs."""
        popped: list[int] = []
        while self._entries:
            head = self._entries[0]
            if not (head.resolved or head.squashed):
                break
            self._entries.popleft()
            del self._by_seq[head.seq]
            popped.append(head.seq)
        return popped

    def _drop_live(self, seq: int) -> None:
        i = bisect.bisect_left(self._live_unresolved, seq)
        if i < len(self._live_unresolved) and self._live_unresolved[i] == seq:
            del self._live_unresolved[i]
