"""Abstract instruction model and deterministic trace generation.

Instructions carry only what the defense mechanism reads: a program
counter, a shadow class when they can cause squashing, and execute/resolve
latencies.  There is no ISA, no registers, no memory values.

Trace file format (one instruction per line, ``#`` starts a comment)::

    <seq> <pc-hex> <KIND> <SHADOW|-> <exec_latency> <resolve_latency> [MISS]

KIND is one of PLAIN, LOAD, STORE, BRANCH, TRANSMIT; SHADOW is one of
E, C, D, M or ``-`` for none; MISS marks a pre-scheduled misspeculation.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum

from .shadows import ShadowKind


class InstructionKind(str, Enum):
    PLAIN = "PLAIN"
    LOAD = "LOAD"
    STORE = "STORE"
    BRANCH = "BRANCH"
    TRANSMIT = "TRANSMIT"  # side-channel transmit; never casts a shadow

    def __str__(self) -> str:
        return self.value


# Which shadow classes an instruction kind may cast.
_KIND_SHADOWS: dict[InstructionKind, frozenset[ShadowKind]] = {
    InstructionKind.PLAIN: frozenset(),
    InstructionKind.LOAD: frozenset({ShadowKind.E, ShadowKind.M}),
    InstructionKind.STORE: frozenset({ShadowKind.E, ShadowKind.D}),
    InstructionKind.BRANCH: frozenset({ShadowKind.C}),
    InstructionKind.TRANSMIT: frozenset(),
}


class TraceFormatError(ValueError):
    """Raised for malformed trace text; carries the offending line number."""

    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Instruction:
    """One dynamic instruction of a trace.

    ``seq`` is the position in the expanded dynamic stream; the pipeline
    assigns its own sequence numbers to re-dispatched instances.
    """

    seq: int
    pc: int
    kind: InstructionKind
    shadow_class: ShadowKind | None = None
    exec_latency: int = 1
    resolve_latency: int = 1
    misspeculate: bool = False

    def __post_init__(self) -> None:
        if self.exec_latency < 1:
            raise ValueError(f"exec_latency must be >= 1, got {self.exec_latency}")
        if self.resolve_latency < 1:
            raise ValueError(f"resolve_latency must be >= 1, got {self.resolve_latency}")
        if self.kind is InstructionKind.TRANSMIT and self.shadow_class is not None:
            raise ValueError("transmit instructions never cast a shadow")
        if self.shadow_class is not None and self.shadow_class not in _KIND_SHADOWS[self.kind]:
            raise ValueError(f"{self.kind} cannot cast an {self.shadow_class}-shadow")
        if self.misspeculate and self.shadow_class is None:
            raise ValueError("only shadow-casting instructions can misspeculate")

    @property
    def is_handle(self) -> bool:
        return self.shadow_class is not None


@dataclass
class Trace:
    """An ordered dynamic instruction stream with its generation metadata."""

    name: str
    seed: int
    instructions: list[Instruction] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.instructions)

    def __iter__(self):
        return iter(self.instructions)

    @property
    def trace_id(self) -> str:
        return f"{self.name}:{self.seed}:{len(self.instructions)}"


_LOOP_PC_BASE = 0x1000


def _loop_slot(j: int) -> tuple[InstructionKind, ShadowKind | None, int, int]:
    """Static layout of loop body slot j: (kind, shadow, exec, resolve)."""
    if j % 11 == 7:
        return InstructionKind.LOAD, ShadowKind.M, 2, 5
    if j % 5 == 0:
        return InstructionKind.BRANCH, ShadowKind.C, 1, 4
    if j % 5 == 3:
        return InstructionKind.STORE, ShadowKind.D, 1, 3
    if j % 5 == 2:
        return InstructionKind.LOAD, None, 2, 1
    return InstructionKind.PLAIN, None, 1, 1


def gen_loop_trace(body_len: int, iterations: int, squash_rate: float, seed: int) -> Trace:
    """Generate a loop whose body repeats with identical PCs per iteration.

    A ``squash_rate`` fraction of the dynamic shadow-casting instructions
    is pre-marked to misspeculate.  Selection is reproducible: walk the
    dynamic stream in order and draw ``random.Random(seed).random()`` once
    per shadow-casting instruction; mark it when the draw is below the
    rate.
    """
    if body_len < 1:
        raise ValueError(f"body_len must be >= 1, got {body_len}")
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    if not 0.0 <= squash_rate <= 1.0:
        raise ValueError(f"squash_rate must be in [0, 1], got {squash_rate}")

    rng = random.Random(seed)
    out: list[Instruction] = []
    for _ in range(iterations):
        for j in range(body_len):
            kind, shadow, exec_lat, res_lat = _loop_slot(j)
            miss = False
            if shadow is not None:
                miss = rng.random() < squash_rate
            out.append(
                Instruction(
                    seq=len(out),
                    pc=_LOOP_PC_BASE + 4 * j,
                    kind=kind,
                    shadow_class=shadow,
                    exec_latency=exec_lat,
                    resolve_latency=res_lat,
                    misspeculate=miss,
                )
            )
    return Trace(name=f"loop-{body_len}x{iterations}-r{squash_rate}", seed=seed, instructions=out)


def parse_trace(text: str, name: str = "trace", seed: int = 0) -> Trace:
    """Parse the trace file format; round-trips with :func:`serialize_trace`."""
    instructions: list[Instruction] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) not in (6, 7):
            raise TraceFormatError(line_no, f"expected 6 or 7 fields, got {len(fields)}")
        try:
            seq = int(fields[0])
        except ValueError:
            raise TraceFormatError(line_no, f"bad seq {fields[0]!r}") from None
        try:
            pc = int(fields[1], 16)
        except ValueError:
            raise TraceFormatError(line_no, f"bad pc {fields[1]!r}") from None
        try:
            kind = InstructionKind(fields[2].upper())
        except ValueError:
            raise TraceFormatError(line_no, f"unknown kind {fields[2]!r}") from None
        shadow: ShadowKind | None
        if fields[3] == "-":
            shadow = None
        else:
            try:
                shadow = ShadowKind(fields[3].upper())
            except ValueError:
                raise TraceFormatError(line_no, f"unknown shadow class {fields[3]!r}") from None
        try:
            exec_lat = int(fields[4])
            res_lat = int(fields[5])
        except ValueError:
            raise TraceFormatError(line_no, "bad latency field") from None
        miss = False
        if len(fields) == 7:
            if fields[6].upper() != "MISS":
                raise TraceFormatError(line_no, f"unexpected trailing field {fields[6]!r}")
            miss = True
        if seq != len(instructions):
            raise TraceFormatError(line_no, f"seq {seq} out of order, expected {len(instructions)}")
        try:
            instructions.append(
                Instruction(seq, pc, kind, shadow, exec_lat, res_lat, miss)
            )
        except ValueError as exc:
            raise TraceFormatError(line_no, str(exc)) from None
    return Trace(name=name, seed=seed, instructions=instructions)


def serialize_trace(trace: Trace) -> str:
    """Render a trace in the file format (one instruction per line)."""
    lines = []
    for ins in trace.instructions:
        shadow = str(ins.shadow_class) if ins.shadow_class is not None else "-"
        line = f"{ins.seq} 0x{ins.pc:x} {ins.kind} {shadow} {ins.exec_latency} {ins.resolve_latency}"
        if ins.misspeculate:
            line += " MISS"
        lines.append(line)
    return "\n".join(lines) + ("\n" if lines else "")


def load_trace(path: str, name: str | None = None) -> Trace:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trace(fh.read(), name=name or path)


def save_trace(trace: Trace, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_trace(trace))
