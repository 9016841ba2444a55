"""Micro-programs: arithmetic functions compiled to sequences of stateful gates.

A MicroProgram is an ordered list of gate/init steps over cell offsets
local to one row (or column), built so the same program can run across
any set of rows simultaneously at the cost of a single pass of cycles.
Stateful gates need their output memristor pre-set, so the builder emits
an INIT step before every gate and both are counted in the cycle total.

Reference netlists are provided for a Minority3-based full adder and a
shift-and-add unsigned multiplier. Intermediate cells are recycled once
dead; output cells are allocated up front, written exactly once, and
never recycled, which is what makes output relocation (used by the
redundant executor) a pure renaming.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .crossbar import (
    GATE_ARITY,
    IN_COLUMN,
    IN_ROW,
    Crossbar,
    CrossbarError,
    GateKind,
    GateStep,
    InitStep,
    StepChanges,
)
from .faults import FaultStream


class ProgramError(ValueError):
    """Program cannot execute on the given crossbar."""


@dataclass(frozen=True)
class ProgramStep:
    """One template step; gate=None means INIT of `outputs` to 1."""

    gate: GateKind | None
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]

    def offsets(self) -> tuple[int, ...]:
        return self.inputs + self.outputs


@dataclass(frozen=True)
class MicroProgram:
    name: str
    bit_width: int
    steps: tuple[ProgramStep, ...]
    input_layout: dict[str, tuple[int, ...]]
    output_layout: dict[str, tuple[int, ...]]
    cells_per_row: int
    span: int = 0  # highest offset + 1; equals cells_per_row unless remapped

    def __post_init__(self):
        if self.span == 0:
            object.__setattr__(self, "span", self.cells_per_row)

    @property
    def cycles(self) -> int:
        return len(self.steps)

    @property
    def gate_count(self) -> int:
        return sum(1 for s in self.steps if s.gate is not None)

    def output_width(self) -> int:
        return sum(len(offs) for offs in self.output_layout.values())

    def referenced_offsets(self) -> set[int]:
        offs = {o for s in self.steps for o in s.offsets()}
        offs.update(o for layout in (self.input_layout, self.output_layout) for t in layout.values() for o in t)
        return offs

    def remap_cells(self, mapping: dict[int, int]) -> "MicroProgram":
        """Rename cell offsets (used to relocate output copies).

        Only single-write, never-recycled cells may be renamed; output
        cells satisfy this by construction. New offsets must be unused.
        """
        referenced = self.referenced_offsets()
        for old, new in mapping.items():
            writes = [s for s in self.steps if old in s.outputs and s.gate is not None]
            if len(writes) != 1:
                raise ProgramError(f"cell {old} is not single-write; cannot remap")
            if new in referenced:
                raise ProgramError(f"target cell {new} is already in use")
        def ren(off: int) -> int:
            return mapping.get(off, off)
        steps = tuple(
            ProgramStep(s.gate, tuple(ren(o) for o in s.inputs), tuple(ren(o) for o in s.outputs))
            for s in self.steps
        )
        out_layout = {
            name: tuple(ren(o) for o in offs) for name, offs in self.output_layout.items()
        }
        span = 1 + max(
            max((max(s.offsets()) for s in steps), default=0),
            max((max(offs) for offs in out_layout.values()), default=0),
        )
        return replace(
            self, steps=steps, output_layout=out_layout, span=max(span, self.span)
        )


@dataclass
class ExecutionResult:
    """Outputs and resource accounting of one program run."""

    outputs: dict[str, np.ndarray]
    cycles: int
    area_cells: int
    fault_lanes: np.ndarray | None = None

    def words(self, name: str) -> np.ndarray:
        """Interpret an output as little-endian unsigned integers per row."""
        bits = self.outputs[name].astype(np.uint64)
        shifts = np.arange(bits.shape[1], dtype=np.uint64)
        return (bits << shifts).sum(axis=1, dtype=np.uint64)


class ProgramBuilder:
    """Allocates cells and emits INIT+gate step pairs.

    Inputs come first, then output words (reserved, never recycled), then
    scratch cells managed by a free list so dead intermediates get reused.
    """

    def __init__(self, name: str, bit_width: int):
        self.name = name
        self.bit_width = bit_width
        self.steps: list[ProgramStep] = []
        self.inputs: dict[str, tuple[int, ...]] = {}
        self.outputs: dict[str, tuple[int, ...]] = {}
        self._next = 0
        self._free: list[int] = []
        self._reserved: set[int] = set()
        self._const1: int | None = None
        self._const0: int | None = None

    def input_word(self, name: str, width: int) -> tuple[int, ...]:
        offs = tuple(range(self._next, self._next + width))
        self._next += width
        self.inputs[name] = offs
        self._reserved.update(offs)
        return offs

    def output_word(self, name: str, width: int) -> tuple[int, ...]:
        offs = tuple(range(self._next, self._next + width))
        self._next += width
        self.outputs[name] = offs
        self._reserved.update(offs)
        return offs

    def alloc(self) -> int:
        if self._free:
            return heapq.heappop(self._free)
        off = self._next
        self._next += 1
        return off

    def release(self, *offsets: int) -> None:
        for off in offsets:
            if off not in self._reserved:
                heapq.heappush(self._free, off)

    def gate(self, kind: GateKind, *inputs: int, out: int | None = None) -> int:
        """Emit INIT(out) followed by the gate; returns the output offset."""
        if len(inputs) != GATE_ARITY[kind]:
            raise ProgramError(f"{kind.value} takes {GATE_ARITY[kind]} inputs")
        if out is None:
            out = self.alloc()
        self.steps.append(ProgramStep(None, (), (out,)))
        self.steps.append(ProgramStep(kind, tuple(inputs), (out,)))
        return out

    def const_one(self) -> int:
        if self._const1 is None:
            off = self.alloc()
            self._reserved.add(off)
            self.steps.append(ProgramStep(None, (), (off,)))
            self._const1 = off
        return self._const1

    def const_zero(self) -> int:
        if self._const0 is None:
            one = self.const_one()
            off = self.gate(GateKind.NOT, one)
            self._reserved.add(off)
            self._const0 = off
        return self._const0

    def build(self) -> MicroProgram:
        referenced = {o for s in self.steps for o in s.offsets()}
        referenced.update(o for offs in self.inputs.values() for o in offs)
        referenced.update(o for offs in self.outputs.values() for o in offs)
        span = max(referenced) + 1 if referenced else 0
        prog = MicroProgram(
            name=self.name,
            bit_width=self.bit_width,
            steps=tuple(self.steps),
            input_layout=dict(self.inputs),
            output_layout=dict(self.outputs),
            cells_per_row=span,
        )
        diags = validate(prog)
        if diags:
            raise ProgramError(f"built program is invalid: {diags}")
        return prog


def validate(prog: MicroProgram, partitions: Sequence[int] | None = None) -> list[str]:
    """Static diagnostics: uninitialized reads, unwritten outputs, bounds,
    and (optionally) steps crossing declared partition boundaries."""
    diags: list[str] = []
    initialized: set[int] = {o for offs in prog.input_layout.values() for o in offs}
    written: set[int] = set()
    bounds = sorted(partitions) if partitions else []
    def seg(off: int) -> int:
        s = 0
        for b in bounds:
            if off >= b:
                s += 1
        return s
    for i, step in enumerate(prog.steps):
        for off in step.offsets():
            if not (0 <= off < prog.span):
                diags.append(f"step {i}: offset {off} outside [0, {prog.span})")
        for off in step.inputs:
            if off not in initialized:
                diags.append(f"step {i}: reads uninitialized cell {off}")
        if bounds and len({seg(o) for o in step.offsets()}) > 1:
            diags.append(f"step {i}: offsets {step.offsets()} cross a partition boundary")
        initialized.update(step.outputs)
        if step.gate is not None:
            written.update(step.outputs)
    for name, offs in prog.output_layout.items():
        for off in offs:
            if off not in written:
                diags.append(f"output {name!r} cell {off} is never written by a gate")
    distinct = len(prog.referenced_offsets())
    if distinct != prog.cells_per_row:
        diags.append(
            f"cells_per_row={prog.cells_per_row} but {distinct} distinct offsets referenced"
        )
    return diags


def execute(
    prog: MicroProgram,
    xbar: Crossbar,
    rows: Sequence[int] | np.ndarray,
    stream: FaultStream | None = None,
    *,
    base: int = 0,
    orientation: str = IN_ROW,
    on_step: Callable[[StepChanges], None] | None = None,
) -> ExecutionResult:
    """Run a program across the selected rows (columns), inputs pre-loaded.

    Faults are drawn independently per step and selected lane. The cycle
    cost equals the step count regardless of how many lanes run.
    """
    lanes = np.asarray(rows, dtype=np.intp).ravel()
    try:
        xbar.segment_index(orientation, (base, base + prog.span - 1))
    except CrossbarError as e:
        raise ProgramError(
            f"program {prog.name!r} does not fit one partition segment: {e}"
        ) from e
    diags = validate(prog)
    if diags:
        raise ProgramError(f"invalid program {prog.name!r}: {diags}")

    start_cycles = xbar.cycle_count
    fault_lanes = np.zeros(lanes.shape[0], dtype=bool)
    for step in prog.steps:
        if step.gate is None:
            istep = InitStep(orientation, tuple(base + o for o in step.outputs), lanes)
            changes = xbar._apply_init(istep, lanes, stream)
            xbar.cycle_count += 1
            if on_step is not None:
                for ch in changes:
                    on_step(ch)
        else:
            gstep = GateStep(
                step.gate,
                orientation,
                tuple(base + o for o in step.inputs),
                base + step.outputs[0],
                lanes,
            )
            ch = xbar._apply_gate(gstep, lanes, stream)
            xbar.cycle_count += 1
            if ch.faulted is not None:
                fault_lanes |= ch.faulted
            if on_step is not None:
                on_step(ch)

    outputs = _read_outputs(prog, xbar, lanes, base, orientation)
    return ExecutionResult(
        outputs=outputs,
        cycles=xbar.cycle_count - start_cycles,
        area_cells=prog.cells_per_row,
        fault_lanes=fault_lanes,
    )


def _read_outputs(prog, xbar, lanes, base, orientation) -> dict[str, np.ndarray]:
    out = {}
    for name, offs in prog.output_layout.items():
        cols = [base + o for o in offs]
        if orientation == IN_ROW:
            out[name] = np.stack([xbar.cells[lanes, c] for c in cols], axis=1)
        else:
            out[name] = np.stack([xbar.cells[c, lanes] for c in cols], axis=1)
    return out


def load_inputs(
    prog: MicroProgram,
    xbar: Crossbar,
    rows: Sequence[int] | np.ndarray,
    values: dict[str, np.ndarray | int],
    *,
    base: int = 0,
    stream: FaultStream | None = None,
) -> None:
    """Write input words (little-endian) for each selected row."""
    lanes = np.asarray(rows, dtype=np.intp).ravel()
    if lanes.size == 0:
        return
    for name, offs in prog.input_layout.items():
        vals = np.asarray(values[name], dtype=np.uint64)
        if vals.ndim == 0:
            vals = np.full(lanes.size, vals, dtype=np.uint64)
        width = len(offs)
        shifts = np.arange(width, dtype=np.uint64)
        bits = ((vals[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
        # input words occupy contiguous offsets by construction
        xbar.write_columns(lanes, base + offs[0], bits, stream)


# -- reference netlists ----------------------------------------------------


def _emit_full_adder(
    b: ProgramBuilder,
    a: int,
    bb: int,
    cin: int,
    *,
    sum_out: int | None = None,
    carry_out: int | None = None,
) -> tuple[int, int]:
    """Minority3 full adder: 7 gates.

    carry = NOT(MIN3(a, b, cin)) and
    sum   = NOT(MIN3(MIN3(a, b, cin), cin, NOT(MIN3(a, b, NOT cin)))),
    i.e. sum = Maj(NOT carry, cin, Maj(a, b, NOT cin)).
    """
    m1 = b.gate(GateKind.MIN3, a, bb, cin)
    carry = b.gate(GateKind.NOT, m1, out=carry_out)
    ncin = b.gate(GateKind.NOT, cin)
    m2 = b.gate(GateKind.MIN3, a, bb, ncin)
    maj2 = b.gate(GateKind.NOT, m2)
    m3 = b.gate(GateKind.MIN3, m1, cin, maj2)
    s = b.gate(GateKind.NOT, m3, out=sum_out)
    b.release(m1, ncin, m2, maj2, m3)
    return s, carry


def build_full_adder() -> MicroProgram:
    """One-bit full adder with outputs (sum, carry)."""
    b = ProgramBuilder("full-adder", 1)
    (a,) = b.input_word("a", 1)
    (bb,) = b.input_word("b", 1)
    (cin,) = b.input_word("cin", 1)
    (sum_out,) = b.output_word("sum", 1)
    (carry_out,) = b.output_word("carry", 1)
    _emit_full_adder(b, a, bb, cin, sum_out=sum_out, carry_out=carry_out)
    return b.build()


def _emit_and(b: ProgramBuilder, x: int, y: int, *, out: int | None = None) -> int:
    nand = b.gate(GateKind.NAND2, x, y)
    res = b.gate(GateKind.NOT, nand, out=out)
    b.release(nand)
    return res


@lru_cache(maxsize=None)
def build_multiplier(bit_width: int) -> MicroProgram:
    """Shift-and-add unsigned multiplier; product is 2*bit_width bits.

    Partial products are ANDed in per bit of b and accumulated with a
    ripple-carry chain of full adders, all within one row. Accumulator
    bits migrate to fresh cells on every add; the write that finalizes a
    product bit targets its dedicated output cell directly.
    """
    w = int(bit_width)
    if w < 1:
        raise ProgramError(f"bit_width must be >= 1, got {bit_width}")
    b = ProgramBuilder(f"mult{w}", w)
    a = b.input_word("a", w)
    bw = b.input_word("b", w)
    p = b.output_word("product", 2 * w)

    if w == 1:
        _emit_and(b, a[0], bw[0], out=p[0])
        one = b.const_one()
        b.gate(GateKind.NOT, one, out=p[1])  # high bit is constant 0
        return b.build()

    zero = b.const_zero()

    # iteration 0: accumulator := a AND b_0
    acc: dict[int, int] = {}
    for i in range(w):
        target = p[0] if i == 0 else None
        acc[i] = _emit_and(b, a[i], bw[0], out=target)

    for j in range(1, w):
        last = j == w - 1
        pp = [_emit_and(b, a[i], bw[j]) for i in range(w)]
        carry = zero
        for i in range(w):
            pos = j + i
            final = (pos < w - 1 and j == pos) or last
            sum_target = p[pos] if final else None
            carry_target = p[2 * w - 1] if (last and i == w - 1) else None
            acc_in = acc.get(pos, zero)  # positions past the top start at 0
            s, c = _emit_full_adder(
                b, acc_in, pp[i], carry, sum_out=sum_target, carry_out=carry_target
            )
            b.release(acc_in, pp[i])
            if carry != zero:
                b.release(carry)
            acc[pos] = s
            carry = c
        acc[j + w] = carry

    return b.build()


# -- serialization -----------------------------------------------------------


def dump_program(prog: MicroProgram) -> str:
    """Line-oriented text form of a program."""
    lines = [f"PROGRAM {prog.name} bits={prog.bit_width} cells={prog.cells_per_row}"]
    for name, offs in prog.input_layout.items():
        lines.append(f"INPUT {name} {','.join(map(str, offs))}")
    for name, offs in prog.output_layout.items():
        lines.append(f"OUTPUT {name} {','.join(map(str, offs))}")
    for step in prog.steps:
        gate = "INIT" if step.gate is None else step.gate.value
        ins = ",".join(map(str, step.inputs))
        outs = ",".join(map(str, step.outputs))
        lines.append(f"STEP {gate} in-row in={ins} out={outs}")
    return "\n".join(lines) + "\n"


def parse_program(text: str) -> MicroProgram:
    name = ""
    bit_width = 0
    cells = 0
    inputs: dict[str, tuple[int, ...]] = {}
    outputs: dict[str, tuple[int, ...]] = {}
    steps: list[ProgramStep] = []

    def offs(s: str) -> tuple[int, ...]:
        return tuple(int(x) for x in s.split(",")) if s else ()

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        kind = parts[0]
        if kind == "PROGRAM":
            name = parts[1]
            kv = dict(p.split("=") for p in parts[2:])
            bit_width = int(kv["bits"])
            cells = int(kv["cells"])
        elif kind == "INPUT":
            inputs[parts[1]] = offs(parts[2])
        elif kind == "OUTPUT":
            outputs[parts[1]] = offs(parts[2])
        elif kind == "STEP":
            kv = dict(p.split("=") for p in parts[3:])
            gate = None if parts[1] == "INIT" else GateKind(parts[1])
            steps.append(ProgramStep(gate, offs(kv.get("in", "")), offs(kv.get("out", ""))))
        else:
            raise ProgramError(f"line {lineno}: unknown directive {kind!r}")
    return MicroProgram(name, bit_width, tuple(steps), inputs, outputs, cells)
