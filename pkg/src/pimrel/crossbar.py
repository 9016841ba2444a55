"""Bit-level model of a memristive crossbar executing stateful logic.

Cells hold logical 0 (high resistance) or 1 (low resistance) in an n x n
grid. Stateful gates are applied along rows or columns; the same gate can
fire across any set of rows (columns) simultaneously for a single cycle,
which is the parallelism contract this whole simulator is built around.
Transistor partitions split rows (columns) into independent segments so
several gates can share one line in one cycle.

The model is purely logical: no resistances, voltages, or sneak paths.
Cycle counting follows the convention that one (possibly composite) step
costs one cycle regardless of how many lanes it drives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

IN_ROW = "in-row"
IN_COLUMN = "in-column"
ORIENTATIONS = (IN_ROW, IN_COLUMN)


class GateKind(Enum):
    NOT = "NOT"
    NOR2 = "NOR2"
    NAND2 = "NAND2"
    OR2 = "OR2"
    MIN3 = "MIN3"


GATE_ARITY = {
    GateKind.NOT: 1,
    GateKind.NOR2: 2,
    GateKind.NAND2: 2,
    GateKind.OR2: 2,
    GateKind.MIN3: 3,
}


def gate_eval(kind: GateKind, inputs: Sequence[np.ndarray]) -> np.ndarray:
    """Evaluate one gate on stacked input bit vectors (uint8 in, uint8 out)."""
    if kind is GateKind.NOT:
        return inputs[0] ^ 1
    if kind is GateKind.NOR2:
        return (inputs[0] | inputs[1]) ^ 1
    if kind is GateKind.NAND2:
        return (inputs[0] & inputs[1]) ^ 1
    if kind is GateKind.OR2:
        return inputs[0] | inputs[1]
    if kind is GateKind.MIN3:
        a, b, c = inputs
        return ((a & b) | (a & c) | (b & c)) ^ 1
    raise ValueError(f"unknown gate kind: {kind!r}")


class CrossbarError(ValueError):
    """Invalid step or partition configuration."""


@dataclass(eq=False)
class GateStep:
    """One stateful gate applied in parallel across the lanes in `mask`.

    For in-row orientation, offsets are column indices and `mask` selects
    rows; for in-column the roles swap. All offsets of one step must fall
    inside a single partition segment.
    """

    gate: GateKind
    orientation: str
    input_offsets: tuple[int, ...]
    output_offset: int
    mask: Sequence[int] | np.ndarray

    def __post_init__(self):
        self.input_offsets = tuple(int(o) for o in self.input_offsets)
        self.output_offset = int(self.output_offset)


@dataclass(eq=False)
class InitStep:
    """Pre-set the selected cells to 1 (MAGIC-style output initialization)."""

    orientation: str
    offsets: tuple[int, ...]
    mask: Sequence[int] | np.ndarray

    def __post_init__(self):
        self.offsets = tuple(int(o) for o in self.offsets)


@dataclass(eq=False)
class StepChanges:
    """Cells written by one step at one offset; feeds ECC maintenance."""

    orientation: str
    lanes: np.ndarray
    offset: int
    old: np.ndarray
    new: np.ndarray
    faulted: np.ndarray | None = None

    def as_tuples(self) -> list[tuple[int, int, int, int]]:
        """(row, col, old_bit, new_bit) per written cell."""
        if self.orientation == IN_ROW:
            return [
                (int(r), self.offset, int(o), int(n))
                for r, o, n in zip(self.lanes, self.old, self.new)
            ]
        return [
            (self.offset, int(c), int(o), int(n))
            for c, o, n in zip(self.lanes, self.old, self.new)
        ]


def _validate_boundaries(boundaries: Sequence[int], n: int, what: str) -> tuple[int, ...]:
    bs = tuple(int(b) for b in boundaries)
    if any(b2 <= b1 for b1, b2 in zip(bs, bs[1:])):
        raise CrossbarError(f"{what} boundaries must be strictly increasing: {bs}")
    if any(not (1 <= b <= n - 1) for b in bs):
        raise CrossbarError(f"{what} boundaries must lie in [1, {n - 1}]: {bs}")
    return bs


def segments_of(boundaries: Sequence[int], n: int) -> list[tuple[int, int]]:
    """Half-open [start, end) segments induced by partition boundaries."""
    edges = [0, *boundaries, n]
    return list(zip(edges[:-1], edges[1:]))


class Crossbar:
    """n x n bit array with stateful-gate application and cycle/area counters.

    Cells default to 0 at construction. `cycle_count` advances by one per
    applied step (or composite partition step); writes cost one cycle per
    written column. `cells_touched` is a boolean matrix recording every
    cell that has been an input or output of any operation, used for area
    accounting. A Crossbar must not be mutated from multiple threads.
    """

    def __init__(
        self,
        n: int,
        *,
        row_partitions: Sequence[int] = (),
        col_partitions: Sequence[int] = (),
        partition_cycles: int = 1,
    ):
        if n <= 0:
            raise CrossbarError(f"side length must be positive, got {n}")
        self.n = int(n)
        self.cells = np.zeros((n, n), dtype=np.uint8)
        self.row_partitions = _validate_boundaries(row_partitions, n, "row partition")
        self.col_partitions = _validate_boundaries(col_partitions, n, "column partition")
        self.partition_cycles = int(partition_cycles)
        self.cycle_count = 0
        self._touched = np.zeros((n, n), dtype=bool)

    # -- accounting ------------------------------------------------------

    @property
    def cells_touched(self) -> np.ndarray:
        """Boolean matrix view of the touched-cell set."""
        return self._touched

    @property
    def area_cells(self) -> int:
        return int(self._touched.sum())

    # -- partitions ------------------------------------------------------

    def set_partitions(
        self, row_partitions: Sequence[int], col_partitions: Sequence[int]
    ) -> None:
        """Replace both partition configurations; costs `partition_cycles`."""
        self.row_partitions = _validate_boundaries(row_partitions, self.n, "row partition")
        self.col_partitions = _validate_boundaries(col_partitions, self.n, "column partition")
        self.cycle_count += self.partition_cycles

    def segments(self, orientation: str) -> list[tuple[int, int]]:
        bounds = self.row_partitions if orientation == IN_ROW else self.col_partitions
        return segments_of(bounds, self.n)

    def segment_index(self, orientation: str, offsets: Iterable[int]) -> int:
        """Segment containing all offsets; raises if they span a boundary."""
        offs = list(offsets)
        segs = self.segments(orientation)
        for i, (lo, hi) in enumerate(segs):
            if all(lo <= o < hi for o in offs):
                return i
        raise CrossbarError(
            f"offsets {offs} cross a partition boundary "
            f"({orientation} segments: {segs})"
        )

    # -- step application --------------------------------------------------

    def _check_orientation(self, orientation: str) -> None:
        if orientation not in ORIENTATIONS:
            raise CrossbarError(f"orientation must be one of {ORIENTATIONS}")

    def _check_offsets(self, offsets: Iterable[int]) -> None:
        for o in offsets:
            if not (0 <= o < self.n):
                raise CrossbarError(f"offset {o} out of range [0, {self.n})")

    def _lanes(self, mask) -> np.ndarray:
        lanes = np.asarray(mask, dtype=np.intp).ravel()
        if lanes.size and (lanes.min() < 0 or lanes.max() >= self.n):
            raise CrossbarError("lane index out of range")
        return lanes

    def _apply_gate(self, step: GateStep, lanes: np.ndarray, stream=None) -> StepChanges:
        # core kernel: no validation, no cycle accounting
        cells = self.cells
        if step.orientation == IN_ROW:
            ins = [cells[lanes, o] for o in step.input_offsets]
        else:
            ins = [cells[o, lanes] for o in step.input_offsets]
        out = gate_eval(step.gate, ins)
        faulted = None
        if stream is not None:
            flips = stream.gate_flips(out.shape[0])
            if flips is not None:
                out = out ^ flips
                faulted = flips.astype(bool)
        if step.orientation == IN_ROW:
            old = cells[lanes, step.output_offset].copy()
            cells[lanes, step.output_offset] = out
            for o in step.input_offsets:
                self._touched[lanes, o] = True
            self._touched[lanes, step.output_offset] = True
        else:
            old = cells[step.output_offset, lanes].copy()
            cells[step.output_offset, lanes] = out
            for o in step.input_offsets:
                self._touched[o, lanes] = True
            self._touched[step.output_offset, lanes] = True
        return StepChanges(step.orientation, lanes, step.output_offset, old, out, faulted)

    def _apply_init(self, step: InitStep, lanes: np.ndarray, stream=None) -> list[StepChanges]:
        cells = self.cells
        changes = []
        for o in step.offsets:
            new = np.ones(lanes.shape[0], dtype=np.uint8)
            if stream is not None:
                flips = stream.write_flips(new.shape)
                if flips is not None:
                    new = new ^ flips
            if step.orientation == IN_ROW:
                old = cells[lanes, o].copy()
                cells[lanes, o] = new
                self._touched[lanes, o] = True
            else:
                old = cells[o, lanes].copy()
                cells[o, lanes] = new
                self._touched[o, lanes] = True
            changes.append(StepChanges(step.orientation, lanes, o, old, new))
        return changes

    def _validate_step(self, step) -> None:
        self._check_orientation(step.orientation)
        if isinstance(step, GateStep):
            arity = GATE_ARITY[step.gate]
            if len(step.input_offsets) != arity:
                raise CrossbarError(
                    f"{step.gate.value} takes {arity} inputs, got {len(step.input_offsets)}"
                )
            offs = (*step.input_offsets, step.output_offset)
            if len(set(offs)) != len(offs):
                raise CrossbarError(f"step offsets must be distinct: {offs}")
        else:
            offs = step.offsets
            if len(set(offs)) != len(offs):
                raise CrossbarError(f"init offsets must be distinct: {offs}")
        self._check_offsets(offs)
        self.segment_index(step.orientation, offs)

    def apply_gate_step(self, step: GateStep, stream=None) -> StepChanges:
        """Apply one gate across all selected lanes; costs exactly 1 cycle."""
        self._validate_step(step)
        lanes = self._lanes(step.mask)
        changes = self._apply_gate(step, lanes, stream)
        self.cycle_count += 1
        return changes

    def apply_init_step(self, step: InitStep, stream=None) -> list[StepChanges]:
        """Set the selected cells to 1 across all lanes; costs 1 cycle."""
        self._validate_step(step)
        lanes = self._lanes(step.mask)
        changes = self._apply_init(step, lanes, stream)
        self.cycle_count += 1
        return changes

    def apply_parallel_partition_steps(self, steps: Sequence, stream=None) -> list[StepChanges]:
        """Apply several steps in one cycle, one per partition segment.

        All steps must share an orientation and target pairwise-distinct
        segments; an empty list is a no-op costing 0 cycles.
        """
        if not steps:
            return []
        orientation = steps[0].orientation
        seen: set[int] = set()
        for step in steps:
            self._validate_step(step)
            if step.orientation != orientation:
                raise CrossbarError("parallel steps must share one orientation")
            offs = step.input_offsets + (step.output_offset,) if isinstance(step, GateStep) else step.offsets
            seg = self.segment_index(orientation, offs)
            if seg in seen:
                raise CrossbarError(f"two parallel steps share partition segment {seg}")
            seen.add(seg)
        changes: list[StepChanges] = []
        for step in steps:
            lanes = self._lanes(step.mask)
            if isinstance(step, GateStep):
                changes.append(self._apply_gate(step, lanes, stream))
            else:
                changes.extend(self._apply_init(step, lanes, stream))
        self.cycle_count += 1
        return changes

    # -- host read/write (test setup and result extraction) ----------------

    def read_region(self, row0: int, col0: int, height: int, width: int) -> np.ndarray:
        """Copy of a rectangular region; free of cycle cost."""
        self._check_rect(row0, col0, height, width)
        return self.cells[row0 : row0 + height, col0 : col0 + width].copy()

    def write_region(self, row0: int, col0: int, bits: np.ndarray, stream=None) -> None:
        """Row-parallel write: one cycle per written column."""
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.ndim != 2:
            raise CrossbarError("write_region expects a 2-D bit matrix")
        height, width = bits.shape
        self._check_rect(row0, col0, height, width)
        if stream is not None:
            flips = stream.write_flips(bits.shape)
            if flips is not None:
                bits = bits ^ flips
        self.cells[row0 : row0 + height, col0 : col0 + width] = bits
        self._touched[row0 : row0 + height, col0 : col0 + width] = True
        self.cycle_count += width

    def write_columns(self, rows, col0: int, bits: np.ndarray, stream=None) -> None:
        """Row-parallel write to an arbitrary row set; one cycle per column."""
        bits = np.asarray(bits, dtype=np.uint8)
        lanes = self._lanes(rows)
        if bits.shape != (lanes.size, bits.shape[1]) or bits.ndim != 2:
            raise CrossbarError("write_columns expects (len(rows), width) bits")
        width = bits.shape[1]
        if not (0 <= col0 and col0 + width <= self.n):
            raise CrossbarError(f"columns [{col0}, {col0 + width}) out of bounds")
        if stream is not None:
            flips = stream.write_flips(bits.shape)
            if flips is not None:
                bits = bits ^ flips
        self.cells[lanes[:, None], np.arange(col0, col0 + width)] = bits
        self._touched[lanes[:, None], np.arange(col0, col0 + width)] = True
        self.cycle_count += width

    def _check_rect(self, row0, col0, height, width) -> None:
        if height < 0 or width < 0:
            raise CrossbarError("region extents must be non-negative")
        if not (0 <= row0 and row0 + height <= self.n and 0 <= col0 and col0 + width <= self.n):
            raise CrossbarError(
                f"region ({row0},{col0})+({height}x{width}) out of bounds for n={self.n}"
            )
