"""Diagonal wrap-around parity ECC with O(1) incremental maintenance.

Check bits live in a dedicated extension array, per m x m block of the
data crossbar. The `leading` bank holds one parity bit per wrap-around
leading diagonal ((col - row) mod m), the `counter` bank per counter
diagonal ((col + row) mod m). Within a block, the m cells of any single
column (or row) fall on m distinct leading and m distinct counter
diagonals, so the parity updates triggered by one row-parallel or
column-parallel gate step are conflict-free and cost a constant number
of cycles regardless of the crossbar side n. A horizontal-parity
baseline is included for comparison; its per-row check bits make
column-parallel steps cost Theta(n).

Decoding with the two diagonal banks is ambiguous for even m: positions
(i, j) and (i + m/2, j + m/2) share both diagonal indices. The default
configuration adds a third per-row bank (`row_aux`) that pins the row
and makes single-error correction unique for any m; `banks=2` selects
the plain two-bank scheme, whose decoder then reports candidate pairs.

Cross-array traffic is aligned by a barrel shifter, modeled purely as a
configurable cycle cost per alignment. Check bits are assumed fault-free
unless a fault stream is passed to the update routines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .crossbar import IN_COLUMN, IN_ROW, Crossbar, StepChanges
from .faults import FaultStream
from .microcode import ExecutionResult, MicroProgram, execute


class EccError(ValueError):
    pass


class UncorrectableEccError(RuntimeError):
    """Input verification found a block with more errors than correctable."""

    def __init__(self, report: "EccReport"):
        super().__init__(f"uncorrectable ECC blocks: {report.uncorrectable}")
        self.report = report


@dataclass(frozen=True)
class BlockGeometry:
    n: int
    m: int = 16

    def __post_init__(self):
        if self.m < 2:
            raise EccError(f"block side must be >= 2, got {self.m}")
        if self.n % self.m != 0:
            raise EccError(f"block side {self.m} must divide crossbar side {self.n}")

    @property
    def blocks_per_side(self) -> int:
        return self.n // self.m


@dataclass(frozen=True)
class EccCostModel:
    """Cycle prices for parity maintenance (annotations, not simulated).

    An XOR evaluation is a small fixed NOR netlist (`xor_depth` cycles);
    each bank access through the extension array costs one barrel-shifter
    alignment (`shift_cost`); the old output value is snapshotted to a
    scratch partition before each destructive write (`snapshot_cost`).
    """

    xor_depth: int = 4
    shift_cost: int = 1
    snapshot_cost: int = 1

    def diagonal_update(self, orientation: str, geom: BlockGeometry, banks: int = 3) -> int:
        cost = self.snapshot_cost + self.xor_depth  # old XOR new
        cost += 2 * (self.shift_cost + self.xor_depth)  # leading + counter
        if banks == 3:
            if orientation == IN_ROW:
                cost += self.xor_depth  # row bank is row-aligned: parallel
            else:
                cost += geom.m * self.xor_depth  # serial within a block row
        return cost

    def naive_update(self, orientation: str, n: int) -> int:
        if orientation == IN_ROW:
            return self.snapshot_cost + 2 * self.xor_depth
        return n * self.xor_depth  # full-row parity recomputed serially

    def verify_block(self, geom: BlockGeometry, banks: int = 3) -> int:
        tree = math.ceil(math.log2(geom.m)) if geom.m > 1 else 1
        return banks * (tree * self.xor_depth + self.shift_cost)


@dataclass
class ParityBanks:
    """Per-block parity banks stored in the memristive extension array."""

    geom: BlockGeometry
    leading: np.ndarray  # (blocks, blocks, m)
    counter: np.ndarray
    row_aux: np.ndarray | None  # None in the 2-bank configuration

    @property
    def bank_count(self) -> int:
        return 2 if self.row_aux is None else 3


def _block_view(cells: np.ndarray, geom: BlockGeometry) -> np.ndarray:
    nb, m = geom.blocks_per_side, geom.m
    return cells.reshape(nb, m, nb, m).transpose(0, 2, 1, 3)


def encode(xbar_or_cells, geom: BlockGeometry, banks: int = 3) -> ParityBanks:
    """Compute parity banks from scratch so all invariants hold exactly."""
    cells = xbar_or_cells.cells if isinstance(xbar_or_cells, Crossbar) else np.asarray(xbar_or_cells)
    if cells.shape != (geom.n, geom.n):
        raise EccError(f"cells shape {cells.shape} does not match n={geom.n}")
    if banks not in (2, 3):
        raise EccError(f"banks must be 2 or 3, got {banks}")
    view = _block_view(cells.astype(np.uint8), geom)
    nb, m = geom.blocks_per_side, geom.m
    lead = np.zeros((nb, nb, m), dtype=np.uint8)
    ctr = np.zeros((nb, nb, m), dtype=np.uint8)
    for i in range(m):
        row = view[:, :, i, :]
        lead ^= np.roll(row, -i, axis=-1)
        ctr ^= np.roll(row, i, axis=-1)
    row_aux = None
    if banks == 3:
        row_aux = np.bitwise_xor.reduce(view, axis=-1).astype(np.uint8)
    return ParityBanks(geom, lead, ctr, row_aux)


def _normalize_changes(changes) -> tuple[np.ndarray, np.ndarray, np.ndarray, str]:
    """(rows, cols, deltas, orientation) from StepChanges or tuples."""
    if isinstance(changes, StepChanges):
        lanes = np.asarray(changes.lanes, dtype=np.intp)
        delta = (changes.old ^ changes.new).astype(np.uint8)
        if changes.orientation == IN_ROW:
            rows, cols = lanes, np.full(lanes.shape, changes.offset, dtype=np.intp)
        else:
            rows, cols = np.full(lanes.shape, changes.offset, dtype=np.intp), lanes
        return rows, cols, delta, changes.orientation
    arr = list(changes)
    if not arr:
        return (np.empty(0, np.intp), np.empty(0, np.intp), np.empty(0, np.uint8), IN_ROW)
    rows = np.array([c[0] for c in arr], dtype=np.intp)
    cols = np.array([c[1] for c in arr], dtype=np.intp)
    delta = np.array([c[2] ^ c[3] for c in arr], dtype=np.uint8)
    if np.all(cols == cols[0]):
        orientation = IN_ROW
    elif np.all(rows == rows[0]):
        orientation = IN_COLUMN
    else:
        raise EccError("change list mixes rows and columns; one step changes one line")
    return rows, cols, delta, orientation


def update_incremental(
    banks: ParityBanks,
    changes,
    cost_model: EccCostModel | None = None,
    stream: FaultStream | None = None,
) -> int:
    """Fold one step's changes into the banks; returns the cycle cost.

    Exclusive-or linearity means each affected parity bit is XORed with
    (old XOR new); repeated hits on one parity bit accumulate correctly.
    """
    cost_model = cost_model or EccCostModel()
    rows, cols, delta, orientation = _normalize_changes(changes)
    geom = banks.geom
    m = geom.m
    if rows.size:
        if stream is not None:
            flips = stream.write_flips(delta.shape)
            if flips is not None:
                delta = delta ^ flips
        br, bc = rows // m, cols // m
        li, ci = (cols - rows) % m, (cols + rows) % m
        np.bitwise_xor.at(banks.leading, (br, bc, li), delta)
        np.bitwise_xor.at(banks.counter, (br, bc, ci), delta)
        if banks.row_aux is not None:
            np.bitwise_xor.at(banks.row_aux, (br, bc, rows % m), delta)
    return cost_model.diagonal_update(orientation, geom, banks.bank_count)


@dataclass
class NaiveRowParity:
    """Horizontal baseline: one check bit per crossbar row."""

    n: int
    bits: np.ndarray

    @classmethod
    def encode(cls, xbar_or_cells) -> "NaiveRowParity":
        cells = xbar_or_cells.cells if isinstance(xbar_or_cells, Crossbar) else np.asarray(xbar_or_cells)
        return cls(cells.shape[0], np.bitwise_xor.reduce(cells.astype(np.uint8), axis=1))


def update_naive_horizontal(
    bank: NaiveRowParity, changes, cost_model: EccCostModel | None = None
) -> int:
    """Maintain per-row parity; constant for in-row steps, Theta(n) for
    in-column steps (a whole row of a check bit's inputs changes at once)."""
    cost_model = cost_model or EccCostModel()
    rows, _cols, delta, orientation = _normalize_changes(changes)
    if rows.size:
        np.bitwise_xor.at(bank.bits, rows, delta)
    return cost_model.naive_update(orientation, bank.n)


# -- verification and correction ---------------------------------------------


@dataclass
class EccReport:
    corrected: list[tuple[int, int]] = field(default_factory=list)
    ambiguous: list[tuple[tuple[int, int], list[tuple[int, int]]]] = field(default_factory=list)
    uncorrectable: list[tuple[int, int]] = field(default_factory=list)
    blocks_checked: int = 0
    verify_cycles: int = 0

    @property
    def clean(self) -> bool:
        return not (self.corrected or self.ambiguous or self.uncorrectable)

    def status(self) -> str:
        if self.clean:
            return "clean"
        if self.uncorrectable:
            return "uncorrectable"
        if self.ambiguous:
            return "ambiguous"
        return "corrected"


def _failing(stored: np.ndarray, fresh: np.ndarray) -> list[int]:
    return np.nonzero(stored ^ fresh)[0].tolist()


def _decode_candidates(m: int, d: int, s: int) -> list[tuple[int, int]]:
    # enumeration keeps even/odd-m behavior obviously right; m <= ~32 in practice
    return [
        (r, c)
        for r in range(m)
        for c in range(m)
        if (c - r) % m == d and (c + r) % m == s
    ]


def verify_and_correct(
    xbar: Crossbar,
    banks: ParityBanks,
    geom: BlockGeometry,
    blocks: Iterable[tuple[int, int]] | None = None,
    cost_model: EccCostModel | None = None,
) -> EccReport:
    """Compare stored parities against the data; correct single flips.

    Blocks with exactly one flipped data bit are corrected in place (the
    banks were already consistent with the pre-flip data). Syndromes that
    cannot be explained by one flip are reported uncorrectable; in the
    2-bank configuration an even-m single flip decodes to two candidate
    positions and is reported ambiguous instead of corrected.
    """
    cost_model = cost_model or EccCostModel()
    m = geom.m
    fresh = encode(xbar, geom, banks.bank_count)
    if blocks is None:
        nb = geom.blocks_per_side
        blocks = [(br, bc) for br in range(nb) for bc in range(nb)]
    report = EccReport()
    for br, bc in blocks:
        report.blocks_checked += 1
        report.verify_cycles += cost_model.verify_block(geom, banks.bank_count)
        fail_l = _failing(banks.leading[br, bc], fresh.leading[br, bc])
        fail_c = _failing(banks.counter[br, bc], fresh.counter[br, bc])
        fail_r = (
            _failing(banks.row_aux[br, bc], fresh.row_aux[br, bc])
            if banks.row_aux is not None
            else None
        )
        if not fail_l and not fail_c and not fail_r:
            continue
        if banks.row_aux is not None:
            if len(fail_l) == 1 and len(fail_c) == 1 and fail_r is not None and len(fail_r) == 1:
                d, s, i = fail_l[0], fail_c[0], fail_r[0]
                j = (d + i) % m
                if (i + j) % m == s:
                    r, c = br * m + i, bc * m + j
                    xbar.cells[r, c] ^= 1
                    report.corrected.append((r, c))
                    continue
            report.uncorrectable.append((br, bc))
        else:
            if len(fail_l) == 1 and len(fail_c) == 1:
                cands = _decode_candidates(m, fail_l[0], fail_c[0])
                if len(cands) == 1:
                    i, j = cands[0]
                    r, c = br * m + i, bc * m + j
                    xbar.cells[r, c] ^= 1
                    report.corrected.append((r, c))
                elif len(cands) == 2:
                    abs_cands = [(br * m + i, bc * m + j) for i, j in cands]
                    report.ambiguous.append(((br, bc), abs_cands))
                else:
                    report.uncorrectable.append((br, bc))
            else:
                report.uncorrectable.append((br, bc))
    return report


# -- per-function wrapping -----------------------------------------------------


@dataclass
class EccWrappedRun:
    result: ExecutionResult
    verify_report: EccReport
    program_cycles: int
    ecc_cycles: int

    @property
    def overhead_ratio(self) -> float:
        return self.ecc_cycles / self.program_cycles if self.program_cycles else 0.0

    @property
    def total_cycles(self) -> int:
        return self.program_cycles + self.ecc_cycles


def input_blocks(
    prog: MicroProgram, geom: BlockGeometry, rows: Sequence[int] | np.ndarray, base: int = 0
) -> list[tuple[int, int]]:
    rows = np.asarray(rows)
    cols = np.array(
        [base + o for offs in prog.input_layout.values() for o in offs], dtype=np.intp
    )
    brs = np.unique(rows // geom.m)
    bcs = np.unique(cols // geom.m)
    return [(int(br), int(bc)) for br in brs for bc in bcs]


def wrap_function_with_ecc(
    prog: MicroProgram,
    xbar: Crossbar,
    rows: Sequence[int] | np.ndarray,
    banks: ParityBanks,
    geom: BlockGeometry,
    stream: FaultStream | None = None,
    cost_model: EccCostModel | None = None,
    base: int = 0,
) -> EccWrappedRun:
    """Verify the inputs, run the program, and keep the banks current.

    Every step's written cells are folded into the banks at the constant
    per-step cost (the extension array does this work; the total here is
    additive accounting). Raises UncorrectableEccError before executing
    anything if an input block has an unexplainable syndrome.
    """
    cost_model = cost_model or EccCostModel()
    verify_report = verify_and_correct(
        xbar, banks, geom, input_blocks(prog, geom, rows, base), cost_model
    )
    if verify_report.uncorrectable:
        raise UncorrectableEccError(verify_report)

    ecc_cycles = 0

    def on_step(changes: StepChanges) -> None:
        nonlocal ecc_cycles
        ecc_cycles += update_incremental(banks, changes, cost_model)

    result = execute(prog, xbar, rows, stream, base=base, on_step=on_step)
    return EccWrappedRun(
        result=result,
        verify_report=verify_report,
        program_cycles=result.cycles,
        ecc_cycles=ecc_cycles,
    )
