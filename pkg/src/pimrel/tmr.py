"""In-memory triple modular redundancy around any micro-program.

Three execution strategies trade latency, area, and throughput:

* serial: run the program three times in place, reusing intermediate
  cells (every gate re-inits its output), with the second and third
  runs' output cells relocated next to the first. Latency roughly
  triples; area grows only by the two extra output copies.
* parallel: three copies run concurrently in three row-partition
  segments, one composite step per program step. Latency stays at one
  pass plus voting; area triples since nothing can be shared across
  partitions.
* semi: the function is repeated across extra row groups instead of
  partitions, cutting throughput by 3. Each trial occupies a 5-row
  group (3 copies, a minority row, a vote row) so voting runs as
  column-partition-parallel steps.

Voting is per output bit: majority realized as NOT(Minority3) across all
lanes in parallel, itself fault-prone under direct-error injection. The
"ideal" voting mode runs the identical gates with fault injection
suppressed, isolating the voting stage as a reliability bottleneck while
keeping cycle accounting comparable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .crossbar import (
    IN_COLUMN,
    IN_ROW,
    Crossbar,
    GateKind,
    GateStep,
    InitStep,
)
from .faults import FaultStream
from .microcode import MicroProgram, ProgramError, execute, load_inputs

MODES = ("none", "serial", "parallel", "semi")
VOTINGS = ("min3", "ideal")
SEMI_STRIDE = 5  # copy0, copy1, copy2, minority row, vote row


class TmrError(ValueError):
    pass


@dataclass(frozen=True)
class TmrPlan:
    mode: str = "none"
    voting: str = "min3"

    def __post_init__(self):
        if self.mode not in MODES:
            raise TmrError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.voting not in VOTINGS:
            raise TmrError(f"voting must be one of {VOTINGS}, got {self.voting!r}")

    def label(self) -> str:
        return self.mode if self.mode == "none" else f"{self.mode}/{self.voting}"

    def throughput_divisor(self) -> int:
        return 3 if self.mode == "semi" else 1


@dataclass
class TmrResult:
    outputs: dict[str, np.ndarray]
    cycles: int              # execution + voting; setup reported separately
    setup_cycles: int
    baseline_cycles: int     # one program pass (L)
    vote_cycles: int         # voting phase incl. any partition merge (V)
    program_area: int        # per-lane cells across all copies
    vote_area: int
    plan: TmrPlan
    copies: list[dict[str, np.ndarray]] | None = None
    copy_fault_lanes: list[np.ndarray] | None = None
    vote_fault_lanes: np.ndarray | None = None

    @property
    def area_cells(self) -> int:
        return self.program_area + self.vote_area

    def words(self, name: str) -> np.ndarray:
        bits = self.outputs[name].astype(np.uint64)
        shifts = np.arange(bits.shape[1], dtype=np.uint64)
        return (bits << shifts).sum(axis=1, dtype=np.uint64)


def required_columns(prog: MicroProgram, plan: TmrPlan) -> int:
    out_w = prog.output_width()
    if plan.mode == "none":
        return prog.span
    if plan.mode == "serial":
        return prog.span + 4 * out_w  # 2 copy regions + minority + vote cells
    if plan.mode == "parallel":
        return 3 * prog.span + 2 * out_w
    return prog.span  # semi votes within the output columns, extra rows instead


def rows_per_trial(plan: TmrPlan) -> int:
    return SEMI_STRIDE if plan.mode == "semi" else 1


def _flat_outputs(prog: MicroProgram) -> list[tuple[str, int, int]]:
    """(name, bit index within word, cell offset) in a fixed order."""
    flat = []
    for name, offs in prog.output_layout.items():
        for k, off in enumerate(offs):
            flat.append((name, k, off))
    return flat


def _split_outputs(prog: MicroProgram, bits: np.ndarray) -> dict[str, np.ndarray]:
    out = {}
    idx = 0
    for name, offs in prog.output_layout.items():
        out[name] = bits[:, idx : idx + len(offs)]
        idx += len(offs)
    return out


def vote_min3(
    xbar: Crossbar,
    rows,
    copy_bases: Sequence[int],
    width: int,
    minority_base: int,
    out_base: int,
    stream: FaultStream | None = None,
) -> tuple[int, np.ndarray]:
    """Per-bit majority of three equally-shaped copies, NOT(MIN3) per column.

    All selected rows vote in parallel; cost is 2*width gate steps plus
    two batched INIT steps. Returns (cycles, per-lane vote-fault mask).
    """
    if len(copy_bases) != 3:
        raise TmrError("exactly three copies are required")
    lanes = np.asarray(rows, dtype=np.intp).ravel()
    start = xbar.cycle_count
    fault_lanes = np.zeros(lanes.size, dtype=bool)
    minority_cols = tuple(minority_base + k for k in range(width))
    out_cols = tuple(out_base + k for k in range(width))
    xbar.apply_init_step(InitStep(IN_ROW, minority_cols, lanes), stream)
    for k in range(width):
        ch = xbar.apply_gate_step(
            GateStep(
                GateKind.MIN3,
                IN_ROW,
                tuple(b + k for b in copy_bases),
                minority_base + k,
                lanes,
            ),
            stream,
        )
        if ch.faulted is not None:
            fault_lanes |= ch.faulted
    xbar.apply_init_step(InitStep(IN_ROW, out_cols, lanes), stream)
    for k in range(width):
        ch = xbar.apply_gate_step(
            GateStep(GateKind.NOT, IN_ROW, (minority_base + k,), out_base + k, lanes),
            stream,
        )
        if ch.faulted is not None:
            fault_lanes |= ch.faulted
    return xbar.cycle_count - start, fault_lanes


def vote_per_element_reference(copies: Sequence[int]):
    """Whole-word majority: the word agreed by >= 2 copies, else None."""
    a, b, c = copies
    if a == b or a == c:
        return a
    if b == c:
        return b
    return None


def vote_per_bit(a: int, b: int, c: int) -> int:
    return (a & b) | (a & c) | (b & c)


def load_tmr_inputs(
    prog: MicroProgram,
    xbar: Crossbar,
    rows,
    values: dict[str, np.ndarray | int],
    plan: TmrPlan,
    stream: FaultStream | None = None,
) -> None:
    """Pre-load inputs everywhere the chosen mode needs them."""
    lanes = np.asarray(rows, dtype=np.intp).ravel()
    if plan.mode == "parallel":
        for copy in range(3):
            load_inputs(prog, xbar, lanes, values, base=copy * prog.span, stream=stream)
    elif plan.mode == "semi":
        for copy in range(3):
            load_inputs(prog, xbar, lanes * SEMI_STRIDE + copy, values, stream=stream)
    else:
        load_inputs(prog, xbar, lanes, values, stream=stream)


def run_tmr(
    prog: MicroProgram,
    xbar: Crossbar,
    rows,
    stream: FaultStream | None = None,
    plan: TmrPlan = TmrPlan(),
) -> TmrResult:
    """Execute a program under the chosen redundancy plan and vote.

    Inputs must be pre-loaded (see load_tmr_inputs). Reported cycles
    cover execution and voting; partition configuration performed before
    execution is returned as setup_cycles.
    """
    lanes = np.asarray(rows, dtype=np.intp).ravel()
    out_w = prog.output_width()
    need = required_columns(prog, plan)
    if need > xbar.n:
        raise TmrError(f"{plan.mode} TMR needs {need} columns, crossbar has {xbar.n}")
    vote_stream = None if plan.voting == "ideal" else stream

    if plan.mode == "none":
        res = execute(prog, xbar, lanes, stream)
        return TmrResult(
            outputs=res.outputs,
            cycles=res.cycles,
            setup_cycles=0,
            baseline_cycles=res.cycles,
            vote_cycles=0,
            program_area=prog.cells_per_row,
            vote_area=0,
            plan=plan,
            copy_fault_lanes=[res.fault_lanes] if res.fault_lanes is not None else None,
        )

    if plan.mode == "serial":
        return _run_serial(prog, xbar, lanes, stream, vote_stream, plan, out_w)
    if plan.mode == "parallel":
        return _run_parallel(prog, xbar, lanes, stream, vote_stream, plan, out_w)
    return _run_semi(prog, xbar, lanes, stream, vote_stream, plan, out_w)


def _run_serial(prog, xbar, lanes, stream, vote_stream, plan, out_w) -> TmrResult:
    flat = _flat_outputs(prog)
    copy_bases = [None, prog.span, prog.span + out_w]
    minority_base = prog.span + 2 * out_w
    vote_base = prog.span + 3 * out_w

    progs = [prog]
    for base in copy_bases[1:]:
        mapping = {off: base + k for k, (_n, _i, off) in enumerate(flat)}
        progs.append(prog.remap_cells(mapping))

    start = xbar.cycle_count
    results = [execute(p, xbar, lanes, stream) for p in progs]
    L = results[0].cycles

    # copy k's output bit columns, in flat output order
    def copy_cols(k: int) -> list[int]:
        if k == 0:
            return [off for _n, _i, off in flat]
        return [copy_bases[k] + i for i in range(out_w)]

    vote_cycles, vote_faults = _vote_flat(
        xbar, lanes, [copy_cols(k) for k in range(3)], minority_base, vote_base, vote_stream
    )
    cycles = xbar.cycle_count - start
    voted = np.stack([xbar.cells[lanes, vote_base + i] for i in range(out_w)], axis=1)
    return TmrResult(
        outputs=_split_outputs(prog, voted),
        cycles=cycles,
        setup_cycles=0,
        baseline_cycles=L,
        vote_cycles=vote_cycles,
        program_area=prog.cells_per_row + 2 * out_w,
        vote_area=2 * out_w,
        plan=plan,
        copies=[r.outputs for r in results],
        copy_fault_lanes=[r.fault_lanes for r in results],
        vote_fault_lanes=vote_faults,
    )


def _run_parallel(prog, xbar, lanes, stream, vote_stream, plan, out_w) -> TmrResult:
    S = prog.span
    bases = (0, S, 2 * S)
    setup_start = xbar.cycle_count
    xbar.set_partitions((S, 2 * S), xbar.col_partitions)
    setup_cycles = xbar.cycle_count - setup_start

    start = xbar.cycle_count
    fault_lanes = [np.zeros(lanes.size, dtype=bool) for _ in range(3)]
    for step in prog.steps:
        if step.gate is None:
            composite = [
                InitStep(IN_ROW, tuple(b + o for o in step.outputs), lanes) for b in bases
            ]
        else:
            composite = [
                GateStep(
                    step.gate,
                    IN_ROW,
                    tuple(b + o for o in step.inputs),
                    b + step.outputs[0],
                    lanes,
                )
                for b in bases
            ]
        changes = xbar.apply_parallel_partition_steps(composite, stream)
        if step.gate is not None:
            for copy, ch in enumerate(changes):
                if ch.faulted is not None:
                    fault_lanes[copy] |= ch.faulted
    L = xbar.cycle_count - start

    vote_start = xbar.cycle_count
    xbar.set_partitions((), xbar.col_partitions)  # merge segments to vote
    flat = _flat_outputs(prog)
    copy_cols = [[b + off for _n, _i, off in flat] for b in bases]
    minority_base = 3 * S
    vote_base = 3 * S + out_w
    _cycles, vote_faults = _vote_flat(
        xbar, lanes, copy_cols, minority_base, vote_base, vote_stream
    )
    vote_cycles = xbar.cycle_count - vote_start

    voted = np.stack([xbar.cells[lanes, vote_base + i] for i in range(out_w)], axis=1)
    copies = [
        _split_outputs(prog, np.stack([xbar.cells[lanes, c] for c in cols], axis=1))
        for cols in copy_cols
    ]
    return TmrResult(
        outputs=_split_outputs(prog, voted),
        cycles=L + vote_cycles,
        setup_cycles=setup_cycles,
        baseline_cycles=L,
        vote_cycles=vote_cycles,
        program_area=3 * prog.cells_per_row,
        vote_area=2 * out_w,
        plan=plan,
        copies=copies,
        copy_fault_lanes=fault_lanes,
        vote_fault_lanes=vote_faults,
    )


def _run_semi(prog, xbar, lanes, stream, vote_stream, plan, out_w) -> TmrResult:
    if lanes.size and (lanes.max() + 1) * SEMI_STRIDE > xbar.n:
        raise TmrError(
            f"semi TMR needs {SEMI_STRIDE} rows per trial; trial {int(lanes.max())} does not fit"
        )
    phys = np.concatenate([lanes * SEMI_STRIDE + c for c in range(3)])

    setup_start = xbar.cycle_count
    boundaries = tuple(
        b for b in range(SEMI_STRIDE, (int(lanes.max()) + 1) * SEMI_STRIDE + 1, SEMI_STRIDE)
        if b <= xbar.n - 1
    ) if lanes.size else ()
    xbar.set_partitions(xbar.row_partitions, boundaries)
    setup_cycles = xbar.cycle_count - setup_start

    start = xbar.cycle_count
    res = execute(prog, xbar, phys, stream)
    L = res.cycles

    flat = _flat_outputs(prog)
    out_cols = np.array([off for _n, _i, off in flat], dtype=np.intp)
    vote_cycles, vote_faults = _vote_semi(xbar, lanes, out_cols, vote_stream)

    minority_rows = lanes * SEMI_STRIDE + 3
    vote_rows = lanes * SEMI_STRIDE + 4
    voted = np.stack([xbar.cells[vote_rows, c] for c in out_cols], axis=1)
    copies = [
        _split_outputs(
            prog,
            np.stack([xbar.cells[lanes * SEMI_STRIDE + cpy, c] for c in out_cols], axis=1),
        )
        for cpy in range(3)
    ]
    k = lanes.size
    copy_faults = (
        [res.fault_lanes[i * k : (i + 1) * k] for i in range(3)]
        if res.fault_lanes is not None
        else None
    )
    return TmrResult(
        outputs=_split_outputs(prog, voted),
        cycles=L + vote_cycles,
        setup_cycles=setup_cycles,
        baseline_cycles=L,
        vote_cycles=vote_cycles,
        program_area=3 * prog.cells_per_row,
        vote_area=2 * out_w,
        plan=plan,
        copies=copies,
        copy_fault_lanes=copy_faults,
        vote_fault_lanes=vote_faults,
    )


def _vote_flat(xbar, lanes, copy_cols, minority_base, vote_base, stream) -> tuple[int, np.ndarray]:
    """In-row per-bit vote over 3 column lists aligned by output index."""
    width = len(copy_cols[0])
    start = xbar.cycle_count
    fault_lanes = np.zeros(lanes.size, dtype=bool)
    xbar.apply_init_step(
        InitStep(IN_ROW, tuple(minority_base + i for i in range(width)), lanes), stream
    )
    for i in range(width):
        ch = xbar.apply_gate_step(
            GateStep(
                GateKind.MIN3,
                IN_ROW,
                (copy_cols[0][i], copy_cols[1][i], copy_cols[2][i]),
                minority_base + i,
                lanes,
            ),
            stream,
        )
        if ch.faulted is not None:
            fault_lanes |= ch.faulted
    xbar.apply_init_step(
        InitStep(IN_ROW, tuple(vote_base + i for i in range(width)), lanes), stream
    )
    for i in range(width):
        ch = xbar.apply_gate_step(
            GateStep(GateKind.NOT, IN_ROW, (minority_base + i,), vote_base + i, lanes),
            stream,
        )
        if ch.faulted is not None:
            fault_lanes |= ch.faulted
    return xbar.cycle_count - start, fault_lanes


def _vote_semi(xbar, lanes, out_cols, stream) -> tuple[int, np.ndarray]:
    """In-column vote: each trial's 5-row group is a column segment."""
    start = xbar.cycle_count
    fault_lanes = np.zeros(lanes.size, dtype=bool)
    groups = [int(t) * SEMI_STRIDE for t in lanes]
    cols = np.asarray(out_cols, dtype=np.intp)

    inits = [InitStep(IN_COLUMN, (g + 3,), cols) for g in groups]
    xbar.apply_parallel_partition_steps(inits, stream)
    min3s = [
        GateStep(GateKind.MIN3, IN_COLUMN, (g, g + 1, g + 2), g + 3, cols) for g in groups
    ]
    changes = xbar.apply_parallel_partition_steps(min3s, stream)
    for t, ch in enumerate(changes):
        if ch.faulted is not None:
            fault_lanes[t] |= ch.faulted.any()
    inits = [InitStep(IN_COLUMN, (g + 4,), cols) for g in groups]
    xbar.apply_parallel_partition_steps(inits, stream)
    nots = [GateStep(GateKind.NOT, IN_COLUMN, (g + 3,), g + 4, cols) for g in groups]
    changes = xbar.apply_parallel_partition_steps(nots, stream)
    for t, ch in enumerate(changes):
        if ch.faulted is not None:
            fault_lanes[t] |= ch.faulted.any()
    return xbar.cycle_count - start, fault_lanes
