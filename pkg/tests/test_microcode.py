import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pimrel.crossbar import Crossbar
from pimrel.microcode import (
    MicroProgram,
    ProgramError,
    ProgramStep,
    build_full_adder,
    build_multiplier,
    dump_program,
    execute,
    load_inputs,
    parse_program,
    validate,
)
from pimrel.crossbar import GateKind


def run_program(prog, values, n=None, rows=1):
    n = n or max(64, prog.span + 8)
    xb = Crossbar(n)
    lanes = np.arange(rows)
    load_inputs(prog, xb, lanes, values)
    return execute(prog, xb, lanes), xb


class TestFullAdder:
    def test_exhaustive_against_addition(self):
        fa = build_full_adder()
        cases = np.arange(8)
        vals = {"a": cases & 1, "b": (cases >> 1) & 1, "cin": (cases >> 2) & 1}
        xb = Crossbar(16)
        load_inputs(fa, xb, cases, vals)
        res = execute(fa, xb, cases)
        total = vals["a"] + vals["b"] + vals["cin"]
        assert np.array_equal(res.outputs["sum"][:, 0], total % 2)
        assert np.array_equal(res.outputs["carry"][:, 0], total // 2)

    @pytest.mark.parametrize(
        "a,b,cin,sum_,carry", [(0, 0, 0, 0, 0), (1, 0, 1, 0, 1), (1, 1, 0, 0, 1)]
    )
    def test_single_cases(self, a, b, cin, sum_, carry):
        fa = build_full_adder()
        res, _ = run_program(fa, {"a": a, "b": b, "cin": cin})
        assert int(res.outputs["sum"][0, 0]) == sum_
        assert int(res.outputs["carry"][0, 0]) == carry

    def test_validates_clean(self):
        assert validate(build_full_adder()) == []


class TestMultiplier:
    def test_width_one_is_and(self):
        prog = build_multiplier(1)
        for a in (0, 1):
            for b in (0, 1):
                res, _ = run_program(prog, {"a": a, "b": b})
                assert int(res.words("product")[0]) == a * b

    @pytest.mark.parametrize("w", [2, 3, 4])
    def test_exhaustive_small_widths(self, w):
        prog = build_multiplier(w)
        hi = 1 << w
        a = np.repeat(np.arange(hi), hi).astype(np.uint64)
        b = np.tile(np.arange(hi), hi).astype(np.uint64)
        xb = Crossbar(max(hi * hi, prog.span + 4))
        rows = np.arange(hi * hi)
        load_inputs(prog, xb, rows, {"a": a, "b": b})
        res = execute(prog, xb, rows)
        assert np.array_equal(res.words("product"), a * b)

    def test_width_32_random(self):
        prog = build_multiplier(32)
        rng = np.random.default_rng(17)
        a = rng.integers(0, 1 << 32, size=64, dtype=np.uint64)
        b = rng.integers(0, 1 << 32, size=64, dtype=np.uint64)
        xb = Crossbar(256)
        rows = np.arange(64)
        load_inputs(prog, xb, rows, {"a": a, "b": b})
        res = execute(prog, xb, rows)
        assert np.array_equal(res.words("product"), a * b)

    @given(w=st.integers(1, 5), seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=15)
    def test_random_inputs_match_integer_product(self, w, seed):
        rng = np.random.default_rng(seed)
        prog = build_multiplier(w)
        a = int(rng.integers(0, 1 << w))
        b = int(rng.integers(0, 1 << w))
        res, _ = run_program(prog, {"a": a, "b": b})
        assert int(res.words("product")[0]) == a * b

    def test_zero_width_rejected(self):
        with pytest.raises(ProgramError):
            build_multiplier(0)

    def test_cycles_independent_of_row_count(self):
        prog = build_multiplier(4)
        r1, _ = run_program(prog, {"a": 7, "b": 9}, n=512, rows=1)
        rng = np.random.default_rng(0)
        a = rng.integers(0, 16, size=64, dtype=np.uint64)
        b = rng.integers(0, 16, size=64, dtype=np.uint64)
        xb = Crossbar(512)
        rows = np.arange(64)
        load_inputs(prog, xb, rows, {"a": a, "b": b})
        r64 = execute(prog, xb, rows)
        assert r1.cycles == r64.cycles == prog.cycles

    def test_cycles_count_inits(self):
        prog = build_multiplier(4)
        inits = sum(1 for s in prog.steps if s.gate is None)
        gates = sum(1 for s in prog.steps if s.gate is not None)
        assert prog.cycles == inits + gates
        assert inits >= gates  # every gate is preceded by its INIT


class TestValidate:
    def test_uninitialized_read(self):
        prog = MicroProgram(
            "bad", 1,
            (ProgramStep(GateKind.NOT, (5,), (6,)),),
            {"a": (0,)}, {"out": (6,)}, 7,
        )
        diags = validate(prog)
        assert any("uninitialized" in d for d in diags)

    def test_unwritten_output(self):
        prog = MicroProgram("bad", 1, (), {"a": (0,)}, {"out": (1,)}, 2)
        diags = validate(prog)
        assert any("never written" in d for d in diags)

    def test_partition_crossing(self):
        fa = build_full_adder()
        diags = validate(fa, partitions=[4])
        assert any("partition" in d for d in diags)
        assert validate(fa, partitions=[fa.span]) == []

    def test_does_not_fit_segment(self):
        prog = build_multiplier(4)
        xb = Crossbar(64, row_partitions=(8,))
        with pytest.raises(ProgramError, match="does not fit"):
            execute(prog, xb, [0])


class TestSerialization:
    def test_round_trip(self):
        for prog in (build_full_adder(), build_multiplier(3)):
            text = dump_program(prog)
            back = parse_program(text)
            assert back.steps == prog.steps
            assert back.input_layout == prog.input_layout
            assert back.output_layout == prog.output_layout
            assert back.cells_per_row == prog.cells_per_row

    def test_step_line_format(self):
        text = dump_program(build_full_adder())
        gate_lines = [l for l in text.splitlines() if l.startswith("STEP MIN3")]
        assert gate_lines[0].startswith("STEP MIN3 in-row in=0,1,2 out=")


class TestRemap:
    def test_relocated_outputs_behave_identically(self):
        prog = build_multiplier(3)
        out = prog.output_layout["product"]
        mapping = {o: prog.span + i for i, o in enumerate(out)}
        moved = prog.remap_cells(mapping)
        assert validate(moved) == []
        r1, _ = run_program(prog, {"a": 5, "b": 6})
        r2, _ = run_program(moved, {"a": 5, "b": 6})
        assert int(r1.words("product")[0]) == int(r2.words("product")[0]) == 30

    def test_remap_rejects_busy_target(self):
        prog = build_multiplier(3)
        out = prog.output_layout["product"][0]
        with pytest.raises(ProgramError, match="already in use"):
            prog.remap_cells({out: 0})
