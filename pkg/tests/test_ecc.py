import numpy as np
import pytest

from pimrel.crossbar import IN_COLUMN, IN_ROW, Crossbar, GateKind, GateStep
from pimrel.ecc import (
    BlockGeometry,
    EccCostModel,
    EccError,
    NaiveRowParity,
    UncorrectableEccError,
    encode,
    update_incremental,
    update_naive_horizontal,
    verify_and_correct,
    wrap_function_with_ecc,
)
from pimrel.microcode import build_multiplier, load_inputs


def python_parity_oracle(cells, m, banks=3):
    """Plain double-loop recompute, independent of the numpy encode path."""
    n = cells.shape[0]
    nb = n // m
    lead = np.zeros((nb, nb, m), dtype=np.uint8)
    ctr = np.zeros((nb, nb, m), dtype=np.uint8)
    row = np.zeros((nb, nb, m), dtype=np.uint8)
    for r in range(n):
        for c in range(n):
            br, bc, i, j = r // m, c // m, r % m, c % m
            bit = int(cells[r, c])
            lead[br, bc, (j - i) % m] ^= bit
            ctr[br, bc, (j + i) % m] ^= bit
            row[br, bc, i] ^= bit
    return lead, ctr, (row if banks == 3 else None)


def random_crossbar(n, seed=0):
    xb = Crossbar(n)
    rng = np.random.default_rng(seed)
    xb.cells[:] = rng.integers(0, 2, (n, n), dtype=np.uint8)
    return xb


class TestEncode:
    def test_all_zero(self):
        geom = BlockGeometry(32, 16)
        banks = encode(Crossbar(32), geom)
        assert not banks.leading.any() and not banks.counter.any()
        assert not banks.row_aux.any()

    def test_single_one_at_block_origin(self):
        geom = BlockGeometry(32, 16)
        xb = Crossbar(32)
        xb.cells[0, 0] = 1
        banks = encode(xb, geom)
        assert banks.leading[0, 0, 0] == 1 and banks.leading.sum() == 1
        assert banks.counter[0, 0, 0] == 1 and banks.counter.sum() == 1
        assert banks.row_aux[0, 0, 0] == 1 and banks.row_aux.sum() == 1

    def test_random_matches_python_oracle(self):
        geom = BlockGeometry(32, 16)
        xb = random_crossbar(32, seed=2)
        banks = encode(xb, geom)
        lead, ctr, row = python_parity_oracle(xb.cells, 16)
        assert np.array_equal(banks.leading, lead)
        assert np.array_equal(banks.counter, ctr)
        assert np.array_equal(banks.row_aux, row)

    def test_geometry_validation(self):
        with pytest.raises(EccError):
            BlockGeometry(32, 5)
        with pytest.raises(EccError):
            BlockGeometry(32, 1)


@pytest.mark.parametrize("m", [3, 4, 16, 17])
def test_column_distinctness(m):
    # the m cells of one column map to m distinct indices in each bank,
    # which is what makes the parallel update conflict-free
    for j in range(m):
        leading = {(j - i) % m for i in range(m)}
        counter = {(j + i) % m for i in range(m)}
        rows = {i for i in range(m)}
        assert len(leading) == len(counter) == len(rows) == m


class TestIncrementalUpdate:
    def test_noop_change_keeps_banks(self):
        geom = BlockGeometry(16, 16)
        xb = random_crossbar(16, seed=3)
        banks = encode(xb, geom)
        before = banks.leading.copy()
        update_incremental(banks, [(2, 7, 1, 1), (3, 7, 0, 0)])
        assert np.array_equal(banks.leading, before)

    def test_linearity_over_random_steps(self):
        geom = BlockGeometry(64, 16)
        xb = random_crossbar(64, seed=4)
        banks = encode(xb, geom)
        rng = np.random.default_rng(7)
        for _ in range(300):
            orientation = IN_ROW if rng.random() < 0.5 else IN_COLUMN
            offs = rng.choice(64, size=3, replace=False)
            step = GateStep(
                GateKind.NOR2, orientation, tuple(offs[:2]), int(offs[2]), np.arange(64)
            )
            update_incremental(banks, xb.apply_gate_step(step))
        fresh = encode(xb, geom)
        assert np.array_equal(banks.leading, fresh.leading)
        assert np.array_equal(banks.counter, fresh.counter)
        assert np.array_equal(banks.row_aux, fresh.row_aux)

    def test_mixed_change_list_rejected(self):
        geom = BlockGeometry(16, 16)
        banks = encode(Crossbar(16), geom)
        with pytest.raises(EccError, match="mixes rows and columns"):
            update_incremental(banks, [(0, 1, 0, 1), (1, 2, 0, 1)])

    def test_cost_constant_in_n_both_orientations(self):
        cm = EccCostModel()
        costs_row = {cm.diagonal_update(IN_ROW, BlockGeometry(n, 16)) for n in (16, 32, 64)}
        costs_col = {cm.diagonal_update(IN_COLUMN, BlockGeometry(n, 16)) for n in (16, 32, 64)}
        assert len(costs_row) == 1 and len(costs_col) == 1


class TestNaiveParity:
    def test_in_row_constant_cost(self):
        cm = EccCostModel()
        assert len({cm.naive_update(IN_ROW, n) for n in (16, 32, 64)}) == 1

    def test_in_column_cost_ratio_exactly_four(self):
        cm = EccCostModel()
        assert cm.naive_update(IN_COLUMN, 64) / cm.naive_update(IN_COLUMN, 16) == 4.0

    def test_linearity(self):
        xb = random_crossbar(32, seed=5)
        bank = NaiveRowParity.encode(xb)
        rng = np.random.default_rng(6)
        for _ in range(100):
            orientation = IN_ROW if rng.random() < 0.5 else IN_COLUMN
            offs = rng.choice(32, size=2, replace=False)
            step = GateStep(GateKind.NOT, orientation, (int(offs[0]),), int(offs[1]), np.arange(32))
            update_naive_horizontal(bank, xb.apply_gate_step(step))
        assert np.array_equal(bank.bits, NaiveRowParity.encode(xb).bits)

    def test_noop_change_zero_flips(self):
        bank = NaiveRowParity.encode(Crossbar(16))
        before = bank.bits.copy()
        update_naive_horizontal(bank, [(3, 4, 1, 1)])
        assert np.array_equal(bank.bits, before)


class TestCorrection:
    def test_every_single_flip_corrected(self):
        geom = BlockGeometry(16, 16)
        xb = random_crossbar(16, seed=8)
        original = xb.cells.copy()
        banks = encode(xb, geom)
        for r in range(16):
            for c in range(16):
                xb.cells[r, c] ^= 1
                report = verify_and_correct(xb, banks, geom)
                assert report.corrected == [(r, c)], (r, c)
                assert np.array_equal(xb.cells, original)

    def test_clean_report(self):
        geom = BlockGeometry(32, 16)
        xb = random_crossbar(32, seed=9)
        banks = encode(xb, geom)
        report = verify_and_correct(xb, banks, geom)
        assert report.clean and report.status() == "clean"
        assert report.blocks_checked == 4

    def test_adversarial_double_flip_uncorrectable(self):
        # (0,0) and (8,8) share both diagonals for m=16: the diagonal
        # banks cancel and only the row bank exposes the corruption
        geom = BlockGeometry(16, 16)
        xb = random_crossbar(16, seed=10)
        banks = encode(xb, geom)
        xb.cells[0, 0] ^= 1
        xb.cells[8, 8] ^= 1
        report = verify_and_correct(xb, banks, geom)
        assert report.status() == "uncorrectable"
        assert report.uncorrectable == [(0, 0)]

    def test_two_bank_even_m_is_ambiguous(self):
        geom = BlockGeometry(16, 16)
        xb = random_crossbar(16, seed=11)
        banks = encode(xb, geom, banks=2)
        xb.cells[3, 5] ^= 1
        report = verify_and_correct(xb, banks, geom)
        assert report.status() == "ambiguous"
        ((_, cands),) = report.ambiguous
        assert set(cands) == {(3, 5), (11, 13)}

    def test_two_bank_silent_on_adversarial_pair(self):
        # the recompute oracle shows the pair is invisible to 2 banks
        geom = BlockGeometry(16, 16)
        xb = random_crossbar(16, seed=12)
        original = xb.cells.copy()
        banks = encode(xb, geom, banks=2)
        xb.cells[0, 0] ^= 1
        xb.cells[8, 8] ^= 1
        report = verify_and_correct(xb, banks, geom)
        assert report.clean  # syndrome empty
        assert not np.array_equal(xb.cells, original)  # yet data is corrupt

    def test_two_bank_odd_m_corrects_uniquely(self):
        geom = BlockGeometry(15, 5)
        xb = random_crossbar(15, seed=13)
        original = xb.cells.copy()
        banks = encode(xb, geom, banks=2)
        xb.cells[7, 9] ^= 1
        report = verify_and_correct(xb, banks, geom)
        assert report.corrected == [(7, 9)]
        assert np.array_equal(xb.cells, original)

    def test_three_bank_resolves_even_m_single_flip(self):
        geom = BlockGeometry(16, 16)
        xb = random_crossbar(16, seed=14)
        original = xb.cells.copy()
        banks = encode(xb, geom, banks=3)
        xb.cells[3, 5] ^= 1
        report = verify_and_correct(xb, banks, geom)
        assert report.corrected == [(3, 5)]
        assert np.array_equal(xb.cells, original)


class TestWrappedExecution:
    def setup_method(self):
        self.prog = build_multiplier(4)
        self.geom = BlockGeometry(64, 16)

    def _loaded(self, seed=0, rows=8):
        xb = Crossbar(64)
        rng = np.random.default_rng(seed)
        a = rng.integers(0, 16, size=rows, dtype=np.uint64)
        b = rng.integers(0, 16, size=rows, dtype=np.uint64)
        load_inputs(self.prog, xb, np.arange(rows), {"a": a, "b": b})
        banks = encode(xb, self.geom)
        return xb, banks, a, b

    def test_fault_free_run_clean_and_banks_consistent(self):
        xb, banks, a, b = self._loaded()
        run = wrap_function_with_ecc(self.prog, xb, np.arange(8), banks, self.geom)
        assert run.verify_report.clean
        assert np.array_equal(run.result.words("product"), a * b)
        fresh = encode(xb, self.geom)
        assert np.array_equal(banks.leading, fresh.leading)
        assert np.array_equal(banks.counter, fresh.counter)
        assert np.array_equal(banks.row_aux, fresh.row_aux)

    def test_single_input_flip_corrected_then_runs(self):
        xb, banks, a, b = self._loaded(seed=1)
        xb.cells[2, 3] ^= 1  # inside the input block
        run = wrap_function_with_ecc(self.prog, xb, np.arange(8), banks, self.geom)
        assert run.verify_report.corrected == [(2, 3)]
        assert np.array_equal(run.result.words("product"), a * b)

    def test_uncorrectable_input_aborts(self):
        xb, banks, a, b = self._loaded(seed=2)
        xb.cells[0, 1] ^= 1
        xb.cells[1, 2] ^= 1  # two flips in one input block
        with pytest.raises(UncorrectableEccError):
            wrap_function_with_ecc(self.prog, xb, np.arange(8), banks, self.geom)

    def test_overhead_ratio_reported(self):
        xb, banks, a, b = self._loaded(seed=3)
        run = wrap_function_with_ecc(self.prog, xb, np.arange(8), banks, self.geom)
        assert run.program_cycles == self.prog.cycles
        assert run.ecc_cycles == self.prog.cycles * EccCostModel().diagonal_update(IN_ROW, self.geom)
        assert run.overhead_ratio == run.ecc_cycles / run.program_cycles
        assert run.total_cycles == run.program_cycles + run.ecc_cycles
