"""Monte Carlo failure estimation and closed-form accelerator reliability.

Multiplication failure probability is estimated by running the
multiplier netlist on random inputs with direct-fault injection and
counting trials whose (voted) product differs from the true product;
logical masking is therefore emergent rather than modeled. Trials are
packed into crossbar rows so a whole block runs per simulated pass, and
each block draws from an independently derived PCG64 sub-stream, which
keeps results identical no matter how blocks are distributed over
worker processes.

The neural-accelerator projections are closed-form: a feed-forward
misclassification probability 1 - (1 - p_mask * p_mult)^M, and an
expected corrupted-weight count after T batches of per-access bit
corruption, with and without the diagonal-parity ECC. All (1-p)^K terms
go through expm1/log1p so probabilities down to 1e-12 and below stay
accurate; results under 1e-300 clamp to zero and are flagged.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .crossbar import Crossbar
from .faults import PRNG_NAME, FaultConfig, FaultStream
from .microcode import build_multiplier
from .tmr import TmrPlan, load_tmr_inputs, required_columns, rows_per_trial, run_tmr

__version__ = "0.1.0"

TINY_CLAMP = 1e-300

CSV_SCHEMA = (
    "experiment",
    "mode",
    "voting",
    "bit_width",
    "p_gate",
    "p_input",
    "trials",
    "failures",
    "p_hat",
    "ci_lo",
    "ci_hi",
    "cycles",
    "area_cells",
    "seed",
)

DEGRADATION_SCHEMA = (
    "experiment",
    "mode",
    "p_input",
    "batches",
    "expected_corrupted",
    "weight_count",
    "block_side",
    "bits_per_weight",
    "clamped",
    "seed",
)


def wilson_interval(failures: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return (0.0, 1.0)
    p = failures / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if failures == 0 else max(0.0, center - half)
    hi = 1.0 if failures == trials else min(1.0, center + half)
    return (lo, hi)


@dataclass(frozen=True)
class MonteCarloResult:
    p_gate: float
    trials: int
    failures: int
    p_mult_hat: float
    ci95: tuple[float, float]
    plan: TmrPlan
    bit_width: int
    cycles: int
    area_cells: int
    seed: int

    def row(self, experiment: str = "tmr-sweep") -> dict:
        return {
            "experiment": experiment,
            "mode": self.plan.mode,
            "voting": "none" if self.plan.mode == "none" else self.plan.voting,
            "bit_width": self.bit_width,
            "p_gate": self.p_gate,
            "p_input": 0.0,
            "trials": self.trials,
            "failures": self.failures,
            "p_hat": self.p_mult_hat,
            "ci_lo": self.ci95[0],
            "ci_hi": self.ci95[1],
            "cycles": self.cycles,
            "area_cells": self.area_cells,
            "seed": self.seed,
        }


def estimate_p_mult(
    bit_width: int,
    p_gate: float,
    trials: int,
    plan: TmrPlan = TmrPlan(),
    seed: int = 0,
    *,
    p_write: float = 0.0,
    seed_path: Sequence[int] = (),
    min_side: int = 1024,
) -> MonteCarloResult:
    """Estimate multiplication failure probability under gate faults.

    Runs `trials` random multiplications in row-parallel blocks; failure
    means the final (voted) product differs from the true product. Under
    TMR the voting gates are fault-injected too unless the plan uses
    ideal voting. Inputs are drawn uniformly per trial.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    prog = build_multiplier(bit_width)
    cfg = FaultConfig(p_gate=p_gate, p_write=p_write, seed=seed, inject_indirect=False)
    n = max(min_side, required_columns(prog, plan))
    per_trial_rows = rows_per_trial(plan)
    block = max(1, n // per_trial_rows)
    xbar = Crossbar(n)
    high = 1 << bit_width

    failures = 0
    done = 0
    block_idx = 0
    cycles = 0
    area = 0
    while done < trials:
        k = min(block, trials - done)
        stream = FaultStream.derive(cfg, *seed_path, block_idx)
        a = stream.rng.integers(0, high, size=k, dtype=np.uint64)
        b = stream.rng.integers(0, high, size=k, dtype=np.uint64)
        rows = np.arange(k)
        load_tmr_inputs(prog, xbar, rows, {"a": a, "b": b}, plan)
        res = run_tmr(prog, xbar, rows, stream, plan)
        failures += int((res.words("product") != a * b).sum())
        cycles, area = res.cycles, res.area_cells
        done += k
        block_idx += 1

    p_hat = failures / trials
    return MonteCarloResult(
        p_gate=p_gate,
        trials=trials,
        failures=failures,
        p_mult_hat=p_hat,
        ci95=wilson_interval(failures, trials),
        plan=plan,
        bit_width=bit_width,
        cycles=cycles,
        area_cells=area,
        seed=seed,
    )


# -- closed-form accelerator models ------------------------------------------


@dataclass(frozen=True)
class NnModelParams:
    """Feed-forward and weight-storage parameters of the accelerator model."""

    p_mask: float = 3e-4                  # fraction of compute errors that flip the classification
    mults_per_sample: float = 612e6       # multiplications per inference
    weight_count: float = 62.4e6          # stored weights
    batches: float = 1e3                  # accesses of every weight (time axis)
    p_input: float = 1e-9                 # per-bit corruption probability per access
    bits_per_weight: int = 32
    block_side: int = 16                  # ECC block geometry

    def __post_init__(self):
        for name in ("p_mask", "p_input"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        for name in ("mults_per_sample", "weight_count", "batches"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _clamped(x: float) -> tuple[float, bool]:
    if 0.0 < x < TINY_CLAMP:
        return 0.0, True
    return x, False


def nn_failure_probability(params: NnModelParams, p_mult: float) -> float:
    """Probability that one inference misclassifies due to compute faults.

    Exactly 1 - (1 - p_mask * p_mult)^M, via log1p/expm1. Known gap to
    digitized reference curves (e.g. 0.7368 here vs a plotted 0.8089 at
    p_mult = 7.27e-6): the reference was evidently produced from
    unrounded failure estimates, so the formula output is reported as is.
    """
    x = params.p_mask * p_mult
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    val = -math.expm1(params.mults_per_sample * math.log1p(-x))
    return _clamped(val)[0]


@dataclass(frozen=True)
class DegradationPoint:
    expected_corrupted: float
    per_batch_q: float
    clamped: bool


def per_batch_weight_corruption(params: NnModelParams, ecc: str = "none") -> float:
    """Probability one batch leaves a given weight corrupted.

    Baseline: any of its bits flips, q = 1 - (1 - p)^b. With diagonal
    ECC, a single flip anywhere in the weight's block is corrected on
    the next access, so residual corruption needs a flip in the weight
    and at least one more flip in its m*m block within the same batch:
    q = [1 - (1 - p)^b] - b*p*(1 - p)^(m^2 - 1).
    """
    p = params.p_input
    b = params.bits_per_weight
    if p <= 0.0:
        return 0.0
    base = -math.expm1(b * math.log1p(-p))
    if ecc == "none":
        return base
    if ecc == "diagonal":
        cells = params.block_side * params.block_side
        return base - b * p * math.exp((cells - 1) * math.log1p(-p))
    raise ValueError(f"ecc must be 'none' or 'diagonal', got {ecc!r}")


def degradation_point(params: NnModelParams, ecc: str = "none") -> DegradationPoint:
    q = per_batch_weight_corruption(params, ecc)
    if q <= 0.0:
        return DegradationPoint(0.0, 0.0, False)
    frac = -math.expm1(params.batches * math.log1p(-q))
    val, clamped = _clamped(params.weight_count * frac)
    return DegradationPoint(val, q, clamped)


def weight_degradation(params: NnModelParams, ecc: str = "none") -> float:
    """Expected number of corrupted weights after `params.batches` batches."""
    return degradation_point(params, ecc).expected_corrupted


def degradation_oracle(
    weight_count: int,
    p_input: float,
    batches: int,
    reps: int,
    *,
    bits_per_weight: int = 32,
    block_side: int = 16,
    ecc: str = "none",
    seed: int = 0,
) -> np.ndarray:
    """Bit-level Bernoulli simulation of weight corruption (per-rep counts).

    Corruption is absorbing: once a batch corrupts a weight it stays
    corrupted. Under ECC a batch corrupts a weight only if the weight
    flips and its block collects at least two flips in that batch.
    """
    cells = block_side * block_side
    weights_per_block = cells // bits_per_weight
    if weight_count % weights_per_block:
        raise ValueError(f"weight_count must be a multiple of {weights_per_block}")
    n_blocks = weight_count // weights_per_block
    block_of_weight = np.repeat(np.arange(n_blocks), weights_per_block)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
    counts = np.empty(reps, dtype=np.int64)
    chunk = max(1, 4_000_000 // (weight_count * bits_per_weight))
    done = 0
    while done < reps:
        k = min(chunk, reps - done)
        corrupted = np.zeros((k, weight_count), dtype=bool)
        for _ in range(batches):
            flips = rng.random((k, weight_count, bits_per_weight)) < p_input
            weight_hit = flips.any(axis=2)
            if ecc == "none":
                corrupted |= weight_hit
            else:
                block_flips = flips.reshape(k, n_blocks, cells).sum(axis=2)
                corrupted |= weight_hit & (block_flips[:, block_of_weight] >= 2)
        counts[done : done + k] = corrupted.sum(axis=1)
        done += k
    return counts


# -- sweep driver --------------------------------------------------------------


def sweep_grid(
    bit_width: int,
    p_gates: Sequence[float],
    plans: Sequence[TmrPlan],
    trials: int,
    seed: int,
) -> list[tuple[int, TmrPlan, float]]:
    grid = []
    idx = 0
    for plan in plans:
        for p in p_gates:
            grid.append((idx, plan, float(p)))
            idx += 1
    return grid


def run_sweep_point(args: tuple) -> dict:
    idx, plan, p_gate, bit_width, trials, seed, experiment = args
    result = estimate_p_mult(
        bit_width, p_gate, trials, plan, seed, seed_path=(idx,)
    )
    return result.row(experiment)


def sweep(
    bit_width: int,
    p_gates: Sequence[float],
    plans: Sequence[TmrPlan],
    trials: int,
    seed: int,
    jobs: int = 1,
    experiment: str = "tmr-sweep",
) -> list[dict]:
    """One Monte Carlo estimate per (plan, p_gate) grid point.

    Each point derives its fault stream from (seed, grid index), so the
    output is identical for any job count; rows come back in grid order.
    """
    grid = sweep_grid(bit_width, p_gates, plans, trials, seed)
    if not grid:
        return []
    tasks = [(idx, plan, p, bit_width, trials, seed, experiment) for idx, plan, p in grid]
    if jobs <= 1 or len(tasks) == 1:
        return [run_sweep_point(t) for t in tasks]
    import concurrent.futures

    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        rows = list(pool.map(run_sweep_point, tasks))
    return rows


# -- report emission -----------------------------------------------------------


def _format_value(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def report_header(seed, config: dict) -> list[str]:
    return [
        f"# pimrel {__version__}",
        f"# seed={seed} config_sha256={config_digest(config)} prng={PRNG_NAME} numpy={np.__version__}",
    ]


def rows_to_csv(rows: list[dict], schema: Sequence[str], seed, config: dict) -> str:
    lines = report_header(seed, config)
    lines.append(",".join(schema))
    for row in rows:
        lines.append(",".join(_format_value(row.get(col, "")) for col in schema))
    return "\n".join(lines) + "\n"


def rows_to_json(rows: list[dict], schema: Sequence[str], seed, config: dict) -> str:
    payload = {
        "meta": {
            "tool": f"pimrel {__version__}",
            "seed": seed,
            "config_sha256": config_digest(config),
            "prng": PRNG_NAME,
            "numpy": np.__version__,
        },
        "rows": [{col: row.get(col, None) for col in schema} for row in rows],
    }
    return json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n"
