"""pimrel: reliability simulation for memristive processing-in-memory.

Gate-level crossbar simulation with stateful logic, soft-error
injection, diagonal-parity ECC, in-memory triple modular redundancy,
and Monte Carlo / closed-form reliability analytics.
"""

from .analytics import (
    MonteCarloResult,
    NnModelParams,
    estimate_p_mult,
    nn_failure_probability,
    sweep,
    weight_degradation,
    wilson_interval,
)
from .crossbar import Crossbar, GateKind, GateStep, InitStep
from .ecc import (
    BlockGeometry,
    EccCostModel,
    ParityBanks,
    UncorrectableEccError,
    encode,
    update_incremental,
    verify_and_correct,
    wrap_function_with_ecc,
)
from .faults import FaultConfig, FaultStream
from .microcode import (
    ExecutionResult,
    MicroProgram,
    build_full_adder,
    build_multiplier,
    execute,
    load_inputs,
    validate,
)
from .tmr import TmrPlan, run_tmr, vote_min3, vote_per_element_reference

__version__ = "0.1.0"
