"""Stochastic soft-error injection with reproducible seeding.

Two fault families are modeled. Direct faults strike an operation as it
executes: a gate produces the flipped output bit with probability
``p_gate`` (independently per selected lane), and a write stores the
flipped bit with probability ``p_write``. Indirect faults corrupt stored
bits as a side effect of access, flipping each accessed bit independently
with probability ``p_input``; a per-time-unit drift knob is provided for
generality.

All randomness flows through numpy's PCG64 generator. Reports embed the
generator name and numpy version so runs can be reproduced bit-exactly.
Sub-streams for independent trial blocks are derived from
``SeedSequence([seed, *path])``, which keeps merging order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PRNG_NAME = "PCG64"

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class FaultConfig:
    p_gate: float = 0.0
    p_write: float = 0.0
    p_input: float = 0.0
    p_drift: float = 0.0
    seed: int = 0
    inject_direct: bool = True
    inject_indirect: bool = True

    def __post_init__(self):
        for name in ("p_gate", "p_write", "p_input", "p_drift"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {p}")

    def fault_free(self) -> bool:
        direct = self.inject_direct and (self.p_gate > 0 or self.p_write > 0)
        indirect = self.inject_indirect and (self.p_input > 0 or self.p_drift > 0)
        return not (direct or indirect)


class FaultStream:
    """One simulation's fault source: a FaultConfig plus a PCG64 stream.

    A stream is owned by a single simulation. Parallel trial blocks must
    use `derive` with distinct paths rather than sharing one stream.
    """

    def __init__(self, config: FaultConfig, generator: np.random.Generator):
        self.config = config
        self.rng = generator
        self.flips_injected = 0

    @classmethod
    def from_config(cls, config: FaultConfig, *path: int) -> "FaultStream":
        return cls.derive(config, *path)

    @classmethod
    def derive(cls, config: FaultConfig, *path: int) -> "FaultStream":
        """Sub-stream for (seed, *path); documented derivation for workers."""
        entropy = [int(config.seed) & _U64, *(int(p) & _U64 for p in path)]
        seq = np.random.SeedSequence(entropy)
        return cls(config, np.random.Generator(np.random.PCG64(seq)))

    def _bernoulli(self, p: float, shape) -> np.ndarray | None:
        if p <= 0.0:
            return None
        if p >= 1.0:
            flips = np.ones(shape, dtype=np.uint8)
        else:
            flips = (self.rng.random(shape) < p).astype(np.uint8)
        self.flips_injected += int(flips.sum())
        return flips

    def gate_flips(self, n_lanes: int) -> np.ndarray | None:
        """Per-lane direct-fault mask for one gate step (None = no flips)."""
        if not self.config.inject_direct:
            return None
        return self._bernoulli(self.config.p_gate, n_lanes)

    def write_flips(self, shape) -> np.ndarray | None:
        if not self.config.inject_direct:
            return None
        return self._bernoulli(self.config.p_write, shape)

    def access_flips(self, shape) -> np.ndarray | None:
        if not self.config.inject_indirect:
            return None
        return self._bernoulli(self.config.p_input, shape)

    def drift_flips(self, shape, time_units: int = 1) -> np.ndarray | None:
        """Flip mask for `time_units` of storage time at p_drift per unit."""
        if not self.config.inject_indirect or self.config.p_drift <= 0:
            return None
        p = -np.expm1(time_units * np.log1p(-self.config.p_drift))
        return self._bernoulli(float(p), shape)


def maybe_corrupt_gate(stream: FaultStream, correct_bits: np.ndarray) -> np.ndarray:
    """Return gate output bits after per-lane direct-fault injection."""
    bits = np.asarray(correct_bits, dtype=np.uint8)
    flips = stream.gate_flips(bits.shape[0] if bits.ndim else 1)
    if flips is None:
        return bits.copy()
    return bits ^ flips.reshape(bits.shape)


def corrupt_on_access(stream: FaultStream, bits: np.ndarray) -> np.ndarray:
    """Return stored bits after per-access indirect corruption."""
    bits = np.asarray(bits, dtype=np.uint8)
    flips = stream.access_flips(bits.shape)
    if flips is None:
        return bits.copy()
    return bits ^ flips
