"""Depolarising noise channels and the derived per-operation error rates."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .pauli import PauliOperator

# single-qubit Paulis as (x, z) bit pairs, identity excluded
PAULI1 = ((1, 0), (1, 1), (0, 1))  # X, Y, Z
# two-qubit non-identity Paulis as (x0, z0, x1, z1)
PAULI2 = tuple(
    (a[0], a[1], b[0], b[1])
    for a in ((0, 0),) + PAULI1
    for b in ((0, 0),) + PAULI1
    if a != (0, 0) or b != (0, 0)
)


@dataclass(frozen=True)
class NoiseParams:
    eps2: float
    eps1: float
    epsI: float
    epsM: float
    eps0: float
    d: int

    def __post_init__(self):
        for name in ("eps2", "eps1", "epsI", "epsM", "eps0"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def as_dict(self) -> dict:
        return asdict(self)

    def scaled(self, **overrides) -> NoiseParams:
        """Copy with some rates replaced (used to isolate mechanism classes)."""
        fields = self.as_dict()
        fields.update(overrides)
        return NoiseParams(**fields)


def derive_rates(eps2: float, d: int) -> NoiseParams:
    """Rates tied to the two-qubit gate error: eps1 = eps2/10, memory per step
    such that one full round of ``5(2d-1)`` steps accumulates ``eps2``."""
    if not 0.0 <= eps2 <= 1.0:
        raise ValueError(f"eps2={eps2} outside [0, 1]")
    if d < 3:
        raise ValueError("code distance must be >= 3")
    return NoiseParams(eps2=eps2, eps1=eps2 / 10, epsI=eps2, epsM=eps2,
                       eps0=eps2 / (5 * (2 * d - 1)), d=d)


def zero_noise(d: int) -> NoiseParams:
    return NoiseParams(0.0, 0.0, 0.0, 0.0, 0.0, d)


def sample_one_qubit_channel(rate: float, rng: np.random.Generator) -> PauliOperator:
    """I with probability ``1 - rate``, otherwise X, Y or Z uniformly."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate={rate} outside [0, 1]")
    if rng.random() >= rate:
        return PauliOperator(1)
    x, z = PAULI1[rng.integers(3)]
    return PauliOperator(1, x, z)


def sample_two_qubit_channel(rate: float, rng: np.random.Generator) -> PauliOperator:
    """Identity with probability ``1 - rate``, else one of the 15 others uniformly."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate={rate} outside [0, 1]")
    if rng.random() >= rate:
        return PauliOperator(2)
    x0, z0, x1, z1 = PAULI2[rng.integers(15)]
    return PauliOperator(2, x0 | (x1 << 1), z0 | (z1 << 1))
