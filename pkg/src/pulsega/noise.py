"""Physical noise parameters lowered to collapse operators and Kraus channels.

Continuous evolution uses collapse operators: amplitude damping at rate 1/T1,
dephasing at rate 1/(2 T2), and each discrete error probability converted to a
jump rate gamma = -ln(1 - p) / total_time so the channel integrated over the
whole schedule carries probability weight p. Discrete channels also exist in
Kraus form for unit-level checks of the operator-sum map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .qmath import I2, SIGMA_MINUS, SIGMA_X, SIGMA_Y, SIGMA_Z, DensityMatrix, tensor_product

__all__ = [
    "NoiseParams",
    "CollapseOperator",
    "KrausChannel",
    "build_collapse_operators",
    "kraus_channel",
    "apply_kraus",
]

KRAUS_COMPLETENESS_TOL = 1e-10


@dataclass(frozen=True)
class NoiseParams:
    t1: float
    t2: float
    p_bit_flip: float = 0.0
    p_phase_flip: float = 0.0
    p_bit_phase_flip: float = 0.0
    p_depolarizing: float = 0.0

    def __post_init__(self):
        if self.t1 <= 0 or self.t2 <= 0:
            raise ValueError("t1 and t2 must be positive")
        if self.t2 > 2 * self.t1 + 1e-12:
            raise ValueError(f"t2={self.t2} exceeds 2*t1={2 * self.t1}")
        for name in ("p_bit_flip", "p_phase_flip", "p_bit_phase_flip", "p_depolarizing"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")


@dataclass(frozen=True)
class CollapseOperator:
    """Jump operator on the full n-qubit space, tagged with channel and qubit."""

    operator: np.ndarray
    label: str


@dataclass(frozen=True)
class KrausChannel:
    operators: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.operators:
            raise ValueError("Kraus channel needs at least one operator")
        dim = self.operators[0].shape[0]
        total = sum(e.conj().T @ e for e in self.operators)
        err = float(np.max(np.abs(total - np.eye(dim))))
        if err > KRAUS_COMPLETENESS_TOL:
            raise ValueError(f"Kraus completeness violated by {err:.3e}")


def _lift(op: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    factors = [I2] * n_qubits
    factors[qubit] = op
    return tensor_product(factors)


def _discrete_rate(p: float, total_time: float) -> float:
    if p >= 1.0:
        raise ValueError(f"discrete error probability {p} = 1 implies an infinite rate")
    return -math.log1p(-p) / total_time


def build_collapse_operators(params: NoiseParams, n_qubits: int, total_time: float) -> list[CollapseOperator]:
    """Per-qubit relaxation, dephasing and rate-converted discrete Pauli jumps."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    if total_time <= 0:
        raise ValueError("total_time must be positive")
    ops: list[CollapseOperator] = []
    for q in range(n_qubits):
        ops.append(CollapseOperator(math.sqrt(1.0 / params.t1) * _lift(SIGMA_MINUS, q, n_qubits), f"amplitude_damping:q{q}"))
        ops.append(CollapseOperator(math.sqrt(1.0 / (2.0 * params.t2)) * _lift(SIGMA_Z, q, n_qubits), f"dephasing:q{q}"))
        for p, sigma, name in (
            (params.p_bit_flip, SIGMA_X, "bit_flip"),
            (params.p_phase_flip, SIGMA_Z, "phase_flip"),
            (params.p_bit_phase_flip, SIGMA_Y, "bit_phase_flip"),
        ):
            if p > 0:
                rate = _discrete_rate(p, total_time)
                ops.append(CollapseOperator(math.sqrt(rate) * _lift(sigma, q, n_qubits), f"{name}:q{q}"))
        if params.p_depolarizing > 0:
            # Split evenly over the three Paulis, mirroring the p/3 channel weights.
            rate = _discrete_rate(params.p_depolarizing, total_time) / 3.0
            for sigma, axis in ((SIGMA_X, "x"), (SIGMA_Y, "y"), (SIGMA_Z, "z")):
                ops.append(CollapseOperator(math.sqrt(rate) * _lift(sigma, q, n_qubits), f"depolarizing_{axis}:q{q}"))
    return ops


def kraus_channel(kind: str, param: float) -> KrausChannel:
    """Single-qubit channel in operator-sum form."""
    if not 0.0 <= param <= 1.0:
        raise ValueError(f"channel parameter {param} outside [0, 1]")
    p = param
    if kind == "bit_flip":
        ops = [math.sqrt(1 - p) * I2, math.sqrt(p) * SIGMA_X]
    elif kind == "phase_flip":
        ops = [math.sqrt(1 - p) * I2, math.sqrt(p) * SIGMA_Z]
    elif kind == "bit_phase_flip":
        ops = [math.sqrt(1 - p) * I2, math.sqrt(p) * SIGMA_Y]
    elif kind == "depolarizing":
        ops = [
            math.sqrt(1 - p) * I2,
            math.sqrt(p / 3) * SIGMA_X,
            math.sqrt(p / 3) * SIGMA_Y,
            math.sqrt(p / 3) * SIGMA_Z,
        ]
    elif kind == "amplitude_damping":
        ops = [
            np.array([[1, 0], [0, math.sqrt(1 - p)]], dtype=complex),
            np.array([[0, math.sqrt(p)], [0, 0]], dtype=complex),
        ]
    elif kind == "phase_damping":
        # standard CPTP form; the split {sqrt(1-l) I, sqrt(l) diag(1,0)} is
        # not trace preserving
        ops = [
            np.diag([1.0, math.sqrt(1 - p)]).astype(complex),
            np.diag([0.0, math.sqrt(p)]).astype(complex),
        ]
    else:
        raise ValueError(f"unknown channel kind {kind!r}")
    ops = [op for op in ops if np.any(op != 0)]
    return KrausChannel(ops)


def apply_kraus(channel: KrausChannel, rho: DensityMatrix) -> DensityMatrix:
    """Operator-sum map sum_l E_l rho E_l^dag."""
    dim = channel.operators[0].shape[0]
    if dim != rho.dim:
        raise ValueError(f"dimension mismatch: channel {dim} vs state {rho.dim}")
    out = np.zeros_like(rho.matrix)
    for e in channel.operators:
        out += e @ rho.matrix @ e.conj().T
    out = (out + out.conj().T) / 2
    return DensityMatrix(out)
