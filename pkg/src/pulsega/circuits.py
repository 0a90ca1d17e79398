"""Benchmark circuits and their ideal (noiseless) target states.

The Deutsch-Jozsa oracle is the balanced XOR function: a CNOT from every
input qubit into the ancilla. Grover follows the condensed figure layout:
the oracle block is X on all qubits, a CNOT chain q_i -> q_{i+1}, X on all,
and the diffusion operator is H on all, the oracle block again, H on all.
The fitness target is the noiseless simulation of the same gate list, which
keeps the optimization target well defined regardless of how the drawn
oracle relates to a textbook phase oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .pulse import GateSpec
from .qmath import HADAMARD, SIGMA_X, PureState, apply_unitary_to_state

__all__ = [
    "Circuit",
    "hadamard_gate",
    "pauli_x_gate",
    "cnot_gate",
    "cz_gate",
    "build_deutsch_jozsa",
    "build_grover",
    "grover_iterations",
    "ideal_output_state",
    "circuit_unitary",
    "format_gate_list",
]

CNOT_MATRIX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
CZ_MATRIX = np.diag([1, 1, 1, -1]).astype(complex)


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: list[GateSpec] = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        for gate in self.gates:
            if any(q < 0 or q >= self.n_qubits for q in gate.acting_qubits):
                raise ValueError(f"gate {gate.name} on {gate.acting_qubits} outside {self.n_qubits} qubits")

    def __len__(self) -> int:
        return len(self.gates)


def hadamard_gate(qubit: int) -> GateSpec:
    return GateSpec("H", HADAMARD, (qubit,))


def pauli_x_gate(qubit: int) -> GateSpec:
    return GateSpec("X", SIGMA_X, (qubit,))


def cnot_gate(control: int, target: int) -> GateSpec:
    return GateSpec("CNOT", CNOT_MATRIX, (control, target))


def cz_gate(control: int, target: int) -> GateSpec:
    return GateSpec("CZ", CZ_MATRIX, (control, target))


def build_deutsch_jozsa(n_inputs: int, constant_oracle: bool = False) -> Circuit:
    """Deutsch-Jozsa on n_inputs input qubits plus one ancilla.

    The default oracle is the balanced XOR function; ``constant_oracle`` drops
    the oracle block entirely (f = 0), returning the input register to zeros.
    """
    if not 1 <= n_inputs <= 3:
        raise ValueError(f"n_inputs={n_inputs} outside supported range [1, 3]")
    n = n_inputs + 1
    ancilla = n_inputs
    gates = [pauli_x_gate(ancilla)]
    gates += [hadamard_gate(q) for q in range(n)]
    if not constant_oracle:
        gates += [cnot_gate(q, ancilla) for q in range(n_inputs)]
    gates += [hadamard_gate(q) for q in range(n_inputs)]
    oracle = "constant" if constant_oracle else "xor"
    return Circuit(n, gates, f"deutsch-jozsa-{n_inputs}in-{oracle}")


def grover_iterations(n_qubits: int) -> int:
    """floor(pi/4 * sqrt(N)) rounds for a unique marked state in N = 2^n."""
    return int(math.floor(math.pi / 4 * math.sqrt(2**n_qubits)))


def _grover_oracle_block(n_qubits: int) -> list[GateSpec]:
    gates = [pauli_x_gate(q) for q in range(n_qubits)]
    gates += [cnot_gate(q, q + 1) for q in range(n_qubits - 1)]
    gates += [pauli_x_gate(q) for q in range(n_qubits)]
    return gates


def build_grover(n_qubits: int) -> Circuit:
    if not 2 <= n_qubits <= 4:
        raise ValueError(f"n_qubits={n_qubits} outside supported range [2, 4]")
    gates = [hadamard_gate(q) for q in range(n_qubits)]
    for _ in range(grover_iterations(n_qubits)):
        gates += _grover_oracle_block(n_qubits)
        gates += [hadamard_gate(q) for q in range(n_qubits)]
        gates += _grover_oracle_block(n_qubits)
        gates += [hadamard_gate(q) for q in range(n_qubits)]
    return Circuit(n_qubits, gates, f"grover-{n_qubits}q")


def ideal_output_state(circuit: Circuit) -> PureState:
    """Exact gate-level action on |0...0>; the fitness target."""
    psi = np.zeros(2**circuit.n_qubits, dtype=complex)
    psi[0] = 1.0
    for gate in circuit.gates:
        psi = apply_unitary_to_state(gate.target_unitary, gate.acting_qubits, psi)
    psi = psi / np.linalg.norm(psi)
    return PureState(psi)


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    from .qmath import expand_unitary

    dim = 2**circuit.n_qubits
    u = np.eye(dim, dtype=complex)
    for gate in circuit.gates:
        u = expand_unitary(gate.target_unitary, gate.acting_qubits, circuit.n_qubits) @ u
    return u


def format_gate_list(circuit: Circuit) -> str:
    """Text listing, one gate per line: index,name,qubits."""
    lines = [f"{i},{g.name},{' '.join(map(str, g.acting_qubits))}" for i, g in enumerate(circuit.gates)]
    return "\n".join(lines)
