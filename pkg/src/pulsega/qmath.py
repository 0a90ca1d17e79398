"""Dense complex linear algebra and quantum-state primitives.

Conventions used throughout the package:

* Operators and states are plain ``numpy`` arrays of dtype complex128.
* Qubit 0 is the most significant bit of a computational-basis index, so
  ``tensor_product([A, B])`` puts ``A`` on qubit 0.
* Everything is dense; the largest objects are 64x64 states and their
  4096-dimensional vectorizations, so sparsity buys nothing here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np
import scipy.linalg

__all__ = [
    "I2",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "SIGMA_MINUS",
    "HADAMARD",
    "DensityMatrix",
    "PureState",
    "StateValidationError",
    "HermiticityError",
    "TraceError",
    "PositivityError",
    "tensor_product",
    "matrix_exponential",
    "state_fidelity",
    "validate_density_matrix",
    "expand_unitary",
    "apply_unitary_to_state",
]

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)

HERMITICITY_TOL = 1e-9
TRACE_TOL = 1e-9
POSITIVITY_TOL = 1e-9


class StateValidationError(ValueError):
    """A matrix failed one of the density-matrix invariants.

    ``violation`` carries the measured magnitude of the failure.
    """

    def __init__(self, message: str, violation: float):
        super().__init__(message)
        self.violation = float(violation)


class HermiticityError(StateValidationError):
    pass


class TraceError(StateValidationError):
    pass


class PositivityError(StateValidationError):
    pass


def _require_square(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    return m


@dataclass(frozen=True)
class DensityMatrix:
    """Validated quantum state: Hermitian, unit trace, positive semidefinite."""

    matrix: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        m = _require_square(self.matrix, "density matrix")
        _check_density_invariants(m)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dim", m.shape[0])

    @classmethod
    def ground_state(cls, n_qubits: int) -> "DensityMatrix":
        dim = 2**n_qubits
        m = np.zeros((dim, dim), dtype=complex)
        m[0, 0] = 1.0
        return cls(m)


@dataclass(frozen=True)
class PureState:
    """Unit-norm state vector."""

    amplitudes: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        norm = np.linalg.norm(a)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state vector norm {norm} differs from 1 by more than 1e-12")
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "dim", a.shape[0])

    def to_density(self) -> DensityMatrix:
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


def tensor_product(factors: list[np.ndarray]) -> np.ndarray:
    """Kronecker product of square factors, qubit 0 leftmost."""
    if not factors:
        raise ValueError("tensor_product requires at least one factor")
    mats = [_require_square(f, "tensor factor") for f in factors]
    return reduce(np.kron, mats)


def matrix_exponential(a: np.ndarray) -> np.ndarray:
    """exp(A) by scaling-and-squaring (Pade), for a square finite matrix."""
    a = _require_square(a, "matrix_exponential argument")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix_exponential argument contains non-finite entries")
    return scipy.linalg.expm(a)


def _hermitian_sqrt(m: np.ndarray) -> np.ndarray:
    # Clamp negatives (integrator round-off produces eigenvalues ~ -1e-12) and
    # the eigensolver's noise floor, which the square root would amplify.
    vals, vecs = np.linalg.eigh(m)
    tol = m.shape[0] * np.finfo(float).eps * max(float(vals.max()), 0.0)
    vals = np.where(vals > tol, vals, 0.0)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def state_fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity F = (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, in [0, 1].

    Evaluated as the squared trace norm of sqrt(sigma) sqrt(rho), which equals
    the Uhlmann trace and keeps full precision for (near-)pure states.
    """
    if rho.dim != sigma.dim:
        raise ValueError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")
    product = _hermitian_sqrt(sigma.matrix) @ _hermitian_sqrt(rho.matrix)
    singular = np.linalg.svd(product, compute_uv=False)
    f = float(singular.sum() ** 2)
    return min(max(f, 0.0), 1.0)


def _check_density_invariants(m: np.ndarray) -> None:
    if not np.all(np.isfinite(m)):
        raise HermiticityError("matrix contains non-finite entries", np.inf)
    herm = float(np.max(np.abs(m - m.conj().T)))
    if herm > HERMITICITY_TOL:
        raise HermiticityError(f"not Hermitian: max |m - m^dag| = {herm:.3e}", herm)
    tr = complex(np.trace(m))
    tr_err = abs(tr - 1.0)
    if tr_err > TRACE_TOL:
        raise TraceError(f"trace is {tr.real:.6g}, off by {tr_err:.3e}", tr_err)
    lam_min = float(np.linalg.eigvalsh((m + m.conj().T) / 2).min())
    if lam_min < -POSITIVITY_TOL:
        raise PositivityError(f"negative eigenvalue {lam_min:.3e}", -lam_min)


def validate_density_matrix(m: np.ndarray) -> DensityMatrix:
    """Check Hermiticity, unit trace and positivity; raise the specific failure."""
    m = _require_square(m, "density matrix candidate")
    return DensityMatrix(m)


def expand_unitary(u_local: np.ndarray, qubits: list[int] | tuple[int, ...], n_qubits: int) -> np.ndarray:
    """Embed a unitary acting on the listed qubits into the full 2^n space.

    Axis order of ``u_local`` follows the order of ``qubits``: for a CNOT
    given as ``qubits=(c, t)`` the first local qubit is the control.
    """
    qubits = list(qubits)
    m = len(qubits)
    u_local = _require_square(u_local, "local unitary")
    if u_local.shape[0] != 2**m:
        raise ValueError(f"local unitary dim {u_local.shape[0]} does not match {m} qubits")
    if len(set(qubits)) != m or any(q < 0 or q >= n_qubits for q in qubits):
        raise ValueError(f"invalid qubit list {qubits} for {n_qubits} qubits")
    dim = 2**n_qubits
    # Rows of the identity reshaped into one axis per qubit; contract the local
    # unitary into the acted axes and move them back into place.
    full = np.eye(dim, dtype=complex).reshape((2,) * n_qubits + (dim,))
    ut = u_local.reshape((2,) * (2 * m))
    res = np.tensordot(ut, full, axes=(list(range(m, 2 * m)), qubits))
    res = np.moveaxis(res, range(m), qubits)
    return res.reshape(dim, dim)


def apply_unitary_to_state(u_local: np.ndarray, qubits: list[int] | tuple[int, ...], state: np.ndarray) -> np.ndarray:
    """Apply a local unitary to a full statevector without forming the big matrix."""
    qubits = list(qubits)
    m = len(qubits)
    n = int(round(np.log2(state.size)))
    psi = np.asarray(state, dtype=complex).reshape((2,) * n)
    ut = np.asarray(u_local, dtype=complex).reshape((2,) * (2 * m))
    res = np.tensordot(ut, psi, axes=(list(range(m, 2 * m)), qubits))
    res = np.moveaxis(res, range(m), qubits)
    return res.reshape(-1)
