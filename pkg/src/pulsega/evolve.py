"""Lindblad master-equation propagation for piecewise-constant schedules.

The generator is constant within each slice, so the evolution is an exact
matrix exponential of the vectorized Liouvillian

    L = -i (I x H - H^T x I) + sum_j [ conj(C) x C - 1/2 I x (C^dag C)
                                       - 1/2 (C^dag C)^T x I ]

under the column-stacking convention vec(A rho B) = (B^T x A) vec(rho).
With no collapse operators the same map factorizes as conj(U) x U, so the
noiseless path conjugates by U = exp(-i dt H) directly.

Slice exponentials are cached: a genetic-algorithm population re-evaluates
many identical gate pulses.
"""

from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .noise import CollapseOperator
from .pulse import Processor, PulseSchedule
from .qmath import DensityMatrix, StateValidationError, matrix_exponential

__all__ = [
    "Liouvillian",
    "SolverOptions",
    "NumericalInstabilityError",
    "PropagatorCache",
    "build_liouvillian",
    "propagate",
]

OUTPUT_VALIDATION_TOL = 1e-6


class NumericalInstabilityError(RuntimeError):
    """Propagation produced a state violating density-matrix invariants."""


@dataclass(frozen=True)
class SolverOptions:
    max_substeps: int = 100_000
    substep_tolerance: float = 1e-8

    def __post_init__(self):
        if self.max_substeps < 1:
            raise ValueError("max_substeps must be >= 1")
        if self.substep_tolerance <= 0:
            raise ValueError("substep_tolerance must be positive")


@dataclass(frozen=True)
class Liouvillian:
    superoperator: np.ndarray

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.superoperator.shape[0])))


def _dissipator_superop(collapse: list[CollapseOperator], d: int) -> np.ndarray:
    eye = np.eye(d)
    sup = np.zeros((d * d, d * d), dtype=complex)
    for c_op in collapse:
        c = c_op.operator
        if c.shape != (d, d):
            raise ValueError(f"collapse operator {c_op.label} has shape {c.shape}, expected {(d, d)}")
        cdc = c.conj().T @ c
        sup += np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye)
    return sup


def _hamiltonian_superop(h: np.ndarray) -> np.ndarray:
    eye = np.eye(h.shape[0])
    return -1j * (np.kron(eye, h) - np.kron(h.T, eye))


def build_liouvillian(h: np.ndarray, collapse: list[CollapseOperator]) -> Liouvillian:
    h = np.asarray(h, dtype=complex)
    d = h.shape[0]
    if h.shape != (d, d):
        raise ValueError(f"Hamiltonian must be square, got {h.shape}")
    return Liouvillian(_hamiltonian_superop(h) + _dissipator_superop(collapse, d))


def _vec(rho: np.ndarray) -> np.ndarray:
    return rho.flatten(order="F")


def _unvec(v: np.ndarray, d: int) -> np.ndarray:
    return v.reshape((d, d), order="F")


class PropagatorCache:
    """Byte-bounded LRU of slice propagators, keyed by pulse content."""

    def __init__(self, max_bytes: int = 1 << 29):
        self.max_bytes = max_bytes
        self._store: OrderedDict[bytes, np.ndarray] = OrderedDict()
        self._bytes = 0

    def get(self, key: bytes):
        hit = self._store.get(key)
        if hit is not None:
            self._store.move_to_end(key)
        return hit

    def put(self, key: bytes, value: np.ndarray) -> None:
        if key in self._store:
            return
        self._store[key] = value
        self._bytes += value.nbytes
        while self._bytes > self.max_bytes and self._store:
            _, evicted = self._store.popitem(last=False)
            self._bytes -= evicted.nbytes


_DEFAULT_CACHE = PropagatorCache()


def _collapse_digest(collapse: list[CollapseOperator]) -> bytes:
    digest = hashlib.sha256()
    for c_op in collapse:
        digest.update(np.round(c_op.operator, 12).tobytes())
    return digest.digest()


def _slice_key(amps: np.ndarray, dt: float, context_digest: bytes) -> bytes:
    rounded = np.round(amps, 12) + 0.0  # normalize -0.0
    return rounded.tobytes() + np.float64(round(dt, 12)).tobytes() + context_digest


def _slice_propagator(
    h: np.ndarray, dissipator: np.ndarray | None, dt: float, opts: SolverOptions
) -> np.ndarray:
    if dissipator is None:
        w, v = np.linalg.eigh(h)
        return (v * np.exp(-1j * dt * w)) @ v.conj().T
    liou = _hamiltonian_superop(h) + dissipator
    # Subdivide very stiff slices so the exponential stays well conditioned.
    norm = np.linalg.norm(liou, 1) * dt
    n_sub = min(max(1, int(np.ceil(norm / 20.0))), opts.max_substeps)
    step = matrix_exponential(liou * (dt / n_sub))
    out = step
    for _ in range(n_sub - 1):
        out = step @ out
    return out


def propagate(
    rho0: DensityMatrix,
    schedule: PulseSchedule,
    proc: Processor,
    collapse: list[CollapseOperator],
    opts: SolverOptions | None = None,
    cache: PropagatorCache | None = None,
) -> DensityMatrix:
    """Evolve rho0 through the schedule under the processor's Hamiltonian and
    the given collapse operators; returns a validated density matrix."""
    opts = opts or SolverOptions()
    cache = cache if cache is not None else _DEFAULT_CACHE
    if schedule.n_slices == 0:
        return rho0
    d = rho0.dim
    if d != 2**proc.n_qubits:
        raise ValueError(f"state dim {d} does not match processor dim {2 ** proc.n_qubits}")

    digest = proc.content_digest + _collapse_digest(collapse)
    unitary_path = not collapse
    dissipator = None if unitary_path else _dissipator_superop(collapse, d)
    ctrl_stack = np.stack(proc.controls)
    state = rho0.matrix if unitary_path else _vec(rho0.matrix)
    for k in range(schedule.n_slices):
        amps = schedule.amplitudes[k]
        dt = float(schedule.durations[k])
        key = _slice_key(amps, dt, digest)
        prop = cache.get(key)
        if prop is None:
            h = proc.drift + np.tensordot(amps, ctrl_stack, axes=1)
            prop = _slice_propagator(h, dissipator, dt, opts)
            cache.put(key, prop)
        if unitary_path:
            state = prop @ state @ prop.conj().T
        else:
            state = prop @ state
            trace_drift = abs(np.sum(state[:: d + 1]) - 1.0)
            if trace_drift > opts.substep_tolerance and trace_drift <= OUTPUT_VALIDATION_TOL:
                # renormalize mid-run drift below the failure threshold
                state = state / np.sum(state[:: d + 1])
    rho = state if unitary_path else _unvec(state, d)
    return _repair_and_validate(rho)


def _repair_and_validate(rho: np.ndarray) -> DensityMatrix:
    rho = (rho + rho.conj().T) / 2
    tr = float(np.real(np.trace(rho)))
    if abs(tr - 1.0) > OUTPUT_VALIDATION_TOL:
        raise NumericalInstabilityError(f"trace drifted to {tr:.8f} (|1 - tr| > {OUTPUT_VALIDATION_TOL})")
    vals, vecs = np.linalg.eigh(rho)
    if vals.min() < -OUTPUT_VALIDATION_TOL:
        raise NumericalInstabilityError(f"negative eigenvalue {vals.min():.3e} beyond {OUTPUT_VALIDATION_TOL}")
    vals = np.clip(vals, 0.0, None)
    vals = vals / vals.sum()
    rho = (vecs * vals) @ vecs.conj().T
    try:
        return DensityMatrix(rho)
    except StateValidationError as exc:  # pragma: no cover - repair should always succeed
        raise NumericalInstabilityError(f"state failed validation after repair: {exc}") from exc
