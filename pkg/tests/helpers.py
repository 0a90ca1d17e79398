"""Shared generators and independent oracles used across the test modules."""

import numpy as np
import scipy.linalg

from pulsega.qmath import DensityMatrix


def rand_density(dim: int, rng: np.random.Generator) -> DensityMatrix:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m))


def rand_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def pure_density(amplitudes) -> DensityMatrix:
    a = np.asarray(amplitudes, dtype=complex)
    a = a / np.linalg.norm(a)
    return DensityMatrix(np.outer(a, a.conj()))


def schedule_unitary(schedule, proc) -> np.ndarray:
    """Independent slice-propagator product via scipy's expm."""
    dim = 2**proc.n_qubits
    u = np.eye(dim, dtype=complex)
    for k in range(schedule.n_slices):
        h = proc.drift + sum(a * c for a, c in zip(schedule.amplitudes[k], proc.controls))
        u = scipy.linalg.expm(-1j * float(schedule.durations[k]) * h) @ u
    return u


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(rho - sigma))))
