"""Small dense complex linear algebra on dimensions 2, 4 and 8.

Matrices and state vectors are plain ``numpy.ndarray`` objects with complex
dtype; the helpers here add the validation, predicates and named operations
that the rest of the package builds on. Everything is pure and safe to share
across threads.
"""
from __future__ import annotations

import numpy as np

ComplexMatrix = np.ndarray
StateVector = np.ndarray

SUPPORTED_DIMS = (2, 4, 8)

TOL_HERMITIAN = 1e-10
TOL_UNITARY = 1e-10
TOL_EIG = 1e-9
TOL_PSD = 1e-9
TOL_NORM = 1e-10

I2 = np.eye(2, dtype=complex)
I4 = np.eye(4, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
# Rx(pi/2), used as a fixed tomography pre-rotation.
RX_HALF_PI = np.array([[1, -1j], [-1j, 1]], dtype=complex) / np.sqrt(2.0)


class DimensionError(ValueError):
    """Raised when an operand has an unsupported or mismatched dimension."""


def as_matrix(m: ComplexMatrix) -> np.ndarray:
    """Validate and return ``m`` as a square complex array of supported dim."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] not in SUPPORTED_DIMS:
        raise DimensionError(f"unsupported matrix dimension {a.shape[0]}")
    return a


def as_state(v: StateVector, normalized: bool = True) -> np.ndarray:
    """Validate a state vector; optionally require unit norm within tolerance."""
    a = np.asarray(v, dtype=complex).reshape(-1)
    if a.shape[0] not in SUPPORTED_DIMS:
        raise DimensionError(f"unsupported state dimension {a.shape[0]}")
    if normalized and abs(np.linalg.norm(a) - 1.0) > 1e-8:
        raise ValueError("state vector is not normalized")
    return a


def dagger(m: ComplexMatrix) -> np.ndarray:
    return np.asarray(m).conj().T


def is_hermitian(m: ComplexMatrix, tol: float = TOL_HERMITIAN) -> bool:
    a = np.asarray(m, dtype=complex)
    return two_norm(a - a.conj().T) < tol


def is_unitary(m: ComplexMatrix, tol: float = TOL_UNITARY) -> bool:
    a = np.asarray(m, dtype=complex)
    return two_norm(a.conj().T @ a - np.eye(a.shape[0])) < tol


def matmul(a: ComplexMatrix, b: ComplexMatrix) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return a @ b


def kron(a: ComplexMatrix, b: ComplexMatrix) -> np.ndarray:
    """Kronecker product, left factor on the most-significant wire."""
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[0] * b.shape[0] > 8:
        raise DimensionError("kron result exceeds dimension 8")
    return np.kron(a, b)


def hermitian_eig(m: ComplexMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns eigenvalues in ascending order and the matrix whose columns are
    the corresponding orthonormal eigenvectors.
    """
    a = as_matrix(m)
    if not is_hermitian(a):
        raise ValueError("hermitian_eig requires a Hermitian input")
    vals, vecs = np.linalg.eigh(a)
    return vals, vecs


def psd_sqrt(m: ComplexMatrix, tol: float = TOL_PSD) -> np.ndarray:
    """Hermitian square root of a positive-semidefinite matrix.

    Eigenvalues in [-tol, 0) are clamped to zero; anything below -tol is an
    error since the input is then genuinely indefinite.
    """
    vals, vecs = hermitian_eig(m)
    if vals[0] < -tol:
        raise ValueError(f"matrix is not PSD: min eigenvalue {vals[0]:.3e}")
    clamped = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(clamped)) @ vecs.conj().T


def general_eigvals(m: ComplexMatrix) -> np.ndarray:
    """Eigenvalues of a general complex matrix of dimension at most 4."""
    a = as_matrix(m)
    if a.shape[0] > 4:
        raise DimensionError("general_eigvals supports dimensions up to 4")
    return np.linalg.eigvals(a)


def two_norm(m: ComplexMatrix) -> float:
    """Spectral norm: the largest singular value."""
    a = np.asarray(m, dtype=complex)
    return float(np.linalg.norm(a, 2))


def partial_trace(rho: ComplexMatrix, keep: tuple[int, ...] | list[int]) -> np.ndarray:
    """Trace out all wires not listed in ``keep`` (0 = most significant).

    ``rho`` must act on 2 or 3 wires; kept wires retain their relative order.
    """
    a = as_matrix(rho)
    n = int(round(np.log2(a.shape[0])))
    if 2 ** n != a.shape[0] or n not in (1, 2, 3):
        raise DimensionError("partial_trace requires a 1-3 wire density matrix")
    keep = tuple(keep)
    if not keep or any(w < 0 or w >= n for w in keep) or len(set(keep)) != len(keep):
        raise ValueError(f"invalid wire subset {keep} for {n} wires")
    drop = tuple(w for w in range(n) if w not in keep)
    t = a.reshape([2] * (2 * n))
    for w in sorted(drop, reverse=True):
        t = np.trace(t, axis1=w, axis2=w + (t.ndim // 2))
    d = 2 ** len(keep)
    return t.reshape(d, d)


def matrix_to_json(m: ComplexMatrix) -> dict:
    """Serialize a matrix as {dim, entries: row-major [re, im] pairs}."""
    a = as_matrix(m)
    entries = [[float(x.real), float(x.imag)] for x in a.reshape(-1)]
    return {"dim": int(a.shape[0]), "entries": entries}


def matrix_from_json(doc: dict) -> np.ndarray:
    dim = int(doc["dim"])
    flat = np.array([complex(re, im) for re, im in doc["entries"]], dtype=complex)
    if flat.size != dim * dim:
        raise ValueError("entry count does not match dim")
    return flat.reshape(dim, dim)
