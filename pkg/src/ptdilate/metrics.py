"""Observables: trace distance, entanglement monotones and the power-law fit.

All quantities are dimensionless and lie in [0, 1]; the critical-exponent
fit reports the magnitude of the log-log slope together with its ordinary
least-squares standard error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import SIGMA_Y, as_state, general_eigvals, hermitian_eig, partial_trace

_SYSY = np.kron(SIGMA_Y, SIGMA_Y)


@dataclass(frozen=True)
class CorrelationRecord:
    """Per-(r, t) correlation summary of the tripartite evolution."""

    t: float
    r: float
    distance: float = 0.0
    concurrence_qq: float = 0.0
    concurrence_aq: float = 0.0
    concurrence_aqp: float = 0.0
    linear_entropy_q: float = 0.0
    linear_entropy_a: float = 0.0
    tangle: float = 0.0


def trace_distance(rho1: np.ndarray, rho2: np.ndarray) -> float:
    """Half the trace norm of the Hermitian difference."""
    rho1 = np.asarray(rho1, dtype=complex)
    rho2 = np.asarray(rho2, dtype=complex)
    if rho1.shape != rho2.shape:
        raise ValueError("dimension mismatch")
    vals, _ = hermitian_eig(rho1 - rho2)
    return float(0.5 * np.abs(vals).sum())


def concurrence(rho: np.ndarray) -> float:
    """Two-qubit mixed-state concurrence from the spin-flipped spectrum.

    The eigenvalues of rho (sy x sy) rho* (sy x sy) are sorted in decreasing
    order (ties broken by magnitude); small negative numerical dust is
    clamped before the square roots.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError("concurrence is defined for two-qubit states")
    product = rho @ _SYSY @ rho.conj() @ _SYSY
    lams = general_eigvals(product)
    reals = lams.real
    if reals.min() < -1e-8:
        raise ValueError(f"unphysical spin-flip spectrum: {reals.min():.3e}")
    order = sorted(range(4), key=lambda i: (-reals[i], -abs(lams[i])))
    lam = np.clip(reals[order], 0.0, None)
    # Eigenvalues below the solver's noise floor are zeros of the rank-
    # deficient spin-flip product; without this the square roots inject
    # O(1e-8) spurious mass.
    lam[lam < 1e-12 * max(1.0, lam[0])] = 0.0
    roots = np.sqrt(lam)
    return float(max(0.0, roots[0] - roots[1] - roots[2] - roots[3]))


def linear_entropy(rho: np.ndarray) -> float:
    """1 - Tr rho^2."""
    rho = np.asarray(rho, dtype=complex)
    return float(1.0 - np.trace(rho @ rho).real)


def three_tangle(psi: np.ndarray) -> float:
    """Residual tripartite entanglement of a pure three-qubit state.

    Computed on the partition of the first system qubit (wire order a, q,
    q'): twice its linear entropy minus the squared pairwise concurrences
    with the other two parties.
    """
    psi = as_state(psi)
    if psi.size != 8:
        raise ValueError("three_tangle expects a three-qubit state vector")
    rho = np.outer(psi, psi.conj())
    rho_q = partial_trace(rho, keep=(1,))
    c_qa = concurrence(partial_trace(rho, keep=(0, 1)))
    c_qqp = concurrence(partial_trace(rho, keep=(1, 2)))
    return float(2.0 * linear_entropy(rho_q) - c_qa ** 2 - c_qqp ** 2)


def three_tangle_permuted(psi: np.ndarray) -> float:
    """Same tangle from the ancilla partition; equals ``three_tangle`` exactly."""
    psi = as_state(psi)
    rho = np.outer(psi, psi.conj())
    rho_a = partial_trace(rho, keep=(0,))
    c_aq = concurrence(partial_trace(rho, keep=(0, 1)))
    c_aqp = concurrence(partial_trace(rho, keep=(0, 2)))
    return float(2.0 * linear_entropy(rho_a) - c_aq ** 2 - c_aqp ** 2)


def fit_critical_exponent(series: list[tuple[float, float]],
                          window: tuple[float, float]) -> tuple[float, float]:
    """Magnitude and standard error of the log-log slope inside ``window``.

    Ordinary least squares of ln(value) on ln(t), both window endpoints
    inclusive; requires at least three strictly positive values.
    """
    lo, hi = window
    pts = [(t, v) for t, v in series if lo <= t <= hi and v > 0 and t > 0]
    if len(pts) < 3:
        raise ValueError("need at least 3 positive points in the fit window")
    x = np.log([t for t, _ in pts])
    y = np.log([v for _, v in pts])
    xb, yb = x.mean(), y.mean()
    sxx = float(((x - xb) ** 2).sum())
    slope = float(((x - xb) * (y - yb)).sum() / sxx)
    resid = y - (yb + slope * (x - xb))
    dof = len(pts) - 2
    stderr = math.sqrt(float((resid ** 2).sum()) / dof / sxx) if dof > 0 else 0.0
    return abs(slope), stderr
