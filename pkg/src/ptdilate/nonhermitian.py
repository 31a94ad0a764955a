"""Closed-form dynamics of the non-Hermitian qubit generator sigma_x + i r sigma_z.

Covers the eigensystem with its symmetry classification, the analytic
non-unitary propagator, renormalized populations, characteristic times and
the inverse-norm curve. All functions are pure; natural units with hbar = 1.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .linalg import I2, SIGMA_X, SIGMA_Z, as_state

# Half-width of the parameter band classified as exceptional.
EPS_EP = 1e-8
# Switch to series evaluation of the propagator coefficients when |1 - r^2|
# is below this, avoiding cancellation in sin(w t)/w.
EPS_TAYLOR = 1e-5


class Regime(enum.Enum):
    SYMMETRIC = "symmetric"
    EXCEPTIONAL = "exceptional"
    BROKEN = "broken"


@dataclass(frozen=True)
class NonHermitianParams:
    """Gain/loss parameter r and evolution time t (dimensionless)."""

    r: float
    t: float

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("time must be nonnegative")


@dataclass(frozen=True)
class PropagatorCoefficients:
    """Basis-state amplitudes of the analytic propagator.

    alpha0/beta0 are the images of |0>, alpha1/beta1 those of |1>;
    beta0 == alpha1 holds exactly.
    """

    alpha0: complex
    beta0: complex
    alpha1: complex
    beta1: complex


@dataclass(frozen=True)
class Eigensystem:
    """Eigenvalues, normalized eigenvectors and their Bloch-sphere points.

    At the exceptional point the two branches coalesce and a single entry is
    returned. Bloch coordinates use the convention x + i y = 2 rho_01, which
    places the coalesced eigenvector at (0, 1, 0).
    """

    values: tuple[complex, ...]
    vectors: tuple[np.ndarray, ...]
    bloch: tuple[tuple[float, float, float], ...]


def hamiltonian(r: float) -> np.ndarray:
    """The 2x2 generator [[i r, 1], [1, -i r]]."""
    return SIGMA_X + 1j * r * SIGMA_Z


def pt_classify(r: float, eps: float = EPS_EP) -> Regime:
    if abs(1.0 - abs(r)) < eps:
        return Regime.EXCEPTIONAL
    return Regime.SYMMETRIC if abs(r) < 1.0 else Regime.BROKEN


def _bloch_point(v: np.ndarray) -> tuple[float, float, float]:
    a, b = v[0], v[1]
    rho01 = a * np.conj(b)
    return (float(2 * rho01.real), float(2 * rho01.imag),
            float(abs(a) ** 2 - abs(b) ** 2))


def eigensystem(r: float) -> Eigensystem:
    """Eigensystem of the generator across all three symmetry regimes."""
    regime = pt_classify(r)
    if regime is Regime.EXCEPTIONAL:
        v = np.array([1j * math.copysign(1.0, r), 1.0], dtype=complex) / np.sqrt(2)
        return Eigensystem((0.0 + 0.0j,), (v,), (_bloch_point(v),))
    if regime is Regime.SYMMETRIC:
        w = math.sqrt(1.0 - r * r)
        values = (w + 0j, -w + 0j)
    else:
        s = math.sqrt(r * r - 1.0)
        values = (1j * s, -1j * s)
    vectors = []
    for lam in values:
        v = np.array([1j * r + lam, 1.0], dtype=complex) / np.sqrt(2)
        vectors.append(v / np.linalg.norm(v))
    return Eigensystem(values, tuple(vectors),
                       tuple(_bloch_point(v) for v in vectors))


def propagator_coeffs(p: NonHermitianParams) -> PropagatorCoefficients:
    """Coefficients of exp(-i H t) on the computational basis.

    Three evaluation branches: trigonometric for r < 1, hyperbolic for r > 1
    (avoiding complex square-root branch cuts) and a series in (1 - r^2)
    around the exceptional point.
    """
    r, t = p.r, p.t
    w2 = 1.0 - r * r
    if abs(w2) < EPS_TAYLOR:
        # cos(w t) and sin(w t)/w as series in u = w^2 t^2, 4th order.
        u = w2 * t * t
        cos_wt = 1.0 - u / 2 + u * u / 24 - u ** 3 / 720 + u ** 4 / 40320
        sinc_wt = t * (1.0 - u / 6 + u * u / 120 - u ** 3 / 5040 + u ** 4 / 362880)
    elif w2 > 0:
        w = math.sqrt(w2)
        cos_wt = math.cos(w * t)
        sinc_wt = math.sin(w * t) / w
    else:
        s = math.sqrt(-w2)
        cos_wt = math.cosh(s * t)
        sinc_wt = math.sinh(s * t) / s
    alpha0 = complex(cos_wt + r * sinc_wt)
    beta0 = -1j * sinc_wt
    beta1 = complex(cos_wt - r * sinc_wt)
    return PropagatorCoefficients(alpha0, beta0, beta0, beta1)


def nh_propagator(p: NonHermitianParams) -> np.ndarray:
    """The non-unitary 2x2 matrix exp(-i H t)."""
    c = propagator_coeffs(p)
    return np.array([[c.alpha0, c.alpha1], [c.beta0, c.beta1]], dtype=complex)


def evolved_amplitudes(p: NonHermitianParams, initial: np.ndarray) -> np.ndarray:
    """Raw (unnormalized) amplitudes exp(-i H t) |initial>."""
    return nh_propagator(p) @ as_state(initial)


def populations(p: NonHermitianParams, initial: np.ndarray) -> tuple[float, float]:
    """Renormalized basis populations (p0, p1) after evolution."""
    amp = evolved_amplitudes(p, initial)
    w = np.abs(amp) ** 2
    total = float(w.sum())
    return float(w[0] / total), float(w[1] / total)


def recurrence_time(r: float) -> float:
    """Period of information revival in the symmetric phase: pi / sqrt(1 - r^2)."""
    if abs(r) >= 1.0:
        raise ValueError("recurrence time is defined only for |r| < 1")
    return math.pi / math.sqrt(1.0 - r * r)


def decay_time(r: float) -> float:
    """e-folding time of norm loss in the broken phase: 1 / (2 sqrt(r^2 - 1))."""
    if abs(r) <= 1.0:
        raise ValueError("decay time is defined only for |r| > 1")
    return 1.0 / (2.0 * math.sqrt(r * r - 1.0))


def state_norm_inverse(p: NonHermitianParams, rho0: np.ndarray) -> float:
    """Inverse of N(t) = Tr[exp(-iHt) rho0 exp(iH^dag t)].

    Oscillates with period equal to the recurrence time for 0 < r < 1 and
    decays (asymptotically by e per decay time) for r > 1.
    """
    u = nh_propagator(p)
    n = np.trace(u @ np.asarray(rho0, dtype=complex) @ u.conj().T).real
    return float(1.0 / n)


__all__ = [
    "EPS_EP", "EPS_TAYLOR", "Regime", "NonHermitianParams",
    "PropagatorCoefficients", "Eigensystem", "hamiltonian", "pt_classify",
    "eigensystem", "propagator_coeffs", "nh_propagator",
    "evolved_amplitudes", "populations", "recurrence_time", "decay_time",
    "state_norm_inverse",
]
