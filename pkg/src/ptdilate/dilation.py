"""Hermitian dilation of the non-Hermitian qubit evolution.

Builds the time-dependent 4x4 generator I (x) Lambda(t) + sigma_y (x) Gamma(t)
on the ancilla-qubit space, its time-ordered propagator, the metric operator
M(t) with its square root eta(t), and the calibration of the initial scale
constants (m0, f, mu_min, eta0, theta).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import I2, SIGMA_Y, SIGMA_Z, as_state, two_norm
from .nonhermitian import NonHermitianParams, hamiltonian, nh_propagator

DEFAULT_DT = 1e-3
DEFAULT_GRID_STEP = 0.01
DEFAULT_M0 = 2.0
DEFAULT_SAFETY = 1.01
UNITARITY_TOL = 1e-7
# Defect threshold that triggers one step-size refinement before failing.
UNITARITY_REFINE = 1e-6
PSD_TOL = 1e-9


class HorizonExceededError(RuntimeError):
    """M(t) - I lost positivity: t lies outside the calibrated horizon."""


@dataclass(frozen=True)
class DilationContext:
    """Calibrated constants fixing the dilation for one (r, horizon) pair.

    ``m0_scale`` is the scalar in M(0) = m0_scale * I; it equals
    (m0 / mu_min) * f and satisfies eta0 = sqrt(m0_scale - 1),
    theta = 2 atan(eta0).
    """

    r: float
    time_horizon: float
    m0: float
    f: float
    mu_min: float
    eta0: float
    theta: float

    @property
    def m0_scale(self) -> float:
        return (self.m0 / self.mu_min) * self.f


@dataclass(frozen=True)
class DilatedFrame:
    """All frame operators of the dilated generator at one instant."""

    t: float
    M: np.ndarray
    eta: np.ndarray
    Lambda: np.ndarray
    Gamma: np.ndarray
    H_aq: np.ndarray


def _prop_back(r: float, t: float) -> np.ndarray:
    """exp(i H t) via the analytic propagator (even/odd structure in t)."""
    # cos(w t) and sin(w t)/w are even functions of w, so evaluating the
    # closed form at -t is exact for every regime.
    w2 = 1.0 - r * r
    if abs(w2) < 1e-5:
        u = w2 * t * t
        cos_wt = 1.0 - u / 2 + u * u / 24 - u ** 3 / 720 + u ** 4 / 40320
        sinc = t * (1.0 - u / 6 + u * u / 120 - u ** 3 / 5040 + u ** 4 / 362880)
    elif w2 > 0:
        w = math.sqrt(w2)
        cos_wt, sinc = math.cos(w * t), math.sin(w * t) / w
    else:
        s = math.sqrt(-w2)
        cos_wt, sinc = math.cosh(s * t), math.sinh(s * t) / s
    return cos_wt * I2 + 1j * sinc * hamiltonian(r)


def calibrate(r: float, horizon: float = 8.0, grid_step: float = DEFAULT_GRID_STEP,
              m0: float = DEFAULT_M0, f: float = DEFAULT_SAFETY) -> DilationContext:
    """Fix the initial metric scale so M(t) - I stays positive up to ``horizon``.

    A preliminary pass with M(0) = m0 * I scans the minimum eigenvalue of
    M(t) on a uniform grid; the final scale is (m0 / mu_min) * f with f > 1
    absorbing the grid resolution error.
    """
    if m0 <= 1 or f <= 1:
        raise ValueError("calibration requires m0 > 1 and f > 1")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    ts = np.arange(0.0, horizon + grid_step / 2, grid_step)
    mu_min = math.inf
    for t in ts:
        # Smallest eigenvalue of m0 exp(-iH^dag t) exp(iHt) via the singular
        # values of the propagator (stable even at huge condition numbers).
        sigma = np.linalg.svd(_prop_back(r, float(t)), compute_uv=False)
        mu_min = min(mu_min, m0 * float(sigma[-1]) ** 2)
    if mu_min <= 0:
        raise RuntimeError("calibration failed: nonpositive metric eigenvalue")
    eta0 = math.sqrt((m0 / mu_min) * f - 1.0)
    theta = 2.0 * math.atan(eta0)
    return DilationContext(r=r, time_horizon=horizon, m0=m0, f=f,
                           mu_min=mu_min, eta0=eta0, theta=theta)


def calibrate_for_time(r: float, t: float, interval: float = 1.0,
                       horizon: float = 8.0, grid_step: float = DEFAULT_GRID_STEP,
                       m0: float = DEFAULT_M0, f: float = DEFAULT_SAFETY) -> DilationContext:
    """Context valid at time ``t``, recalibrated per interval in the broken phase.

    For |r| < 1 a single context over the full horizon suffices. At and
    beyond the exceptional point the post-selection probability collapses at
    long times, so the scale is fixed over [0, ceil(t / interval) * interval]
    only, mirroring the per-interval procedure used for r = 1.3.
    """
    if abs(r) < 1.0:
        return calibrate(r, horizon=max(horizon, t), grid_step=grid_step, m0=m0, f=f)
    if t < grid_step:
        # Nothing evolves yet; the smallest admissible scale maximizes the
        # post-selection success probability.
        end = grid_step
    else:
        end = max(interval, math.ceil(t / interval - 1e-12) * interval)
    return calibrate(r, horizon=end, grid_step=grid_step, m0=m0, f=f)


def evolve_M(ctx: DilationContext, t: float) -> np.ndarray:
    """M(t) = exp(-i H^dag t) M(0) exp(i H t) with scalar M(0)."""
    back = _prop_back(ctx.r, t)
    return ctx.m0_scale * (back.conj().T @ back)


def closed_form_metric(r: float, t: float, m0_scale: float = 1.0) -> np.ndarray:
    """Exact metric in the symmetric phase as an I/sigma_z/sigma_y combination.

    The sigma_z coefficient carries the sign demanded by the defining
    evolution i dM/dt = H^dag M - M H with M(0) scalar (the small-t
    expansion gives dM/dt|_0 = -2 r M(0) sigma_z).
    """
    if abs(r) >= 1.0:
        raise ValueError("closed-form metric applies only for |r| < 1")
    w2 = 1.0 - r * r
    w = math.sqrt(w2)
    c2, s2 = math.cos(2 * w * t), math.sin(2 * w * t)
    comb = ((1.0 - r * r * c2) / w2) * I2 \
        - (r * s2 / w) * SIGMA_Z \
        + (r * (1.0 - c2) / w2) * SIGMA_Y
    return m0_scale * comb


def frame_at(ctx: DilationContext, t: float) -> DilatedFrame:
    """Frame operators M, eta, Lambda, Gamma and the dilated generator at ``t``.

    Works in the eigenbasis of the metric, obtained from a singular value
    decomposition of exp(iHt) rather than from the Gram matrix (forming
    exp(-iH^dag t) exp(iHt) squares the condition number, which destroys
    the small metric eigenvalue deep in the broken phase). In that basis
    the generator blocks collapse to the closed divided-difference forms

        Lambda_ij = (s_i Ht_ij + s_j conj(Ht_ji)) / (s_i + s_j)
        Gamma_ij  = i (Ht_ij - conj(Ht_ji)) / (s_i + s_j)

    with Ht the conjugated Hamiltonian and s_i = sqrt(m_i - 1); these are
    algebraically identical to the textbook expressions built from the
    Frechet derivative of the matrix square root, but contain no large
    intermediates and are manifestly Hermitian. The denominators are
    bounded below by 2 sqrt(f - 1) over the calibrated horizon.
    """
    back = _prop_back(ctx.r, t)
    _, sigma, xh = np.linalg.svd(back)
    basis = xh.conj().T
    m_vals = ctx.m0_scale * sigma ** 2
    s_sq = m_vals - 1.0
    if s_sq.min() < -PSD_TOL:
        raise HorizonExceededError(
            f"metric minus identity has eigenvalue {s_sq.min():.3e} < 0 "
            f"at t={t:g} (calibrated horizon {ctx.time_horizon:g})")
    s = np.sqrt(np.clip(s_sq, 0.0, None))
    h_tilde = basis.conj().T @ hamiltonian(ctx.r) @ basis
    denom = s[:, None] + s[None, :]
    lam_tilde = (s[:, None] * h_tilde + s[None, :] * h_tilde.conj().T) / denom
    gam_tilde = 1j * (h_tilde - h_tilde.conj().T) / denom
    m = (basis * m_vals) @ basis.conj().T
    eta = (basis * s) @ basis.conj().T
    lam = basis @ lam_tilde @ basis.conj().T
    gam = basis @ gam_tilde @ basis.conj().T
    h_aq = np.kron(I2, lam) + np.kron(SIGMA_Y, gam)
    return DilatedFrame(t=t, M=m, eta=eta, Lambda=lam, Gamma=gam, H_aq=h_aq)


def dilated_initial_state(ctx: DilationContext, system_state: np.ndarray) -> np.ndarray:
    """Normalized product state (|0> + eta0 |1>)_a (x) |psi>_q."""
    psi = as_state(system_state)
    anc = np.array([1.0, ctx.eta0], dtype=complex)
    anc /= np.linalg.norm(anc)
    return np.kron(anc, psi)


def _rk4_segment(ctx: DilationContext, u: np.ndarray, t0: float, t1: float,
                 dt: float) -> np.ndarray:
    """Integrate dU/dt = -i H_aq(t) U from t0 to t1 with fixed-step RK4."""
    span = t1 - t0
    if span <= 0:
        return u
    n = max(1, int(math.ceil(span / dt - 1e-12)))
    h = span / n
    t = t0
    h_t = frame_at(ctx, t).H_aq
    for _ in range(n):
        h_mid = frame_at(ctx, t + h / 2).H_aq
        h_end = frame_at(ctx, t + h).H_aq
        k1 = -1j * (h_t @ u)
        k2 = -1j * (h_mid @ (u + 0.5 * h * k1))
        k3 = -1j * (h_mid @ (u + 0.5 * h * k2))
        k4 = -1j * (h_end @ (u + h * k3))
        u = u + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
        h_t = h_end
    return u


def propagate_U_path(ctx: DilationContext, times: list[float] | np.ndarray,
                     dt: float = DEFAULT_DT) -> dict[float, np.ndarray]:
    """Dilated unitaries at several checkpoints from a single integration.

    The step size is shortened where needed so every checkpoint is hit
    exactly. Columns of each U are the integrated basis-state solutions.
    """
    checkpoints = sorted(set(float(t) for t in times))
    if checkpoints and checkpoints[0] < 0:
        raise ValueError("times must be nonnegative")
    out: dict[float, np.ndarray] = {}
    u = np.eye(4, dtype=complex)
    prev = 0.0
    for t in checkpoints:
        u = _rk4_segment(ctx, u, prev, t, dt)
        out[t] = u.copy()
        prev = t
    return out


def propagate_U(ctx: DilationContext, t: float, dt: float = DEFAULT_DT,
                estimate_error: bool = False):
    """Time-ordered 4x4 propagator of the dilated generator up to time ``t``.

    Verifies unitarity to within tolerance, refining the step once if the
    defect is too large; no re-unitarization is applied. With
    ``estimate_error`` a Richardson half-step estimate is returned alongside.
    """
    u = propagate_U_path(ctx, [t], dt)[float(t)]
    defect = two_norm(u.conj().T @ u - np.eye(4))
    if defect > UNITARITY_REFINE:
        u = propagate_U_path(ctx, [t], dt / 2)[float(t)]
        defect = two_norm(u.conj().T @ u - np.eye(4))
        if defect > UNITARITY_REFINE:
            raise RuntimeError(
                f"integration step too coarse: unitarity defect {defect:.3e}")
    if estimate_error:
        u_half = propagate_U_path(ctx, [t], dt / 2)[float(t)]
        err = two_norm(u_half - u) / 15.0
        return u_half, err
    return u


def verify_solution_structure(ctx: DilationContext, t: float,
                              system_state: np.ndarray | None = None,
                              dt: float = DEFAULT_DT) -> float:
    """Residual of the dilated evolution against the analytic branch structure.

    Compares U(t) applied to the dilated initial state with
    (|0> psi(t) + |1> eta(t) psi(t)) / sqrt(1 + eta0^2), where psi(t) is the
    closed-form non-Hermitian evolution of the system qubit.
    """
    psi0 = as_state(system_state if system_state is not None
                    else np.array([1.0, 0.0]))
    big0 = dilated_initial_state(ctx, psi0)
    u = propagate_U(ctx, t, dt)
    lhs = u @ big0
    psi_t = nh_propagator(NonHermitianParams(ctx.r, t)) @ psi0
    eta = frame_at(ctx, t).eta
    norm0 = math.sqrt(1.0 + ctx.eta0 ** 2)
    rhs = np.concatenate([psi_t, eta @ psi_t]) / norm0
    return float(np.linalg.norm(lhs - rhs))


def metric_ode_residual(r: float, t: float, ctx: DilationContext | None = None,
                        step: float = 1e-4) -> float:
    """Defect of i dM/dt = H^dag M - M H with dM/dt by central difference."""
    if ctx is None:
        ctx = calibrate(r, horizon=max(8.0, t + step))
    h = hamiltonian(r)
    m = evolve_M(ctx, t)
    lo = evolve_M(ctx, max(t - step, 0.0))
    hi = evolve_M(ctx, t + step)
    dm = (hi - lo) / (t + step - max(t - step, 0.0))
    return two_norm(1j * dm - (h.conj().T @ m - m @ h))


def norm_conservation_ratio(ctx: DilationContext, t: float,
                            system_state: np.ndarray | None = None) -> float:
    """<psi(t)|M(t)|psi(t)> / <psi(0)|M(0)|psi(0)>; equals 1 exactly in theory."""
    psi0 = as_state(system_state if system_state is not None
                    else np.array([1.0, 0.0]))
    psi_t = nh_propagator(NonHermitianParams(ctx.r, t)) @ psi0
    num = (psi_t.conj() @ evolve_M(ctx, t) @ psi_t).real
    den = (psi0.conj() @ evolve_M(ctx, 0.0) @ psi0).real
    return float(num / den)
