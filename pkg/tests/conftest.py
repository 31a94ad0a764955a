import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)


def haar_unitary(rng, n: int) -> np.ndarray:
    """Haar-like unitary from the QR of a complex Gaussian matrix."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_pure_state(rng, n: int) -> np.ndarray:
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def random_density(rng, n: int, rank: int | None = None) -> np.ndarray:
    k = rank or n
    a = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def expm_series(m: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring of the power series.

    Independent oracle: no reuse of any closed-form propagator code.
    """
    a = np.asarray(m, dtype=complex)
    squarings = 0
    while np.abs(a).sum() > 0.25:
        a = a / 2.0
        squarings += 1
    out = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    for k in range(1, 40):
        term = term @ a / k
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out
