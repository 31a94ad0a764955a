"""Density-matrix reconstruction from measurement settings.

Single-qubit states need the three Pauli settings; post-selected two-qubit
states are assembled from seven settings whose diagonal readouts determine
all fifteen free parameters. Reconstructed matrices are projected onto the
physical set (PSD, unit trace) by eigenvalue water-filling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuitsim import ShotTable
from .linalg import I2, SIGMA_X, SIGMA_Y, SIGMA_Z, hermitian_eig
from .synthesis import Gate

# Element maps are (row, col, part) entries of the 4x4 matrix determined by
# each setting, 0-indexed, part in {"re", "im"}; "pop" marks populations.
SUPPLEMENT = "supplement"
MAINTEXT = "maintext"


@dataclass(frozen=True)
class TomographySetting:
    """One measurement setting: identifier, pre-rotation gates, elements read."""

    id: str
    pre_rotation: tuple[Gate, ...]
    element_map: tuple[tuple[int, int, str], ...]


def single_qubit_settings(wire: str = "q") -> tuple[TomographySetting, ...]:
    """Pauli-axis settings X, Y, Z measured via a z-basis readout."""
    return (
        TomographySetting("X", (Gate("H", (wire,)),), ((0, 1, "re"),)),
        TomographySetting("Y", (Gate("RxHalfPi", (wire,)),), ((0, 1, "im"),)),
        TomographySetting("Z", (), ((0, 0, "pop"), (1, 1, "pop"))),
    )


def two_qubit_settings(convention: str = SUPPLEMENT,
                       wires: tuple[str, str] = ("q", "qp")) -> tuple[TomographySetting, ...]:
    """The seven two-qubit settings in either published convention.

    The conventions differ only in which qubit carries the rotation after
    the CNOT in the last two settings (and the CNOT orientation there); both
    determine the same zero- and double-quantum coherences.
    """
    wq, wp = wires
    h_q, h_p = Gate("H", (wq,)), Gate("H", (wp,))
    rx_q, rx_p = Gate("RxHalfPi", (wq,)), Gate("RxHalfPi", (wp,))
    base = [
        TomographySetting("T1", (), (
            (0, 0, "pop"), (1, 1, "pop"), (2, 2, "pop"), (3, 3, "pop"))),
        TomographySetting("T2", (h_q,), ((0, 2, "re"), (1, 3, "re"))),
        TomographySetting("T3", (rx_q,), ((0, 2, "im"), (1, 3, "im"))),
        TomographySetting("T4", (h_p,), ((0, 1, "re"), (2, 3, "re"))),
        TomographySetting("T5", (rx_p,), ((0, 1, "im"), (2, 3, "im"))),
    ]
    if convention == SUPPLEMENT:
        cnot = Gate("CNOT", (wq, wp))
        base += [
            TomographySetting("T6", (cnot, h_q), ((0, 3, "re"), (1, 2, "re"))),
            TomographySetting("T7", (cnot, rx_q), ((0, 3, "im"), (1, 2, "im"))),
        ]
    elif convention == MAINTEXT:
        cnot = Gate("CNOT", (wp, wq))
        base += [
            TomographySetting("T6", (cnot, h_p), ((0, 3, "re"), (1, 2, "re"))),
            TomographySetting("T7", (cnot, rx_p), ((0, 3, "im"), (1, 2, "im"))),
        ]
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return tuple(base)


def _as_probs(table, dim: int) -> np.ndarray:
    if isinstance(table, ShotTable):
        p = table.frequencies()
    else:
        p = np.asarray(table, dtype=float)
    if p.size != dim:
        raise ValueError(f"expected a distribution over {dim} outcomes")
    return p


def psd_project(hermitian: np.ndarray) -> np.ndarray:
    """Nearest (Frobenius) PSD unit-trace matrix via eigenvalue water-filling."""
    vals, vecs = hermitian_eig(hermitian)
    lam = vals[::-1]  # descending
    csum = np.cumsum(lam)
    rho_idx = 0
    for j in range(lam.size):
        if lam[j] + (1.0 - csum[j]) / (j + 1) > 0:
            rho_idx = j
    shift = (1.0 - csum[rho_idx]) / (rho_idx + 1)
    projected = np.clip(lam + shift, 0.0, None)[::-1]
    return (vecs * projected) @ vecs.conj().T


def single_qubit_reconstruct(tables: dict[str, object]) -> np.ndarray:
    """Bloch-vector reconstruction from the X, Y, Z settings.

    Each entry is a distribution over the single measured qubit (one wire),
    already post-selected if applicable.
    """
    missing = {"X", "Y", "Z"} - set(tables)
    if missing:
        raise ValueError(f"missing settings {sorted(missing)}")
    exp = {}
    for axis in ("X", "Y", "Z"):
        p = _as_probs(tables[axis], 2)
        exp[axis] = p[0] - p[1]
    rho = 0.5 * (I2 + exp["X"] * SIGMA_X + exp["Y"] * SIGMA_Y + exp["Z"] * SIGMA_Z)
    return psd_project(rho)


def two_qubit_reconstruct(tables: dict[str, object],
                          convention: str = SUPPLEMENT) -> np.ndarray:
    """Assemble the post-selected two-qubit state from the seven settings.

    Every table is a distribution over the two system qubits after
    post-selection on the ancilla. The assembled Hermitian matrix is
    projected to the physical set before being returned.
    """
    required = {f"T{i}" for i in range(1, 8)}
    missing = required - set(tables)
    if missing:
        raise ValueError(f"missing settings {sorted(missing)}")
    d = {sid: _as_probs(tables[sid], 4) for sid in required}

    rho = np.zeros((4, 4), dtype=complex)
    for i in range(4):
        rho[i, i] = d["T1"][i]
    # Single-quantum coherences of the first qubit (real from an H
    # pre-rotation, imaginary from Rx(pi/2)):
    rho[0, 2] += 0.5 * (d["T2"][0] - d["T2"][2])
    rho[1, 3] += 0.5 * (d["T2"][1] - d["T2"][3])
    rho[0, 2] += 0.5j * (d["T3"][2] - d["T3"][0])
    rho[1, 3] += 0.5j * (d["T3"][3] - d["T3"][1])
    # Single-quantum coherences of the second qubit:
    rho[0, 1] += 0.5 * (d["T4"][0] - d["T4"][1])
    rho[2, 3] += 0.5 * (d["T4"][2] - d["T4"][3])
    rho[0, 1] += 0.5j * (d["T5"][1] - d["T5"][0])
    rho[2, 3] += 0.5j * (d["T5"][3] - d["T5"][2])
    # Zero- and double-quantum coherences through the CNOT mapping:
    if convention == SUPPLEMENT:
        rho[0, 3] += 0.5 * (d["T6"][0] - d["T6"][2])
        rho[1, 2] += 0.5 * (d["T6"][1] - d["T6"][3])
        rho[0, 3] += 0.5j * (d["T7"][2] - d["T7"][0])
        rho[1, 2] += 0.5j * (d["T7"][3] - d["T7"][1])
    elif convention == MAINTEXT:
        rho[0, 3] += 0.5 * (d["T6"][0] - d["T6"][1])
        rho[1, 2] += 0.5 * (d["T6"][2] - d["T6"][3])
        rho[0, 3] += 0.5j * (d["T7"][1] - d["T7"][0])
        rho[1, 2] += 0.5j * (d["T7"][2] - d["T7"][3])
    else:
        raise ValueError(f"unknown convention {convention!r}")
    rho = rho + np.triu(rho, 1).conj().T
    return psd_project(rho)


def state_fidelity(rho: np.ndarray, psi: np.ndarray) -> float:
    """Fidelity <psi| rho |psi> of a density matrix against a pure state."""
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    return float((psi.conj() @ np.asarray(rho, dtype=complex) @ psi).real)


def density_matrix_to_json(rho: np.ndarray) -> dict:
    rho = np.asarray(rho, dtype=complex)
    return {"dim": int(rho.shape[0]),
            "re": rho.real.tolist(), "im": rho.imag.tolist()}


def density_matrix_from_json(doc: dict) -> np.ndarray:
    return np.array(doc["re"], dtype=float) + 1j * np.array(doc["im"], dtype=float)
