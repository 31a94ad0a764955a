"""Ideal state-vector execution, seeded shot sampling and readout error.

Shot counts use the counter-based Philox 64-bit generator; per-setting
streams are split deterministically from (seed, setting_id) via a keyed
blake2b digest, so counts are reproducible across platforms and independent
of sampling order.
"""
from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from .linalg import as_state
from .synthesis import Circuit, Gate, gate_unitary

DEFAULT_SHOTS = 8192
# Post-selection success probabilities below this trigger a warning.
POSTSELECT_FLOOR = 1e-3

# Assignment fidelities from the device characterization used throughout.
DEFAULT_FIDELITIES = {
    "a": (0.99, 0.89),
    "q": (0.99, 0.98),
    "qp": (0.99, 0.98),
}

# Gate-error rates of the reference device; recorded for documentation only,
# they are not simulated as quantum channels.
DEVICE_GATE_ERRORS = {
    "t1_us": (76.0, 75.0, 100.0),
    "t2_us": (57.0, 28.0, 98.0),
    "readout_error": (0.020, 0.027, 0.017),
    "single_qubit_u2_error": (0.0003, 0.0005, 0.0003),
    "cnot_error": {"cx1-0": 0.0062, "cx1-2": 0.0084},
}


class PostselectionStarvedError(RuntimeError):
    """All (or essentially all) shots fell outside the selected subspace."""


@dataclass(frozen=True)
class ShotTable:
    """Counts over computational basis strings for one measurement setting."""

    setting_id: str
    counts: dict[str, int]
    shots: int = DEFAULT_SHOTS
    seed: int = 0

    def __post_init__(self):
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts must sum to the shot total")

    @property
    def n_wires(self) -> int:
        return len(next(iter(self.counts)))

    def frequencies(self) -> np.ndarray:
        """Relative frequencies over the full basis, most significant bit first."""
        n = self.n_wires
        p = np.zeros(2 ** n)
        for basis, c in self.counts.items():
            p[int(basis, 2)] = c / self.shots
        return p

    def to_json(self) -> dict:
        return {"setting_id": self.setting_id, "shots": self.shots,
                "seed": self.seed, "counts": dict(sorted(self.counts.items()))}

    @staticmethod
    def from_json(doc: dict) -> "ShotTable":
        return ShotTable(doc["setting_id"], {k: int(v) for k, v in doc["counts"].items()},
                         int(doc["shots"]), int(doc["seed"]))

    def to_csv_rows(self) -> list[tuple[str, int]]:
        return sorted(self.counts.items())


@dataclass(frozen=True)
class ReadoutModel:
    """Per-wire assignment fidelities (f0, f1).

    Each fidelity lies in [0.5, 1] and f0 + f1 > 1, which keeps the
    confusion matrix invertible (the 0.5 boundary is allowed on one side
    only; it models a fully randomized readout of that basis state).
    """

    fidelities: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_FIDELITIES))

    def __post_init__(self):
        for wire, (f0, f1) in self.fidelities.items():
            if not (0.5 <= f0 <= 1.0 and 0.5 <= f1 <= 1.0):
                raise ValueError(f"fidelities for {wire!r} must lie in [0.5, 1]")
            if f0 + f1 <= 1.0:
                raise ValueError(f"confusion matrix for {wire!r} is singular")

    def wire_matrix(self, wire: str) -> np.ndarray:
        """Column-stochastic confusion matrix [[f0, 1-f1], [1-f0, f1]]."""
        f0, f1 = self.fidelities[wire]
        return np.array([[f0, 1.0 - f1], [1.0 - f0, f1]])

    def full_matrix(self, wires: tuple[str, ...]) -> np.ndarray:
        m = np.array([[1.0]])
        for w in wires:
            m = np.kron(m, self.wire_matrix(w))
        return m


def rng_for(seed: int, setting_id: str) -> np.random.Generator:
    """Philox stream split deterministically from (seed, setting_id)."""
    digest = hashlib.blake2b(setting_id.encode("utf-8"), digest_size=16,
                             key=(seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little"))
    key = int.from_bytes(digest.digest(), "little")
    return np.random.Generator(np.random.Philox(key=key))


def _apply_gate(state: np.ndarray, gate: Gate, wires: tuple[str, ...]) -> np.ndarray:
    n = len(wires)
    if gate.kind == "CNOT":
        control, target = (wires.index(w) for w in gate.wires)
        psi = state.reshape([2] * n)
        out = psi.copy()
        idx_c1 = [slice(None)] * n
        idx_c1[control] = 1
        flipped = psi[tuple(idx_c1)]
        out[tuple(idx_c1)] = np.flip(flipped, axis=target - (1 if target > control else 0))
        return out.reshape(-1)
    pos = wires.index(gate.wires[0])
    m = gate.matrix()
    psi = state.reshape([2] * n)
    psi = np.moveaxis(psi, pos, 0)
    psi = np.tensordot(m, psi, axes=([1], [0]))
    return np.moveaxis(psi, 0, pos).reshape(-1)


def run_ideal(circuit: Circuit, initial: np.ndarray | None = None) -> np.ndarray:
    """Exact state-vector evolution of the circuit from ``initial`` (default |0..0>)."""
    n = len(circuit.wires)
    if initial is None:
        state = np.zeros(2 ** n, dtype=complex)
        state[0] = 1.0
    else:
        state = as_state(initial).copy()
        if state.size != 2 ** n:
            raise ValueError("initial state dimension does not match wire count")
    for gate in circuit.gates:
        if gate.kind not in ("Ry", "Rz", "U3", "H", "RxHalfPi", "CNOT", "Prep"):
            raise ValueError(f"unknown gate kind {gate.kind!r}")
        for w in gate.wires:
            if w not in circuit.wires:
                raise ValueError(f"gate wire {w!r} not in circuit wires")
        state = _apply_gate(state, gate, circuit.wires)
    return np.exp(1j * circuit.global_phase) * state


def probabilities(state: np.ndarray) -> np.ndarray:
    p = np.abs(np.asarray(state)) ** 2
    return p / p.sum()


def sample(state: np.ndarray, shots: int, seed: int,
           setting_id: str = "default") -> ShotTable:
    """Multinomial draw of ``shots`` outcomes from |amplitude|^2."""
    if shots <= 0:
        raise ValueError("shots must be positive")
    psi = as_state(state)
    p = probabilities(psi)
    rng = rng_for(seed, setting_id)
    draws = rng.multinomial(shots, p)
    n = int(np.log2(p.size))
    counts = {format(i, f"0{n}b"): int(c) for i, c in enumerate(draws) if c > 0}
    return ShotTable(setting_id=setting_id, counts=counts, shots=shots, seed=seed)


def apply_readout_noise(table: ShotTable, model: ReadoutModel,
                        wires: tuple[str, ...], seed: int) -> ShotTable:
    """Flip each recorded bit independently per the assignment fidelities.

    Statistically identical to per-shot bit flips: for every source basis
    string the shots are distributed multinomially over flip patterns.
    """
    n = table.n_wires
    if len(wires) != n:
        raise ValueError("readout model wires must cover the basis-string length")
    rng = rng_for(seed, table.setting_id + "/readout")
    mats = [model.wire_matrix(w) for w in wires]
    new_counts: dict[str, int] = {}
    for basis, count in sorted(table.counts.items()):
        pattern_probs = np.array([1.0])
        for i, b in enumerate(basis):
            col = mats[i][:, int(b)]
            pattern_probs = np.kron(pattern_probs, col)
        draws = rng.multinomial(count, pattern_probs)
        for j, c in enumerate(draws):
            if c:
                out = format(j, f"0{n}b")
                new_counts[out] = new_counts.get(out, 0) + int(c)
    return ShotTable(setting_id=table.setting_id, counts=new_counts,
                     shots=table.shots, seed=seed)


def correct_readout(p_m: np.ndarray, model: ReadoutModel,
                    wires: tuple[str, ...]) -> np.ndarray:
    """Invert the confusion matrix, then clip negatives and renormalize."""
    p_m = np.asarray(p_m, dtype=float)
    f = model.full_matrix(wires)
    if p_m.size != f.shape[0]:
        raise ValueError("probability vector length does not match wires")
    corrected = np.linalg.solve(f, p_m)
    corrected = np.clip(corrected, 0.0, None)
    total = corrected.sum()
    if total <= 0:
        raise RuntimeError("readout correction produced an empty distribution")
    return corrected / total


def postselect(probs: np.ndarray | ShotTable, ancilla_value: int,
               floor: float = POSTSELECT_FLOOR) -> tuple[np.ndarray, float]:
    """Restrict to the subspace with the most-significant wire at ``ancilla_value``.

    Returns the renormalized distribution over the remaining wires and the
    success probability. A success probability below ``floor`` warns; zero
    raises.
    """
    if isinstance(probs, ShotTable):
        probs = probs.frequencies()
    p = np.asarray(probs, dtype=float)
    half = p.size // 2
    block = p[:half] if ancilla_value == 0 else p[half:]
    success = float(block.sum())
    if success <= 0.0:
        raise PostselectionStarvedError("no probability mass in the selected subspace")
    if success < floor:
        warnings.warn(f"post-selection success probability {success:.2e} "
                      f"below floor {floor:.0e}", RuntimeWarning, stacklevel=2)
    return block / success, success
