import numpy as np
import pytest

from conftest import random_pure_state
from ptdilate.circuitsim import postselect, sample
from ptdilate.dilation import calibrate, dilated_initial_state, propagate_U_path
from ptdilate.linalg import two_norm
from ptdilate.metrics import concurrence
from ptdilate.synthesis import Circuit, circuit_unitary
from ptdilate.tomography import (MAINTEXT, SUPPLEMENT, psd_project,
                                 density_matrix_from_json,
                                 density_matrix_to_json,
                                 single_qubit_reconstruct,
                                 single_qubit_settings, state_fidelity,
                                 two_qubit_reconstruct, two_qubit_settings)

KET0 = np.array([1.0, 0.0], dtype=complex)
BELL = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)


def exact_tables(psi: np.ndarray, settings, wires) -> dict[str, np.ndarray]:
    tables = {}
    for s in settings:
        u = circuit_unitary(Circuit(wires, s.pre_rotation))
        tables[s.id] = np.abs(u @ psi) ** 2
    return tables


def test_setting_element_coverage():
    for convention in (SUPPLEMENT, MAINTEXT):
        seen = []
        for s in two_qubit_settings(convention):
            seen.extend(s.element_map)
        assert len(seen) == 16
        assert len(set(seen)) == 16
        pops = [e for e in seen if e[2] == "pop"]
        assert len(pops) == 4
        offdiag = [e for e in seen if e[2] != "pop"]
        assert len(offdiag) == 12


def test_single_qubit_reconstruct_basis_states():
    settings = single_qubit_settings("q")
    rho = single_qubit_reconstruct(exact_tables(KET0, settings, ("q",)))
    assert two_norm(rho - np.diag([1.0, 0.0])) < 1e-12
    plus = np.array([1, 1], dtype=complex) / np.sqrt(2)
    rho = single_qubit_reconstruct(exact_tables(plus, settings, ("q",)))
    assert abs(np.trace(rho @ np.array([[0, 1], [1, 0]])).real - 1.0) < 1e-12


def test_single_qubit_missing_setting():
    with pytest.raises(ValueError):
        single_qubit_reconstruct({"X": np.array([0.5, 0.5]),
                                  "Z": np.array([1.0, 0.0])})


def test_single_qubit_pipeline_fidelity():
    # Dilated evolution at (r=0.6, t=0.5), post-selected and sampled.
    ctx = calibrate(0.6)
    u = propagate_U_path(ctx, [0.5])[0.5]
    psi = u @ dilated_initial_state(ctx, KET0)
    settings = single_qubit_settings("q")
    dists = {}
    for s in settings:
        rot = circuit_unitary(Circuit(("a", "q"), s.pre_rotation))
        table = sample(rot @ psi, 8192, seed=17, setting_id=f"sq/{s.id}")
        sub, _ = postselect(table.frequencies(), 0)
        dists[s.id] = sub
    rho = single_qubit_reconstruct(dists)
    target = psi[:2] / np.linalg.norm(psi[:2])
    assert state_fidelity(rho, target) >= 0.99


@pytest.mark.parametrize("convention", [SUPPLEMENT, MAINTEXT])
def test_two_qubit_exact_inversion(convention, rng):
    settings = two_qubit_settings(convention)
    worst = 0.0
    for _ in range(50):
        psi = random_pure_state(rng, 4)
        rho = two_qubit_reconstruct(exact_tables(psi, settings, ("q", "qp")),
                                    convention)
        worst = max(worst, two_norm(rho - np.outer(psi, psi.conj())))
    assert worst < 1e-10


def test_two_qubit_bell_and_product():
    settings = two_qubit_settings()
    rho = two_qubit_reconstruct(exact_tables(BELL, settings, ("q", "qp")))
    for i, j in ((0, 0), (3, 3), (0, 3), (3, 0)):
        assert abs(rho[i, j] - 0.5) < 1e-12
    ket01 = np.array([0, 1, 0, 0], dtype=complex)
    rho = two_qubit_reconstruct(exact_tables(ket01, settings, ("q", "qp")))
    assert two_norm(rho - np.diag([0, 1.0, 0, 0])) < 1e-12


def test_two_qubit_missing_settings():
    with pytest.raises(ValueError):
        two_qubit_reconstruct({"T1": np.full(4, 0.25)})


def test_sampled_bell_concurrence():
    settings = two_qubit_settings()
    dists = {}
    for s in settings:
        u = circuit_unitary(Circuit(("q", "qp"), s.pre_rotation))
        table = sample(u @ BELL, 8192, seed=23, setting_id=f"bell/{s.id}")
        dists[s.id] = table.frequencies()
    rho = two_qubit_reconstruct(dists)
    assert abs(concurrence(rho) - 1.0) < 0.02


def test_psd_project_examples(rng):
    rho = np.diag([0.5, 0.5, 0.0, 0.0]).astype(complex)
    assert two_norm(psd_project(rho) - rho) < 1e-12
    proj = psd_project(np.diag([1.1, -0.1, 0.0, 0.0]).astype(complex))
    assert two_norm(proj - np.diag([1.0, 0.0, 0.0, 0.0])) < 1e-12
    mixed = np.eye(4, dtype=complex) / 4
    assert two_norm(psd_project(mixed) - mixed) < 1e-12


def test_psd_project_idempotent_and_physical(rng):
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    h = (a + a.conj().T) / 2
    h = h / np.trace(h).real
    p1 = psd_project(h)
    assert abs(np.trace(p1).real - 1.0) < 1e-12
    assert np.linalg.eigvalsh(p1)[0] > -1e-12
    assert two_norm(psd_project(p1) - p1) < 1e-12


def test_density_matrix_json_round_trip(rng):
    psi = random_pure_state(rng, 4)
    rho = np.outer(psi, psi.conj())
    back = density_matrix_from_json(density_matrix_to_json(rho))
    assert two_norm(back - rho) < 1e-15
