import json
import math
import os

import numpy as np
import pytest

from ptdilate.circuitsim import postselect, probabilities, run_ideal, sample
from ptdilate.cli import main as cli_main
from ptdilate.harness import (ExperimentConfig, config_from_json,
                              config_to_json, default_config, model_distance,
                              run_experiment, run_fig1, run_fig2, run_fig3e,
                              run_supp_bloch, run_supp_norm, t_values,
                              vartheta_prep_gates, vartheta_state)
from ptdilate.synthesis import Circuit
from ptdilate.tomography import density_matrix_from_json

SMALL = dict(r_values=(0.6,), t_grid=(0.0, 1.0, 0.5))


def test_t_values_grid():
    cfg = default_config("fig1", t_grid=(0.0, 1.0, 0.25))
    assert t_values(cfg) == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_config_json_round_trip():
    cfg = default_config("fig2", seed=99, mode="dilated_sampled")
    back = config_from_json(config_to_json(cfg))
    assert back == cfg


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(experiment="nope")
    with pytest.raises(ValueError):
        ExperimentConfig(mode="bogus")


def test_vartheta_preparation_circuit():
    vt = math.radians(59.185)
    circ = Circuit(("q", "qp"), tuple(vartheta_prep_gates(vt)))
    state = run_ideal(circ)
    target = vartheta_state(vt)
    overlap = abs(np.vdot(target, state))
    assert abs(overlap - 1.0) < 1e-12


def test_fig1_mode_chain_agreement():
    exact = run_fig1(default_config("fig1", mode="dilated_exact", **SMALL))
    for row in exact:
        assert abs(row["p0_sim"] - row["p0_theory"]) < 1e-6
        assert row["err_u"] <= 5e-4
    sampled = run_fig1(default_config("fig1", mode="dilated_sampled", **SMALL))
    for row_s, row_e in zip(sampled, exact):
        sigma = max(row_s["p0_stderr"], 1e-12)
        assert abs(row_s["p0_sampled"] - row_e["p0_sim"]) <= 4 * sigma


def test_fig2_returns_fit_report():
    cfg = default_config("fig2", mode="dilated_exact",
                         r_values=(0.6,), t_grid=(0.0, 8.0, 0.5))
    rows, fits = run_fig2(cfg)
    fit = fits["r=0.6"]
    assert fit["kind"] == "recurrence_time"
    assert abs(fit["fitted"] - fit["expected"]) / fit["expected"] < 0.02
    for row in rows:
        assert abs(row["d_sim"] - row["d_theory"]) < 1e-6


def test_model_distance_limits():
    ts = np.array([0.0, 0.5, 1.0])
    d = model_distance(0.6, ts, math.pi / math.sqrt(1 - 0.36))
    assert abs(d[0] - 1.0) < 1e-12
    d_broken = model_distance(1.3, ts, 1 / (2 * math.sqrt(0.69)))
    assert np.all(np.diff(d_broken) < 0)


def test_fig3e_baseline_concurrence():
    cfg = default_config("fig3e", r_values=(0.3,), t_grid=(0.0, 0.5, 0.25),
                         mode="dilated_exact")
    rows = run_fig3e(cfg)
    assert abs(rows[0]["c"] - 0.475) < 1e-3


def test_supp_bloch_exceptional_row():
    cfg = default_config("supp_bloch", r_values=(0.0, 1.0, 2.0))
    rows = run_supp_bloch(cfg)
    ep = rows[1]
    assert ep["bloch1_x"] == ep["bloch2_x"]
    assert abs(ep["bloch1_y"] - 1.0) < 1e-9
    assert abs(ep["eig1_re"]) < 1e-9 and abs(ep["eig1_im"]) < 1e-9


def test_supp_norm_values():
    cfg = default_config("supp_norm", r_values=(0.0, 1.3),
                         t_grid=(0.0, 2.0, 1.0))
    rows = run_supp_norm(cfg)
    for row in rows:
        if row["r"] == 0.0:
            assert abs(row["inv_norm"] - 1.0) < 1e-12
        if row["r"] == 1.3 and row["t"] == 2.0:
            assert row["inv_norm"] < 0.5


def test_run_experiment_outputs_and_determinism(tmp_path):
    cfg = default_config("fig1", mode="dilated_sampled", **SMALL)
    m1 = run_experiment(cfg, str(tmp_path / "a"))
    m2 = run_experiment(cfg, str(tmp_path / "b"))
    assert m1.config_hash == m2.config_hash
    csv_a = (tmp_path / "a" / "fig1.csv").read_bytes()
    csv_b = (tmp_path / "b" / "fig1.csv").read_bytes()
    assert csv_a == csv_b
    assert csv_a.count(b"\r\n") >= 3
    header = csv_a.split(b"\r\n")[0].decode()
    assert header.split(",")[0] == "mode"
    assert (tmp_path / "a" / "fig1.png").exists()
    assert (tmp_path / "a" / "manifest.json").exists()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config"]["experiment"] == "fig1"
    assert "fig1.csv" in manifest["outputs"]


def test_thread_env_does_not_change_results(tmp_path, monkeypatch):
    cfg = default_config("fig1", mode="dilated_exact", **SMALL)
    run_experiment(cfg, str(tmp_path / "seq"), plot=False)
    monkeypatch.setenv("PTDILATE_THREADS", "3")
    run_experiment(cfg, str(tmp_path / "par"), plot=False)
    assert (tmp_path / "seq" / "fig1.csv").read_bytes() == \
        (tmp_path / "par" / "fig1.csv").read_bytes()


def test_every_row_carries_mode_tag(tmp_path):
    cfg = default_config("supp_norm", r_values=(0.6,), t_grid=(0.0, 1.0, 0.5))
    run_experiment(cfg, str(tmp_path), plot=False)
    lines = (tmp_path / "supp_norm.csv").read_text().strip().split("\r\n")
    for line in lines[1:]:
        assert line.startswith("analytic,")


def test_cli_run_and_config_override(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "experiment": "fig1", "r_values": [0.6], "t_grid": [0.0, 0.5, 0.5],
        "mode": "analytic", "seed": 1,
    }))
    out = tmp_path / "out"
    rc = cli_main(["run", "fig1", "--config", str(cfg_path),
                   "--mode", "dilated_exact", "--out", str(out), "--no-plot"])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["mode"] == "dilated_exact"  # CLI overrode file


def test_cli_decompose(tmp_path):
    out = tmp_path / "circ.json"
    rc = cli_main(["decompose", "--r", "0.6", "--t", "0.5",
                   "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    kinds = [g["kind"] for g in doc["gates"]]
    assert kinds.count("CNOT") == 3
    assert kinds.count("U3") == 8


def test_cli_tomo_round_trip(tmp_path):
    from ptdilate.synthesis import circuit_unitary
    from ptdilate.tomography import two_qubit_settings, state_fidelity

    psi2 = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
    full = np.kron(np.array([1.0, 0.0], dtype=complex), psi2)
    shots_dir = tmp_path / "shots"
    shots_dir.mkdir()
    for s in two_qubit_settings():
        u = circuit_unitary(Circuit(("q", "qp"), s.pre_rotation))
        state = np.kron(np.eye(2, dtype=complex), u) @ full
        table = sample(state, 8192, seed=5, setting_id=s.id)
        (shots_dir / f"{s.id}.json").write_text(json.dumps(table.to_json()))
    out = tmp_path / "rho.json"
    rc = cli_main(["tomo", "--in", str(shots_dir), "--out", str(out)])
    assert rc == 0
    rho = density_matrix_from_json(json.loads(out.read_text()))
    assert state_fidelity(rho, psi2) > 0.97


def test_cli_rejects_mismatched_config(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"experiment": "fig2"}))
    with pytest.raises(SystemExit):
        cli_main(["run", "fig1", "--config", str(cfg_path),
                  "--out", str(tmp_path / "x")])
