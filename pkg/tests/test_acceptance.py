"""Acceptance gate: every criterion printed as its own pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines live.
The expensive dilated paths and synthesis results are cached inside the
harness module, so the full suite shares one integration per (r, grid).
"""
import math
import time

import numpy as np
import pytest

from conftest import haar_unitary, random_pure_state
from ptdilate.circuitsim import postselect, sample
from ptdilate.dilation import (calibrate, calibrate_for_time, closed_form_metric,
                               evolve_M, frame_at, metric_ode_residual,
                               norm_conservation_ratio, propagate_U_path,
                               verify_solution_structure)
from ptdilate.harness import (clear_caches, default_config, run_fig1, run_fig2,
                              run_fig3, run_fig3e, run_table_s1)
from ptdilate.linalg import I2, two_norm
from ptdilate.metrics import concurrence, fit_critical_exponent, trace_distance
from ptdilate.nonhermitian import NonHermitianParams, nh_propagator
from ptdilate.synthesis import Circuit, SynthesisConfig, circuit_unitary, decompose
from ptdilate.tomography import (single_qubit_reconstruct, state_fidelity,
                                 two_qubit_reconstruct, two_qubit_settings)

SUPP_TABLE_1 = {
    0.5: 0.8613, 1.0: 0.6547, 1.5: 0.4535, 2.0: 0.2495,
    2.5: 0.0518, 3.0: 0.0695, 3.5: 0.7314, 4.0: 0.9951,
    4.5: 0.8315, 5.0: 0.6250, 5.5: 0.4242, 6.0: 0.2191,
    6.5: 0.0300, 7.0: 0.1278, 7.5: 0.8220, 8.0: 0.9821,
}


def _report(criterion: str, ok: bool, detail: str) -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


@pytest.fixture(scope="module")
def fig_runs():
    """Exact / sampled / noisy rows for the three figure experiments."""
    runs = {}
    for experiment, runner in (("fig1", run_fig1), ("fig2", run_fig2),
                               ("fig3", run_fig3)):
        for mode in ("dilated_exact", "dilated_sampled", "dilated_sampled_noisy"):
            cfg = default_config(experiment, mode=mode)
            result = runner(cfg)
            rows = result[0] if isinstance(result, tuple) else result
            fits = result[1] if isinstance(result, tuple) else None
            runs[(experiment, mode)] = (rows, fits)
    return runs


def test_criterion_1_supp_table_reproduction():
    clear_caches()
    start = time.perf_counter()
    cfg = default_config("table_s1", mode="dilated_exact")
    rows = run_table_s1(cfg)
    elapsed = time.perf_counter() - start
    worst_pub = max(abs(row["p0"] - SUPP_TABLE_1[row["t"]]) for row in rows)
    worst_num = max(abs(row["p0"] - row["p0_num"]) for row in rows)
    worst_err = max(row["err_u"] for row in rows)
    ok = (len(rows) == 16 and worst_pub <= 5e-4 and worst_num <= 5e-4
          and worst_err <= 5e-4 and elapsed < 60.0)
    _report("criterion 1 (Supp Table 1)",
            ok, f"|p0-published| {worst_pub:.2e}, |p0-p0_num| {worst_num:.2e}, "
                f"err_U {worst_err:.2e}, runtime {elapsed:.1f}s")


def test_criterion_2_calibration_constants():
    c06 = calibrate(0.6, horizon=8.0, m0=2.0, f=1.01)
    c10 = calibrate(1.0, horizon=8.0, m0=2.0, f=1.01)
    ok = (abs(c06.eta0 - 1.7436) <= 5e-4 and abs(c06.theta - 2.1001) <= 5e-4
          and abs(c10.eta0 - 16.1112) <= 5e-3 and abs(c10.theta - 3.0176) <= 5e-4)
    _report("criterion 2 (calibration constants)", ok,
            f"eta0(0.6)={c06.eta0:.4f}, theta(0.6)={c06.theta:.4f}, "
            f"eta0(1.0)={c10.eta0:.4f}, theta(1.0)={c10.theta:.4f}")


def test_criterion_3_characteristic_time_fits(fig_runs):
    fits = fig_runs[("fig2", "dilated_exact")][1]
    tr = fits["r=0.6"]
    td = fits["r=1.3"]
    tr_target = math.pi / 0.8
    td_target = 1.0 / (2.0 * math.sqrt(0.69))
    ok = (abs(tr["fitted"] - tr_target) / tr_target <= 0.02
          and abs(td["fitted"] - td_target) / td_target <= 0.02)
    _report("criterion 3 (characteristic times)", ok,
            f"T_R fit {tr['fitted']:.4f} vs {tr_target:.4f}, "
            f"tau_D fit {td['fitted']:.4f} vs {td_target:.4f}")


def test_criterion_4_critical_exponents(fig_runs):
    delta_d = fig_runs[("fig2", "dilated_exact")][1]["r=1"]
    delta_c = fig_runs[("fig3", "dilated_exact")][1]["r=1"]
    ok = (abs(delta_d["delta"] - 1.93) <= 0.08
          and abs(delta_c["delta"] - 1.71) <= 0.05)
    _report("criterion 4 (critical exponents)", ok,
            f"distinguishability slope {delta_d['delta']:.3f} (target 1.93+-0.08), "
            f"concurrence slope {delta_c['delta']:.3f} (target 1.71+-0.05, "
            f"paper 1.71+-0.01; tolerance widened for grid sensitivity)")


def _coverage(pairs, n_sigma):
    inside = sum(1 for diff, sigma in pairs if diff <= n_sigma * sigma + 1e-12)
    return inside / len(pairs)


def test_criterion_5_shot_noise_consistency(fig_runs):
    pairs = []
    for exact_row, sampled_row in zip(fig_runs[("fig1", "dilated_exact")][0],
                                      fig_runs[("fig1", "dilated_sampled")][0]):
        pairs.append((abs(sampled_row["p0_sampled"] - exact_row["p0_sim"]),
                      sampled_row["p0_stderr"]))
    for exact_row, sampled_row in zip(fig_runs[("fig2", "dilated_exact")][0],
                                      fig_runs[("fig2", "dilated_sampled")][0]):
        pairs.append((abs(sampled_row["d_sampled"] - exact_row["d_sim"]),
                      sampled_row["d_stderr"]))
    for exact_row, sampled_row in zip(fig_runs[("fig3", "dilated_exact")][0],
                                      fig_runs[("fig3", "dilated_sampled")][0]):
        pairs.append((abs(sampled_row["c_qq_ps0_sampled"] - exact_row["c_qq_ps0"]),
                      sampled_row["c_stderr"]))
    frac = _coverage(pairs, 3.0)
    ok = frac >= 0.95
    _report("criterion 5 (shot-noise 3-sigma coverage)", ok,
            f"{frac:.1%} of {len(pairs)} grid points within 3 sigma")


def test_criterion_6_readout_correction_round_trip(fig_runs):
    pairs = []
    for s_row, n_row in zip(fig_runs[("fig1", "dilated_sampled")][0],
                            fig_runs[("fig1", "dilated_sampled_noisy")][0]):
        sigma = math.sqrt(s_row["p0_stderr"] ** 2 + n_row["p0_stderr"] ** 2)
        pairs.append((abs(n_row["p0_sampled"] - s_row["p0_sampled"]), sigma))
    frac = _coverage(pairs, 4.0)
    ok = frac >= 0.95
    _report("criterion 6 (readout correction round trip)", ok,
            f"{frac:.1%} of {len(pairs)} corrected populations within 4 sigma "
            f"of the noise-free sampled ones")


def test_criterion_7_entanglement_increase():
    cfg = default_config("fig3e", mode="dilated_sampled")
    rows = run_fig3e(cfg)
    by_r = {}
    for row in rows:
        by_r.setdefault(row["r"], []).append(row)
    ok_c0 = all(abs(series[0]["c_sampled"] - 0.475) <= 0.01
                for series in by_r.values())
    peak = max(row["c_sampled"] for row in by_r[0.3])
    ok_peak = 0.75 <= peak <= 0.85
    ok_mono = True
    for r in (1.0, 1.3):
        series = by_r[r]
        for a, b in zip(series, series[1:]):
            slack = 3.0 * math.sqrt(a["c_stderr"] ** 2 + b["c_stderr"] ** 2)
            if b["c_sampled"] - a["c_sampled"] > slack:
                ok_mono = False
    ok = ok_c0 and ok_peak and ok_mono
    _report("criterion 7 (entanglement increase)", ok,
            f"C(0) within 0.475+-0.01: {ok_c0}; max C(r=0.3) = {peak:.3f} "
            f"in [0.75, 0.85]: {ok_peak}; nonincreasing for r in (1.0, 1.3): {ok_mono}")


def test_criterion_8_property_suite(rng):
    details = []

    # Unitarity and the branch-structure residual across the grid.
    worst_unit, worst_res = 0.0, 0.0
    for r in (0.6, 1.0, 1.3):
        for t in np.arange(0.5, 8.0001, 0.5):
            ctx = calibrate_for_time(r, float(t))
            u = propagate_U_path(ctx, [float(t)])[float(t)]
            worst_unit = max(worst_unit, two_norm(u.conj().T @ u - np.eye(4)))
            worst_res = max(worst_res,
                            verify_solution_structure(ctx, float(t)))
    assert worst_unit < 1e-7
    assert worst_res < 1e-6
    details.append(f"unitarity {worst_unit:.1e}, structure residual {worst_res:.1e}")

    # Metric identities.
    worst_eta, worst_ode, worst_closed = 0.0, 0.0, 0.0
    ctx = calibrate(0.6)
    for t in np.arange(0.0, 8.0001, 0.5):
        fr = frame_at(ctx, float(t))
        worst_eta = max(worst_eta, two_norm(fr.eta @ fr.eta + I2 - fr.M))
        worst_ode = max(worst_ode, metric_ode_residual(0.6, float(t), ctx))
    for r in (0.2, 0.6, 0.9):
        ctx_r = calibrate(r)
        for t in np.arange(0.0, 8.0001, 0.1):
            worst_closed = max(worst_closed, two_norm(
                evolve_M(ctx_r, float(t))
                - closed_form_metric(r, float(t), ctx_r.m0_scale)))
    assert worst_eta < 1e-6
    assert worst_ode < 1e-6
    assert worst_closed < 1e-8
    details.append(f"eta^2+I defect {worst_eta:.1e}, ODE {worst_ode:.1e}, "
                   f"closed form {worst_closed:.1e}")

    # Ideal trajectory identities and permutation symmetry.
    bell = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
    cfg = default_config("fig3", r_values=(0.6,), mode="dilated_exact")
    rows, _ = run_fig3(cfg)
    worst_comp = max(abs(row["tangle"] + row["c_qq_reduced"] ** 2 - 1)
                     for row in rows)
    worst_caq = max(max(row["c_aq"], row["c_aqp"]) for row in rows)
    worst_sq = max(abs(row["s_q"] - 0.5) for row in rows)
    worst_tsa = max(abs(row["tangle"] - 2 * row["s_a"]) for row in rows)
    assert worst_comp < 1e-8
    assert worst_caq < 1e-8
    assert worst_sq < 1e-8
    assert worst_tsa < 1e-8
    worst_perm = 0.0
    for r in (0.6, 1.0, 1.3):
        for t in np.arange(0.0, 8.0001, 0.5):
            psi = np.kron(nh_propagator(NonHermitianParams(r, float(t))), I2) @ bell
            psi /= np.linalg.norm(psi)
            worst_perm = max(worst_perm,
                             float(np.linalg.norm(psi - psi.reshape(2, 2).T.reshape(-1))))
    assert worst_perm < 1e-10
    details.append(f"complementarity {worst_comp:.1e}, C_aq {worst_caq:.1e}, "
                   f"s_q drift {worst_sq:.1e}, tangle-2s_a {worst_tsa:.1e}, "
                   f"permutation {worst_perm:.1e}")

    # Synthesis success rate on 100 seeded random unitaries.
    errs = [decompose(haar_unitary(rng, 4), SynthesisConfig(seed=11)).err_u
            for _ in range(100)]
    successes = sum(1 for e in errs if e <= 5e-4)
    assert successes >= 99
    details.append(f"synthesis success {successes}/100, max err {max(errs):.1e}")

    _report("criterion 8 (property suite)", True, "; ".join(details))


def test_criterion_9_tomography_inversion(rng):
    settings = two_qubit_settings()
    worst_exact = 0.0
    fidelities = []
    for k in range(50):
        psi = random_pure_state(rng, 4)
        exact_tables, sampled_tables = {}, {}
        for s in settings:
            u = circuit_unitary(Circuit(("q", "qp"), s.pre_rotation))
            out = u @ psi
            exact_tables[s.id] = np.abs(out) ** 2
            table = sample(out, 8192, seed=1000 + k, setting_id=f"acc9/{k}/{s.id}")
            sampled_tables[s.id] = table.frequencies()
        rho_exact = two_qubit_reconstruct(exact_tables)
        worst_exact = max(worst_exact, float(np.linalg.norm(
            rho_exact - np.outer(psi, psi.conj()))))
        rho_sampled = two_qubit_reconstruct(sampled_tables)
        fidelities.append(state_fidelity(rho_sampled, psi))
    median_f = float(np.median(fidelities))
    ok = worst_exact < 1e-10 and median_f >= 0.98
    _report("criterion 9 (tomography inversion)", ok,
            f"exact Frobenius error {worst_exact:.1e} over 50 states, "
            f"sampled median fidelity {median_f:.4f}")
