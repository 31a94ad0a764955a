"""Command-line interface: experiment runs, gate synthesis and tomography."""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .circuitsim import ShotTable, postselect
from .dilation import calibrate_for_time, propagate_U_path
from .harness import (EXPERIMENTS, MODES, ExperimentConfig, config_from_json,
                      config_to_json, default_config, run_experiment)
from .synthesis import SynthesisConfig, decompose
from .tomography import (density_matrix_to_json, single_qubit_reconstruct,
                         two_qubit_reconstruct)


def _load_config_file(path: str) -> dict:
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError as exc:
            raise SystemExit(
                "TOML configs need Python >= 3.11; use JSON instead") from exc
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path) as fh:
        return json.load(fh)


def _cmd_run(args: argparse.Namespace) -> int:
    if args.config:
        doc = _load_config_file(args.config)
        doc.setdefault("experiment", args.experiment)
        if doc["experiment"] != args.experiment:
            raise SystemExit("config experiment does not match the command line")
        cfg = config_from_json(doc)
    else:
        cfg = default_config(args.experiment)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.mode is not None:
        overrides["mode"] = args.mode
    if args.shots is not None:
        overrides["shots"] = args.shots
    if overrides:
        cfg = config_from_json({**config_to_json(cfg), **overrides})
    manifest = run_experiment(cfg, args.out, plot=not args.no_plot)
    print(json.dumps({"outputs": manifest.outputs,
                      "config_hash": manifest.config_hash,
                      "timing_s": manifest.timing_s}, indent=2))
    return 0


def _cmd_decompose(args: argparse.Namespace) -> int:
    ctx = calibrate_for_time(args.r, args.t, horizon=args.horizon,
                             m0=args.m0, f=args.f)
    target = propagate_U_path(ctx, [args.t], args.dt)[args.t]
    config = SynthesisConfig(seed=args.seed, cnot_control=args.cnot_control)
    report = decompose(target, config)
    with open(args.out, "w") as fh:
        json.dump(report.circuit.to_json(), fh, indent=2)
    summary = report.to_json()
    summary["calibration"] = {"eta0": ctx.eta0, "theta": ctx.theta,
                              "mu_min": ctx.mu_min, "horizon": ctx.time_horizon}
    print(json.dumps(summary, indent=2))
    return 0


def _load_tables(directory: str) -> dict[str, ShotTable]:
    tables = {}
    for name in sorted(os.listdir(directory)):
        if not name.endswith(".json"):
            continue
        with open(os.path.join(directory, name)) as fh:
            table = ShotTable.from_json(json.load(fh))
        tables[table.setting_id] = table
    if not tables:
        raise SystemExit(f"no shot tables found in {directory}")
    return tables


def _cmd_tomo(args: argparse.Namespace) -> int:
    tables = _load_tables(args.in_dir)
    ids = set(tables)
    single = {"X", "Y", "Z"} <= ids
    double = {f"T{i}" for i in range(1, 8)} <= ids
    if not single and not double:
        raise SystemExit("need settings X/Y/Z or T1..T7 in the input directory")
    target_dim = 2 if single else 4
    dists = {}
    wanted = ("X", "Y", "Z") if single else tuple(f"T{i}" for i in range(1, 8))
    for sid in wanted:
        freq = tables[sid].frequencies()
        while freq.size > target_dim:
            freq, _ = postselect(freq, args.postselect)
        dists[sid] = freq
    if single:
        rho = single_qubit_reconstruct(dists)
    else:
        rho = two_qubit_reconstruct(dists, args.convention)
    with open(args.out, "w") as fh:
        json.dump(density_matrix_to_json(rho), fh, indent=2)
    print(json.dumps({"trace": float(np.trace(rho).real),
                      "dim": rho.shape[0], "out": args.out}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ptdilate",
        description="Simulated PT-symmetry breaking experiments on a dilated qubit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment and write CSV/figures")
    p_run.add_argument("experiment", choices=EXPERIMENTS)
    p_run.add_argument("--config", help="JSON (or TOML) config file")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--mode", choices=MODES)
    p_run.add_argument("--shots", type=int)
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--no-plot", action="store_true",
                       help="skip figure rendering")
    p_run.set_defaults(func=_cmd_run)

    p_dec = sub.add_parser("decompose",
                           help="synthesize the dilated unitary at (r, t)")
    p_dec.add_argument("--r", type=float, required=True)
    p_dec.add_argument("--t", type=float, required=True)
    p_dec.add_argument("--out", default="circuit.json")
    p_dec.add_argument("--seed", type=int, default=7)
    p_dec.add_argument("--cnot-control", choices=("q", "a"), default="q")
    p_dec.add_argument("--m0", type=float, default=2.0)
    p_dec.add_argument("--f", type=float, default=1.01)
    p_dec.add_argument("--horizon", type=float, default=8.0)
    p_dec.add_argument("--dt", type=float, default=1e-3)
    p_dec.set_defaults(func=_cmd_decompose)

    p_tomo = sub.add_parser("tomo", help="reconstruct a state from shot tables")
    p_tomo.add_argument("--in", dest="in_dir", required=True,
                        help="directory of ShotTable JSON files")
    p_tomo.add_argument("--out", default="rho.json")
    p_tomo.add_argument("--convention", choices=("supplement", "maintext"),
                        default="supplement")
    p_tomo.add_argument("--postselect", type=int, choices=(0, 1), default=0)
    p_tomo.set_defaults(func=_cmd_tomo)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
