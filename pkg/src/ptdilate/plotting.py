"""Figure rendering for experiment outputs, written next to the CSV files."""
from __future__ import annotations

import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _by_r(rows: list[dict]) -> dict[float, list[dict]]:
    grouped: dict[float, list[dict]] = defaultdict(list)
    for row in rows:
        grouped[row["r"]].append(row)
    return dict(sorted(grouped.items()))


def _series(rows: list[dict], key: str) -> tuple[list[float], list[float]]:
    pts = [(row["t"], row[key]) for row in rows
           if key in row and row[key] not in (None, "")]
    return [p[0] for p in pts], [p[1] for p in pts]


def _line_and_dots(ax, rows: list[dict], theory_key: str, dot_keys: list[str],
                   ylabel: str) -> None:
    ts, vs = _series(rows, theory_key)
    if ts:
        ax.plot(ts, vs, "k-", lw=1.2, label=theory_key)
    markers = ["o", "s", "^"]
    for key, mk in zip(dot_keys, markers):
        ts, vs = _series(rows, key)
        if ts:
            ax.plot(ts, vs, mk, ms=3.5, label=key)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=7)


def _grid_figure(rows: list[dict], theory_key: str, dot_keys: list[str],
                 ylabel: str, path: str) -> str:
    grouped = _by_r(rows)
    n = len(grouped)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 2.8), squeeze=False)
    for ax, (r, sub) in zip(axes[0], grouped.items()):
        _line_and_dots(ax, sub, theory_key, dot_keys, ylabel)
        ax.set_title(f"r = {r:g}", fontsize=9)
        ax.set_ylim(-0.05, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _heatmap(rows: list[dict], value_key: str, path: str, label: str) -> str:
    grouped = _by_r(rows)
    rs = sorted(grouped)
    ts = sorted({row["t"] for row in rows})
    import numpy as np
    grid = np.full((len(rs), len(ts)), np.nan)
    for i, r in enumerate(rs):
        for row in grouped[r]:
            grid[i, ts.index(row["t"])] = row.get(value_key, np.nan)
    fig, ax = plt.subplots(figsize=(5, 3.4))
    im = ax.pcolormesh(ts, rs, grid, shading="nearest", cmap="viridis")
    fig.colorbar(im, ax=ax, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("r")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_experiment(experiment: str, rows: list[dict], out_dir: str) -> str | None:
    """Render the standard figure for an experiment; returns the PNG path."""
    path = os.path.join(out_dir, f"{experiment}.png")
    many_r = len({row["r"] for row in rows if "r" in row}) > 8

    if experiment == "fig1":
        if many_r:
            return _heatmap(rows, "p0_theory", path, "p0")
        return _grid_figure(rows, "p0_theory", ["p0_sim", "p0_sampled"], "p0", path)
    if experiment == "fig2":
        return _grid_figure(rows, "d_theory", ["d_sim", "d_sampled"], "D", path)
    if experiment == "fig3":
        return _grid_figure(rows, "c_qq_ps0",
                            ["c_qq_ps0_sampled", "c_qq_ps1"], "C", path)
    if experiment == "fig3e":
        return _grid_figure(rows, "c", ["c_sampled"], "C", path)
    if experiment == "table_s1":
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7, 2.8))
        ts, p0 = _series(rows, "p0")
        _, p0n = _series(rows, "p0_num")
        ax1.plot(ts, p0, "k-", lw=1.0, label="p0")
        ax1.plot(ts, p0n, "ro", ms=3.5, label="p0_num")
        ax1.set_xlabel("t"); ax1.set_ylabel("p0"); ax1.legend(fontsize=7)
        ts, errs = _series(rows, "err_u")
        ax2.semilogy(ts, errs, "b.-", lw=0.8)
        ax2.set_xlabel("t"); ax2.set_ylabel("err_U")
        fig.tight_layout(); fig.savefig(path, dpi=150); plt.close(fig)
        return path
    if experiment == "supp_bloch":
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7, 3))
        rs = [row["r"] for row in rows]
        for key, style in (("eig1_re", "r-"), ("eig2_re", "b-"),
                           ("eig1_im", "r--"), ("eig2_im", "b--")):
            ax1.plot(rs, [row[key] for row in rows], style, lw=1.0, label=key)
        ax1.set_xlabel("r"); ax1.set_ylabel("eigenvalue"); ax1.legend(fontsize=7)
        for pre in ("bloch1", "bloch2"):
            ax2.scatter([row[f"{pre}_y"] for row in rows],
                        [row[f"{pre}_z"] for row in rows],
                        s=6, c=rs, cmap="viridis")
        ax2.set_xlabel("Bloch y"); ax2.set_ylabel("Bloch z")
        fig.tight_layout(); fig.savefig(path, dpi=150); plt.close(fig)
        return path
    if experiment == "supp_norm":
        fig, ax = plt.subplots(figsize=(4.5, 3))
        for r, sub in _by_r(rows).items():
            ts, vs = _series(sub, "inv_norm")
            ax.plot(ts, vs, lw=1.0, label=f"r={r:g}")
        ax.set_xlabel("t"); ax.set_ylabel("1/N(t)"); ax.legend(fontsize=7)
        fig.tight_layout(); fig.savefig(path, dpi=150); plt.close(fig)
        return path
    if experiment == "supp_subspace":
        if many_r:
            return _heatmap(rows, "c_ps0", path, "C (ancilla 0)")
        return _grid_figure(rows, "c_ps0", ["c_ps1"], "C", path)
    return None
