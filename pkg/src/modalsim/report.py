"""Report rendering: summary tables plus matplotlib figures.

Reads the CSV tables produced by ``write_results`` back in and renders the
standard result figures next to them: mean/variance of normalized travel
time against the social ratio, mode usage against the social ratio, the
per-agent travel-time change between the lowest and highest ratio, and an
edge-by-time congestion heatmap.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .scenario_io import IoError

MODE_LABELS = ("walk", "bike", "car", "transit")


def _read_csv(path: str) -> list:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}")


def _num(value):
    if value is None or value == "":
        return None
    return float(value)


def format_summary_table(rows: list) -> str:
    """Fixed-width text table of the per-alpha summary."""
    if not rows:
        return "(empty summary)"
    cols = ["alpha", "mean_ntt", "var_ntt", "share_walk", "share_bike",
            "share_car", "share_transit", "finished", "unfinished"]
    header = "  ".join(f"{c:>12}" for c in cols)
    lines = [header, "-" * len(header)]
    for row in rows:
        cells = []
        for c in cols:
            v = row.get(c, "")
            try:
                cells.append(f"{float(v):>12.4f}")
            except (TypeError, ValueError):
                cells.append(f"{str(v):>12}")
        lines.append("  ".join(cells))
    return "\n".join(lines)


def plot_travel_time(summary_rows: list, out_path: str) -> None:
    alphas = [_num(r["alpha"]) for r in summary_rows]
    means = [_num(r["mean_ntt"]) for r in summary_rows]
    variances = [_num(r["var_ntt"]) for r in summary_rows]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    ax1.plot(alphas, means, "o-", color="tab:blue")
    ax1.set_ylabel("mean normalized travel time")
    ax1.grid(True, alpha=0.3)
    ax2.plot(alphas, variances, "s-", color="tab:orange")
    ax2.set_ylabel("variance")
    ax2.set_xlabel("social ratio")
    ax2.grid(True, alpha=0.3)
    fig.suptitle("Normalized travel time vs social ratio")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_mode_distribution(summary_rows: list, out_path: str) -> None:
    alphas = [_num(r["alpha"]) for r in summary_rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    width = 0.8 / len(MODE_LABELS)
    x = np.arange(len(alphas))
    for i, mode in enumerate(MODE_LABELS):
        shares = [_num(r.get(f"share_{mode}", 0)) or 0.0 for r in summary_rows]
        ax.bar(x + (i - 1.5) * width, shares, width, label=mode)
    ax.set_xticks(x)
    ax.set_xticklabels([f"{a:g}" for a in alphas])
    ax.set_xlabel("social ratio")
    ax.set_ylabel("fraction of finished agents using mode")
    ax.set_title("Mode usage vs social ratio")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_agent_deltas(delta_rows: list, out_path: str) -> None:
    deltas = sorted(_num(r["delta_s"]) for r in delta_rows)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if deltas:
        colors = ["tab:red" if d < 0 else "tab:green" for d in deltas]
        ax.bar(range(len(deltas)), deltas, color=colors, width=1.0)
    ax.axhline(0, color="black", linewidth=0.8)
    ax.set_xlabel("agents (sorted by change)")
    ax.set_ylabel("travel-time change, s (baseline - social)")
    ax.set_title("Per-agent travel-time change")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_congestion_heatmap(heatmap_rows: list, out_path: str,
                            alpha: float = None) -> None:
    """Edge-by-time matrix of load ratios for one run (default: the highest
    alpha present)."""
    rows = heatmap_rows
    if rows and "alpha" in rows[0]:
        alphas = sorted({_num(r["alpha"]) for r in rows})
        pick = alpha if alpha is not None else (alphas[-1] if alphas else None)
        rows = [r for r in rows if _num(r["alpha"]) == pick]
    edges = sorted({r["edge_id"] for r in rows})
    bins = sorted({_num(r["bin_start_s"]) for r in rows})
    fig, ax = plt.subplots(figsize=(8, max(3.0, 0.12 * len(edges) + 1.5)))
    if edges and bins:
        edge_ix = {e: i for i, e in enumerate(edges)}
        bin_ix = {b: i for i, b in enumerate(bins)}
        grid = np.zeros((len(edges), len(bins)))
        for r in rows:
            grid[edge_ix[r["edge_id"]], bin_ix[_num(r["bin_start_s"])]] = \
                _num(r["ratio"]) or 0.0
        im = ax.imshow(grid, aspect="auto", cmap="inferno", vmin=0.0,
                       interpolation="nearest")
        fig.colorbar(im, ax=ax, label="volume / capacity")
        ax.set_yticks(range(len(edges)))
        ax.set_yticklabels(edges, fontsize=5)
        ax.set_xticks(range(len(bins)))
        ax.set_xticklabels([f"{b / 3600:.1f}h" for b in bins], fontsize=6,
                           rotation=90)
    ax.set_xlabel("time of day")
    ax.set_title("Edge congestion heatmap")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_report(in_dir: str, out_dir: str = None) -> list:
    """Render the figure set from a results directory; returns written paths."""
    out_dir = out_dir or in_dir
    os.makedirs(out_dir, exist_ok=True)
    summary = _read_csv(os.path.join(in_dir, "summary.csv"))
    heatmap = _read_csv(os.path.join(in_dir, "heatmap.csv"))
    deltas_path = os.path.join(in_dir, "deltas.csv")
    deltas = _read_csv(deltas_path) if os.path.exists(deltas_path) else []

    written = []
    targets = (
        ("travel_time_vs_alpha.png", lambda p: plot_travel_time(summary, p)),
        ("mode_distribution.png", lambda p: plot_mode_distribution(summary, p)),
        ("agent_deltas.png", lambda p: plot_agent_deltas(deltas, p)),
        ("congestion_heatmap.png", lambda p: plot_congestion_heatmap(heatmap, p)),
    )
    for name, render in targets:
        path = os.path.join(out_dir, name)
        render(path)
        written.append(path)
    return written
