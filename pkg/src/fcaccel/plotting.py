"""Matplotlib rendering for the report paths.

Figures are written next to the delimited output with fixed PNG metadata so
repeated runs produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .perf import SweepResult

PNG_METADATA = {"Software": "fcaccel"}
_DPI = 120


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, dpi=_DPI, metadata=PNG_METADATA, bbox_inches="tight")
    plt.close(fig)


def save_sweep_figure(sw: SweepResult, path: str | Path) -> None:
    """Compute/transfer/processing time against the swept parameter."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    xs = sw.values
    ax.plot(xs, [r.t_calc * 1e3 for r in sw.reports], marker="o", label="compute")
    ax.plot(xs, [r.t_mem * 1e3 for r in sw.reports], marker="s", label="transfer")
    ax.plot(
        xs,
        [r.t_proc * 1e3 for r in sw.reports],
        marker="^",
        linestyle="--",
        label="processing (max)",
    )
    if sw.axis == "batch_size" and sw.reports:
        ax.axvline(
            sw.reports[0].n_opt,
            color="gray",
            linestyle=":",
            label=f"balanced batch size {sw.reports[0].n_opt:.2f}",
        )
    ax.set_xlabel(sw.axis)
    ax.set_ylabel("time (ms)")
    ax.grid(True, alpha=0.4)
    ax.legend()
    _save(fig, path)


def save_latency_figure(sw: SweepResult, path: str | Path) -> None:
    """Average per-sample result latency against the swept parameter."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(
        sw.values,
        [r.batch_latency * 1e3 for r in sw.reports],
        marker="o",
        color="tab:red",
    )
    ax.set_xlabel(sw.axis)
    ax.set_ylabel("average latency (ms)")
    ax.grid(True, alpha=0.4)
    _save(fig, path)


def save_layer_bars(labels: list[str], values: list[float], ylabel: str, path: str | Path) -> None:
    """Per-layer bar chart (cycle counts or modeled times)."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.bar(range(len(values)), values, color="tab:blue")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels)
    ax.set_ylabel(ylabel)
    ax.grid(True, axis="y", alpha=0.4)
    _save(fig, path)


def save_prune_figure(per_row: list[list[float]], per_layer: list[float], path: str | Path) -> None:
    """Per-row pruning factors as box plots with layer means overlaid."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.boxplot(per_row, positions=range(len(per_row)), widths=0.6)
    ax.plot(range(len(per_layer)), per_layer, "r^", label="layer mean")
    ax.set_xlabel("layer")
    ax.set_ylabel("pruning factor")
    ax.set_ylim(-0.05, 1.05)
    ax.grid(True, axis="y", alpha=0.4)
    ax.legend()
    _save(fig, path)
