"""Benchmark figure rendering: mean cluster count, AMI, query count and
runtime against the number of input trees, written as PNG files next to the
delimited tables."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import SummaryRow


def _errorbar(ax, xs, means, ses, ylabel, color="tab:blue"):
    ax.errorbar(xs, means, yerr=ses, marker="o", capsize=3, color=color, ecolor="black")
    ax.set_xscale("log", base=2)
    ax.set_xticks(xs)
    ax.set_xticklabels([str(x) for x in xs])
    ax.set_xlabel("number of input trees")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)


def render_benchmark_figures(
    summary: list[SummaryRow], out_dir: str | Path, true_clusters: int | None = None
) -> list[Path]:
    """Write the four per-m trend figures; returns the created paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    xs = [s.m for s in summary]
    written = []

    panels = [
        (
            "clusters_vs_m.png",
            [s.mean_clusters for s in summary],
            [s.se_clusters for s in summary],
            "mean cluster count",
            "tab:green",
        ),
        (
            "ami_vs_m.png",
            [s.mean_ami for s in summary],
            [s.se_ami for s in summary],
            "adjusted mutual information",
            "tab:blue",
        ),
        (
            "queries_vs_m.png",
            [s.mean_queries for s in summary],
            [s.se_queries for s in summary],
            "mean oracle consultations",
            "tab:orange",
        ),
        (
            "runtime_vs_m.png",
            [s.mean_runtime_ms for s in summary],
            [s.se_runtime_ms for s in summary],
            "mean runtime (ms)",
            "tab:red",
        ),
    ]
    for fname, means, ses, ylabel, color in panels:
        fig, ax = plt.subplots(figsize=(5.2, 3.6))
        _errorbar(ax, xs, means, ses, ylabel, color)
        if fname.startswith("clusters") and true_clusters is not None:
            ax.axhline(true_clusters, linestyle="--", color="gray", linewidth=1)
            ax.annotate(
                f"true = {true_clusters}",
                xy=(xs[0], true_clusters),
                xytext=(2, 4),
                textcoords="offset points",
                fontsize=8,
                color="gray",
            )
        fig.tight_layout()
        path = out_dir / fname
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written
