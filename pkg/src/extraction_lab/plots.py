"""Figure rendering for sweep/ablation outputs.

Everything draws straight to files through the Agg backend — there is no
interactive display path. Figures are a convenience companion to the CSV,
which remains the canonical artifact.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)
import numpy as np  # noqa: E402

from .metrics import MetricsRow  # noqa: E402

_MODE_STYLE = {
    "vanilla": ("tab:gray", "o"),
    "active_only": ("tab:orange", "s"),
    "self_paced_only": ("tab:green", "^"),
    "full": ("tab:blue", "D"),
}


def _style(mode: str) -> tuple[str, str]:
    return _MODE_STYLE.get(mode, ("tab:red", "x"))


def plot_sweep(rows: list[MetricsRow], out_path, title: str = "Budget sweep") -> None:
    """Mean agreement (± std) against per-class budget, one curve per
    (mode, label_mode) pair, log-2 budget axis."""
    agg = [r for r in rows if r.status == "aggregate" and r.agreement_accuracy is not None]
    if not agg:
        raise ValueError("no aggregate rows to plot")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    curves: dict[tuple[str, str], list[MetricsRow]] = {}
    for row in agg:
        curves.setdefault((row.mode, row.label_mode), []).append(row)
    for (mode, label_mode), points in sorted(curves.items()):
        points = sorted(points, key=lambda r: r.per_class_budget)
        budgets = [p.per_class_budget for p in points]
        means = [p.agreement_accuracy for p in points]
        stds = [p.agreement_std or 0.0 for p in points]
        color, marker = _style(mode)
        ax.errorbar(
            budgets,
            means,
            yerr=stds,
            color=color,
            marker=marker,
            capsize=3,
            label=f"{mode} / {label_mode}",
        )
    ax.set_xscale("log", base=2)
    ax.set_xlabel("oracle calls per class")
    ax.set_ylabel("agreement accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_pseudo_accuracy(rows: list[MetricsRow], out_path) -> None:
    """Pseudo-label accuracy against budget, from aggregate rows that have it."""
    agg = [
        r
        for r in rows
        if r.status == "aggregate" and r.pseudo_label_accuracy is not None
    ]
    if not agg:
        raise ValueError("no pseudo-label accuracy to plot")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    curves: dict[tuple[str, str], list[MetricsRow]] = {}
    for row in agg:
        curves.setdefault((row.mode, row.label_mode), []).append(row)
    for (mode, label_mode), points in sorted(curves.items()):
        points = sorted(points, key=lambda r: r.per_class_budget)
        color, marker = _style(mode)
        ax.plot(
            [p.per_class_budget for p in points],
            [p.pseudo_label_accuracy for p in points],
            color=color,
            marker=marker,
            label=f"{mode} / {label_mode}",
        )
    ax.set_xscale("log", base=2)
    ax.set_xlabel("oracle calls per class")
    ax.set_ylabel("pseudo-label accuracy vs teacher")
    ax.set_ylim(0.0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title("Pseudo-label quality")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_ablation(
    accuracies: dict[str, list[float]], out_path, title: str = "Mode comparison"
) -> None:
    """Bar chart of mean agreement per mode with per-seed scatter on top."""
    if not accuracies:
        raise ValueError("nothing to plot")
    fig, ax = plt.subplots(figsize=(6, 4))
    modes = list(accuracies)
    means = [float(np.mean(accuracies[m])) for m in modes]
    stds = [float(np.std(accuracies[m])) for m in modes]
    xs = np.arange(len(modes))
    colors = [_style(m)[0] for m in modes]
    ax.bar(xs, means, yerr=stds, color=colors, alpha=0.75, capsize=4)
    for x, mode in zip(xs, modes):
        vals = accuracies[mode]
        ax.plot(
            np.full(len(vals), x) + np.linspace(-0.15, 0.15, len(vals)),
            vals,
            linestyle="none",
            marker=".",
            color="black",
            alpha=0.6,
            markersize=4,
        )
    ax.set_xticks(xs)
    ax.set_xticklabels(modes, rotation=15)
    ax.set_ylabel("agreement accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.grid(True, axis="y", alpha=0.3)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_attack_rounds(report_dict: dict, out_path) -> None:
    """Per-round view of one run: budget spent and pseudo-label quality."""
    rounds = report_dict.get("rounds", [])
    if not rounds:
        raise ValueError("report has no rounds")
    idx = [r["round_index"] for r in rounds]
    calls = [r["calls_used"] for r in rounds]
    pseudo = [r.get("pseudo_label_accuracy") for r in rounds]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.8))
    ax1.step(idx, calls, where="post", marker="o", color="tab:blue")
    ax1.axhline(report_dict.get("total_budget"), color="tab:red", linestyle="--", alpha=0.7)
    ax1.set_xlabel("round")
    ax1.set_ylabel("oracle calls used")
    ax1.grid(True, alpha=0.3)
    if any(p is not None for p in pseudo):
        xs = [i for i, p in zip(idx, pseudo) if p is not None]
        ys = [p for p in pseudo if p is not None]
        ax2.plot(xs, ys, marker="s", color="tab:green")
        ax2.set_ylim(0.0, 1.02)
    else:
        ax2.text(0.5, 0.5, "no pseudo-label diagnostics", ha="center", va="center")
    ax2.set_xlabel("round")
    ax2.set_ylabel("pseudo-label accuracy")
    ax2.grid(True, alpha=0.3)
    fig.suptitle(f"{report_dict.get('mode')} / {report_dict.get('label_mode')}")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
