import pytest

from extraction_lab.metrics import MetricsRow
from extraction_lab.plots import (
    plot_ablation,
    plot_attack_rounds,
    plot_pseudo_accuracy,
    plot_sweep,
)


def agg_row(budget, mode, acc, std=0.02, pseudo=None):
    return MetricsRow(
        run_id=f"agg-b{budget}-{mode}-soft",
        per_class_budget=budget,
        mode=mode,
        label_mode="soft",
        seed=None,
        agreement_accuracy=acc,
        pseudo_label_accuracy=pseudo,
        calls_used=None,
        wall_ms=None,
        status="aggregate",
        agreement_std=std,
    )


def _is_png(path):
    return path.exists() and path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_plot_sweep_renders_png(tmp_path):
    rows = [
        agg_row(1, "full", 0.55),
        agg_row(4, "full", 0.8),
        agg_row(16, "full", 0.93),
        agg_row(1, "vanilla", 0.4),
        agg_row(4, "vanilla", 0.6),
        agg_row(16, "vanilla", 0.85),
    ]
    out = tmp_path / "sweep.png"
    plot_sweep(rows, out)
    assert _is_png(out)


def test_plot_sweep_needs_aggregates(tmp_path):
    detail_only = [
        MetricsRow(
            run_id="b1-full-soft-s0",
            per_class_budget=1,
            mode="full",
            label_mode="soft",
            seed=0,
            agreement_accuracy=0.5,
            pseudo_label_accuracy=None,
            calls_used=10,
            wall_ms=None,
        )
    ]
    with pytest.raises(ValueError):
        plot_sweep(detail_only, tmp_path / "nope.png")


def test_plot_pseudo_accuracy_renders_png(tmp_path):
    rows = [
        agg_row(2, "full", 0.6, pseudo=0.7),
        agg_row(8, "full", 0.8, pseudo=0.9),
    ]
    out = tmp_path / "pseudo.png"
    plot_pseudo_accuracy(rows, out)
    assert _is_png(out)
    with pytest.raises(ValueError):
        plot_pseudo_accuracy([agg_row(2, "full", 0.6)], tmp_path / "no.png")


def test_plot_ablation_renders_png(tmp_path):
    out = tmp_path / "ablation.png"
    plot_ablation(
        {
            "vanilla": [0.4, 0.45, 0.42],
            "active_only": [0.6, 0.62, 0.58],
            "full": [0.66, 0.7, 0.68],
        },
        out,
    )
    assert _is_png(out)
    with pytest.raises(ValueError):
        plot_ablation({}, tmp_path / "no.png")


def test_plot_attack_rounds_renders_png(tmp_path):
    report = {
        "mode": "full",
        "label_mode": "soft",
        "total_budget": 30,
        "rounds": [
            {"round_index": 0, "calls_used": 10, "pseudo_label_accuracy": 0.7},
            {"round_index": 1, "calls_used": 20, "pseudo_label_accuracy": 0.85},
            {"round_index": 2, "calls_used": 30, "pseudo_label_accuracy": 0.9},
        ],
    }
    out = tmp_path / "rounds.png"
    plot_attack_rounds(report, out)
    assert _is_png(out)


def test_plot_attack_rounds_without_diagnostics(tmp_path):
    report = {
        "mode": "vanilla",
        "label_mode": "hard",
        "total_budget": 8,
        "rounds": [{"round_index": 0, "calls_used": 8, "pseudo_label_accuracy": None}],
    }
    out = tmp_path / "rounds.png"
    plot_attack_rounds(report, out)
    assert _is_png(out)
    with pytest.raises(ValueError):
        plot_attack_rounds({"rounds": []}, tmp_path / "no.png")
