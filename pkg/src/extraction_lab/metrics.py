"""Measurement and experiment harness: teacher training, agreement scoring,
budget sweeps, and the CSV that carries their results.

Evaluation always happens outside the oracle budget: teacher labels for the
test set are computed once with unbudgeted access, then every student is
scored against them. Only the attack loop itself pays per query.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .attack import AttackConfig, run_attack
from .bench import Benchmark
from .data import (
    LabeledDataset,
    ProxyPool,
    generate_proxy_pool,
    generate_true_dataset,
    split_validation,
)
from .network import (
    EpochStats,
    Network,
    NetworkSpec,
    TrainConfig,
    forward_batch,
    train_until_convergence,
    xavier_init,
)
from .oracle import LocalOracle, reference_top_classes

log = logging.getLogger(__name__)

METRICS_FIELDS = (
    "run_id",
    "per_class_budget",
    "mode",
    "label_mode",
    "seed",
    "agreement_accuracy",
    "pseudo_label_accuracy",
    "calls_used",
    "wall_ms",
    "status",
    "agreement_std",
)


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def true_label_accuracy(net: Network, features: np.ndarray, labels: np.ndarray) -> float:
    logits, _ = forward_batch(net, features)
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def agreement_accuracy(
    student: Network, eval_features: np.ndarray, teacher_top: np.ndarray
) -> float:
    """Fraction of samples where the student's argmax matches the teacher's."""
    if len(eval_features) != len(teacher_top):
        raise ValueError("evaluation features and teacher labels differ in length")
    if len(eval_features) == 0:
        raise ValueError("cannot evaluate agreement on an empty set")
    logits, _ = forward_batch(student, eval_features)
    return float(np.mean(np.argmax(logits, axis=1) == teacher_top))


def pseudo_label_accuracy(pool: ProxyPool, teacher: Network) -> float:
    """How often the pool's pseudo-label argmax matches the teacher's own
    prediction, over rows still carrying pseudo-labels. Diagnostic only:
    needs in-process teacher access, so it cannot run against a remote oracle."""
    active = pool.active_indices()
    if len(active) == 0:
        raise ValueError("pool has no pseudo-labeled rows left")
    teacher_top = reference_top_classes(teacher, pool.features[active])
    assigned = np.argmax(pool.pseudo_label[active], axis=1)
    return float(np.mean(assigned == teacher_top))


def train_teacher(
    train_set: LabeledDataset,
    test_set: LabeledDataset,
    spec: NetworkSpec,
    cfg: TrainConfig,
    validation_fraction: float = 0.15,
) -> tuple[Network, float, list[EpochStats]]:
    """Trains the victim on ground-truth labels; the returned accuracy is
    measured against ground truth on the held-out test set."""
    if train_set.features.shape[1] != spec.input_dim:
        raise ValueError("training data does not match the network's input size")
    rng = np.random.default_rng(cfg.seed)
    net = xavier_init(spec, rng)
    targets = one_hot(train_set.labels, spec.num_classes)
    _, counts = np.unique(train_set.labels, return_counts=True)
    if counts.min() >= 2 and int(validation_fraction * len(train_set)) >= 1:
        train_idx, val_idx = split_validation(train_set.labels, validation_fraction)
        history = train_until_convergence(
            net,
            train_set.features[train_idx],
            targets[train_idx],
            cfg,
            rng,
            val_x=train_set.features[val_idx],
            val_targets=targets[val_idx],
        )
    else:
        history = train_until_convergence(net, train_set.features, targets, cfg, rng)
    accuracy = (
        true_label_accuracy(net, test_set.features, test_set.labels)
        if len(test_set)
        else float("nan")
    )
    return net, accuracy, history


@dataclass
class MetricsRow:
    run_id: str
    per_class_budget: int | None
    mode: str
    label_mode: str
    seed: int | None
    agreement_accuracy: float | None
    pseudo_label_accuracy: float | None
    calls_used: int | None
    wall_ms: float | None
    status: str = "ok"
    agreement_std: float | None = None


_INT_FIELDS = {"per_class_budget", "seed", "calls_used"}
_FLOAT_FIELDS = {"agreement_accuracy", "pseudo_label_accuracy", "wall_ms", "agreement_std"}


def write_metrics_csv(rows: list[MetricsRow], path) -> None:
    """Floats are written with `repr`, so a read-back recovers them exactly."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_FIELDS)
        for row in rows:
            record = []
            for name in METRICS_FIELDS:
                value = getattr(row, name)
                if value is None:
                    record.append("")
                elif name in _FLOAT_FIELDS:
                    record.append(repr(float(value)))
                else:
                    record.append(str(value))
            writer.writerow(record)


def read_metrics_csv(path) -> list[MetricsRow]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(METRICS_FIELDS):
            raise ValueError(f"unexpected metrics header: {header!r}")
        rows = []
        for record in reader:
            kwargs = {}
            for name, raw in zip(METRICS_FIELDS, record):
                if raw == "":
                    kwargs[name] = None
                elif name in _INT_FIELDS:
                    kwargs[name] = int(raw)
                elif name in _FLOAT_FIELDS:
                    kwargs[name] = float(raw)
                else:
                    kwargs[name] = raw
            rows.append(MetricsRow(**kwargs))
    return rows


@dataclass
class SweepSpec:
    """A grid of (budget, mode, seed) attack runs over one benchmark."""

    per_class_budgets: list[int]
    seeds: list[int]
    attack: AttackConfig
    bench: Benchmark
    modes: tuple[str, ...] = ("full",)

    def __post_init__(self):
        if not self.per_class_budgets:
            raise ValueError("need at least one budget")
        if any(b < 1 for b in self.per_class_budgets):
            raise ValueError("budgets must be positive")
        if any(
            b2 <= b1
            for b1, b2 in zip(self.per_class_budgets, self.per_class_budgets[1:])
        ):
            raise ValueError("budgets must be strictly increasing")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if not self.modes:
            raise ValueError("need at least one mode")

    def run_grid(self) -> list[tuple[int, str, int]]:
        return [
            (budget, mode, seed)
            for budget in self.per_class_budgets
            for mode in self.modes
            for seed in self.seeds
        ]


@dataclass
class SweepResult:
    rows: list[MetricsRow]
    teacher_accuracy: float

    def detail_rows(self) -> list[MetricsRow]:
        return [r for r in self.rows if r.status in ("ok", "failed")]

    def aggregate_rows(self) -> list[MetricsRow]:
        return [r for r in self.rows if r.status == "aggregate"]


def _sweep_run(
    spec: SweepSpec,
    teacher: Network,
    pool_template: ProxyPool,
    eval_features: np.ndarray,
    teacher_top: np.ndarray,
    budget: int,
    mode: str,
    seed: int,
    include_timing: bool,
) -> MetricsRow:
    cfg = replace(spec.attack, per_class_budget=budget, mode=mode, seed=seed)
    run_id = f"b{budget}-{mode}-{cfg.label_mode}-s{seed}"
    try:
        pool = pool_template.copy()
        oracle = LocalOracle(
            teacher, label_mode=cfg.label_mode, budget_limit=cfg.total_budget(teacher.spec.num_classes)
        )
        student, report = run_attack(
            oracle,
            pool,
            spec.bench.student_spec(),
            cfg,
            np.random.default_rng(seed),
            diagnostic_teacher=teacher,
        )
        pseudo = next(
            (
                r.pseudo_label_accuracy
                for r in reversed(report.rounds)
                if r.pseudo_label_accuracy is not None
            ),
            None,
        )
        return MetricsRow(
            run_id=run_id,
            per_class_budget=budget,
            mode=mode,
            label_mode=cfg.label_mode,
            seed=seed,
            agreement_accuracy=agreement_accuracy(student, eval_features, teacher_top),
            pseudo_label_accuracy=pseudo,
            calls_used=report.calls_used,
            wall_ms=report.wall_ms_total if include_timing else None,
        )
    except Exception:
        log.exception("sweep run %s failed", run_id)
        return MetricsRow(
            run_id=run_id,
            per_class_budget=budget,
            mode=mode,
            label_mode=cfg.label_mode,
            seed=seed,
            agreement_accuracy=None,
            pseudo_label_accuracy=None,
            calls_used=None,
            wall_ms=None,
            status="failed",
        )


def aggregate_metrics(detail: list[MetricsRow]) -> list[MetricsRow]:
    """Mean/std rows per (budget, mode, label_mode), from ok detail rows only.
    Pure function of the detail rows, so it can be re-derived from the CSV."""
    groups: dict[tuple[int, str, str], list[MetricsRow]] = {}
    order: list[tuple[int, str, str]] = []
    for row in detail:
        key = (row.per_class_budget, row.mode, row.label_mode)
        if key not in groups:
            groups[key] = []
            order.append(key)
        if row.status == "ok":
            groups[key].append(row)
    out = []
    for key in order:
        budget, mode, label_mode = key
        ok = groups[key]
        accs = [r.agreement_accuracy for r in ok]
        pseudos = [r.pseudo_label_accuracy for r in ok if r.pseudo_label_accuracy is not None]
        out.append(
            MetricsRow(
                run_id=f"agg-b{budget}-{mode}-{label_mode}",
                per_class_budget=budget,
                mode=mode,
                label_mode=label_mode,
                seed=None,
                agreement_accuracy=float(np.mean(accs)) if accs else None,
                pseudo_label_accuracy=float(np.mean(pseudos)) if pseudos else None,
                calls_used=None,
                wall_ms=None,
                status="aggregate",
                agreement_std=float(np.std(accs)) if accs else None,
            )
        )
    return out


def run_sweep(
    spec: SweepSpec,
    out_path=None,
    jobs: int = 1,
    include_timing: bool = False,
    teacher: Network | None = None,
) -> SweepResult:
    """Runs the full grid; every job owns its oracle and pool copy, and rows
    land in grid order no matter which job finishes first. With the default
    `include_timing=False` the CSV is byte-identical across reruns."""
    train_set, test_set = generate_true_dataset(spec.bench.data)
    teacher_acc = float("nan")
    if teacher is None:
        teacher, teacher_acc, _ = train_teacher(
            train_set, test_set, spec.bench.teacher_spec(), spec.bench.teacher_train
        )
    teacher_top = reference_top_classes(teacher, test_set.features)
    pool_templates = {
        seed: generate_proxy_pool(spec.bench.pool_for_seed(seed))
        for seed in spec.seeds
    }

    grid = spec.run_grid()
    if jobs <= 1:
        detail = [
            _sweep_run(
                spec, teacher, pool_templates[seed], test_set.features, teacher_top,
                budget, mode, seed, include_timing,
            )
            for budget, mode, seed in grid
        ]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool_exec:
            futures = [
                pool_exec.submit(
                    _sweep_run,
                    spec, teacher, pool_templates[seed], test_set.features,
                    teacher_top, budget, mode, seed, include_timing,
                )
                for budget, mode, seed in grid
            ]
            detail = [f.result() for f in futures]

    rows = detail + aggregate_metrics(detail)
    if out_path is not None:
        write_metrics_csv(rows, out_path)
    return SweepResult(rows=rows, teacher_accuracy=teacher_acc)
