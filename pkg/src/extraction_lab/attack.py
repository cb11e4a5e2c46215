"""The full extraction loop and its ablation arms.

Each round: pick samples from the pool (actively or uniformly), spend oracle
budget to label them, train the student on everything the teacher has
labeled, then pseudo-label the rest of the pool and train on the union.
Rounds repeat until exactly `n` oracle calls have been made. Student weights
persist across rounds and phases; the optimizer restarts fresh each phase.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import ProxyPool, split_validation
from .network import (
    Network,
    NetworkSpec,
    TrainConfig,
    train_until_convergence,
    xavier_init,
)
from .pseudo_label import pseudo_label_pool
from .sampler import select_batch

ATTACK_MODES = ("vanilla", "active_only", "self_paced_only", "full")


@dataclass
class AttackConfig:
    per_class_budget: int
    calls_per_round: int | None = None  # default: ceil(n / min(3, per_class_budget))
    neighbors: int = 5
    sigma: float = 17.0
    metric: str | None = None  # default pairing: soft->cosine, hard->euclidean
    label_mode: str = "soft"
    mode: str = "full"
    train: TrainConfig = field(default_factory=TrainConfig)
    validation_fraction: float = 0.15
    seed: int = 0
    rbf_squared: bool = True
    soft_weighting: str = "one_minus_d"
    centroid_mode: str = "nearest"

    def __post_init__(self):
        if self.per_class_budget < 1:
            raise ValueError("per_class_budget must be >= 1")
        if self.calls_per_round is not None and self.calls_per_round < 1:
            raise ValueError("calls_per_round must be >= 1")
        if self.neighbors < 1:
            raise ValueError("neighbors must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.mode not in ATTACK_MODES:
            raise ValueError(f"mode must be one of {ATTACK_MODES}")
        if self.label_mode not in ("soft", "hard"):
            raise ValueError("label_mode must be 'soft' or 'hard'")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must be in (0, 1)")

    def resolved_metric(self) -> str:
        if self.metric is not None:
            return self.metric
        return "cosine" if self.label_mode == "soft" else "euclidean"

    def total_budget(self, num_classes: int) -> int:
        return self.per_class_budget * num_classes

    def effective_calls_per_round(self, num_classes: int) -> int:
        """Single round in vanilla mode; otherwise up to three rounds, capped
        so one- and two-call-per-class runs use one and two rounds."""
        n = self.total_budget(num_classes)
        if self.mode == "vanilla":
            return n
        if self.calls_per_round is not None:
            return min(self.calls_per_round, n)
        rounds = min(3, self.per_class_budget)
        return math.ceil(n / rounds)


@dataclass
class LabeledProxySet:
    """Samples the teacher has labeled, with its responses as distributions."""

    samples: np.ndarray
    responses: np.ndarray

    @classmethod
    def empty(cls, input_dim: int, num_classes: int) -> "LabeledProxySet":
        return cls(np.zeros((0, input_dim)), np.zeros((0, num_classes)))

    def __len__(self) -> int:
        return len(self.samples)

    def extend(self, samples: np.ndarray, responses: np.ndarray) -> None:
        self.samples = np.concatenate([self.samples, samples], axis=0)
        self.responses = np.concatenate([self.responses, responses], axis=0)

    def top_classes(self) -> np.ndarray:
        return np.argmax(self.responses, axis=1)


@dataclass
class RoundRecord:
    round_index: int
    selected: int
    calls_used: int
    supervised_epochs: int
    joint_epochs: int
    pool_hash: str
    pseudo_label_accuracy: float | None = None
    wall_ms: dict = field(default_factory=dict)


@dataclass
class RunReport:
    mode: str
    label_mode: str
    seed: int
    total_budget: int
    calls_per_round: int
    num_classes: int
    rounds: list[RoundRecord] = field(default_factory=list)
    calls_used: int = 0
    agreement_accuracy: float | None = None
    wall_ms_total: float = 0.0
    student_checkpoint: str | None = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "label_mode": self.label_mode,
            "seed": self.seed,
            "total_budget": self.total_budget,
            "calls_per_round": self.calls_per_round,
            "num_classes": self.num_classes,
            "calls_used": self.calls_used,
            "agreement_accuracy": self.agreement_accuracy,
            "wall_ms_total": self.wall_ms_total,
            "student_checkpoint": self.student_checkpoint,
            "rounds": [
                {
                    "round_index": r.round_index,
                    "selected": r.selected,
                    "calls_used": r.calls_used,
                    "supervised_epochs": r.supervised_epochs,
                    "joint_epochs": r.joint_epochs,
                    "pool_hash": r.pool_hash,
                    "pseudo_label_accuracy": r.pseudo_label_accuracy,
                    "wall_ms": r.wall_ms,
                }
                for r in self.rounds
            ],
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def pool_snapshot_hash(pool: ProxyPool) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(pool.pseudo_label).tobytes())
    digest.update(np.ascontiguousarray(pool.active).tobytes())
    return digest.hexdigest()[:16]


def validation_holdout(
    responses: np.ndarray, fraction: float
) -> tuple[np.ndarray, np.ndarray] | None:
    """Deterministic stratified holdout over teacher argmax classes.

    Returns (train_idx, val_idx), or None when the labeled set is too small
    for a meaningful split (a class with fewer than two samples, or a
    validation side that would be empty); callers then train for the full
    epoch budget with no early stopping.
    """
    top = np.argmax(responses, axis=1)
    m = len(top)
    if int(fraction * m) < 1:
        return None
    _, counts = np.unique(top, return_counts=True)
    if counts.min() < 2:
        return None
    return split_validation(top, fraction)


def _uniform_selection(pool: ProxyPool, count: int, rng: np.random.Generator) -> list[int]:
    active = pool.active_indices()
    if count > len(active):
        raise ValueError(f"requested {count} samples but only {len(active)} are active")
    return [int(i) for i in rng.choice(active, size=count, replace=False)]


def _train_phase(
    student: Network,
    samples: np.ndarray,
    targets: np.ndarray,
    labeled: LabeledProxySet,
    cfg: AttackConfig,
    rng: np.random.Generator,
) -> int:
    """One convergence-trained phase; validation is carved from the
    teacher-labeled rows only. Returns the number of epochs run."""
    holdout = validation_holdout(labeled.responses, cfg.validation_fraction)
    if holdout is None:
        history = train_until_convergence(student, samples, targets, cfg.train, rng)
    else:
        train_idx, val_idx = holdout
        # labeled rows always come first in `samples`; mask out held-out ones
        keep = np.ones(len(samples), dtype=bool)
        keep[val_idx] = False
        history = train_until_convergence(
            student,
            samples[keep],
            targets[keep],
            cfg.train,
            rng,
            val_x=labeled.samples[val_idx],
            val_targets=labeled.responses[val_idx],
        )
    return len(history)


def run_attack(
    oracle,
    pool: ProxyPool,
    student_spec: NetworkSpec,
    cfg: AttackConfig,
    rng: np.random.Generator | None = None,
    diagnostic_teacher: Network | None = None,
) -> tuple[Network, RunReport]:
    """Runs the configured extraction mode to budget exhaustion.

    The oracle only needs `query`, `budget_status`, `num_classes`, and
    `input_dim`. Exactly n = per_class_budget * num_classes successful
    queries are made. With a `diagnostic_teacher` (local runs only), each
    pseudo-labeling phase also records pseudo-label accuracy against the
    teacher's unbudgeted predictions.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    num_classes = oracle.num_classes
    n = cfg.total_budget(num_classes)
    if len(pool) < n:
        raise ValueError(f"pool has {len(pool)} samples, budget needs {n}")
    used, limit = oracle.budget_status()
    if limit - used < n:
        raise ValueError(f"oracle has {limit - used} calls left, attack needs {n}")
    if pool.num_classes != num_classes:
        raise ValueError("pool and oracle disagree on the number of classes")

    s = cfg.effective_calls_per_round(num_classes)
    metric = cfg.resolved_metric()
    report = RunReport(
        mode=cfg.mode,
        label_mode=cfg.label_mode,
        seed=cfg.seed,
        total_budget=n,
        calls_per_round=s,
        num_classes=num_classes,
        calls_used=0,
    )
    run_start = time.perf_counter()

    student = xavier_init(student_spec, rng)
    labeled = LabeledProxySet.empty(oracle.input_dim, num_classes)
    use_active = cfg.mode in ("active_only", "full")
    use_self_paced = cfg.mode in ("self_paced_only", "full")
    round_index = 0

    while len(labeled) < n:
        timings: dict[str, float] = {}
        batch = min(s, n - len(labeled))

        t0 = time.perf_counter()
        if use_active:
            picked = select_batch(
                pool,
                student,
                cfg.sigma,
                batch,
                rng,
                squared=cfg.rbf_squared,
                centroid_mode=cfg.centroid_mode,
            )
        else:
            picked = _uniform_selection(pool, batch, rng)
        timings["select_ms"] = (time.perf_counter() - t0) * 1000

        t0 = time.perf_counter()
        responses = np.array(
            [
                oracle.query(pool.features[i]).as_distribution(num_classes)
                for i in picked
            ]
        )
        pool.promote(picked)
        labeled.extend(pool.features[picked], responses)
        timings["query_ms"] = (time.perf_counter() - t0) * 1000

        t0 = time.perf_counter()
        supervised_epochs = _train_phase(
            student, labeled.samples, labeled.responses, labeled, cfg, rng
        )
        timings["train_ms"] = (time.perf_counter() - t0) * 1000

        joint_epochs = 0
        pseudo_acc = None
        # nothing left to pseudo-label once the budget covers the whole pool
        if use_self_paced and pool.active.any():
            t0 = time.perf_counter()
            pseudo_label_pool(
                pool,
                labeled.samples,
                labeled.responses,
                student,
                cfg.neighbors,
                metric,
                cfg.label_mode,
                weighting=cfg.soft_weighting,
            )
            timings["pseudo_ms"] = (time.perf_counter() - t0) * 1000
            if diagnostic_teacher is not None:
                from .metrics import pseudo_label_accuracy

                pseudo_acc = pseudo_label_accuracy(pool, diagnostic_teacher)

            t0 = time.perf_counter()
            active = pool.active_indices()
            joint_x = np.concatenate([labeled.samples, pool.features[active]], axis=0)
            joint_t = np.concatenate([labeled.responses, pool.pseudo_label[active]], axis=0)
            joint_epochs = _train_phase(student, joint_x, joint_t, labeled, cfg, rng)
            timings["joint_ms"] = (time.perf_counter() - t0) * 1000

        used, _ = oracle.budget_status()
        report.rounds.append(
            RoundRecord(
                round_index=round_index,
                selected=len(picked),
                calls_used=len(labeled),
                supervised_epochs=supervised_epochs,
                joint_epochs=joint_epochs,
                pool_hash=pool_snapshot_hash(pool),
                pseudo_label_accuracy=pseudo_acc,
                wall_ms=timings,
            )
        )
        round_index += 1

    report.calls_used = len(labeled)
    report.wall_ms_total = (time.perf_counter() - run_start) * 1000
    return student, report


@dataclass
class AblationResult:
    accuracies: dict[str, list[float]]  # mode -> accuracy per seed
    seeds: list[int]

    def mean(self, mode: str) -> float:
        return float(np.mean(self.accuracies[mode]))

    def std(self, mode: str) -> float:
        return float(np.std(self.accuracies[mode]))

    def summary(self) -> dict[str, tuple[float, float]]:
        return {mode: (self.mean(mode), self.std(mode)) for mode in self.accuracies}


def run_ablation_suite(
    oracle_factory,
    pool_factory,
    student_spec: NetworkSpec,
    cfg: AttackConfig,
    seeds: list[int],
    eval_features: np.ndarray,
    eval_teacher_labels: np.ndarray,
    modes: tuple[str, ...] = ATTACK_MODES,
) -> AblationResult:
    """Runs every mode on every seed with matched budgets and data.

    `oracle_factory(seed)` and `pool_factory(seed)` must hand back a fresh
    budgeted oracle and pool per run, so each arm spends the same n calls on
    the same pool contents.
    """
    from .metrics import agreement_accuracy

    if len(seeds) < 2:
        raise ValueError("ablation needs at least 2 seeds")
    results: dict[str, list[float]] = {mode: [] for mode in modes}
    for seed in seeds:
        for mode in modes:
            run_cfg = replace(cfg, mode=mode, seed=seed)
            oracle = oracle_factory(seed)
            pool = pool_factory(seed)
            student, _ = run_attack(
                oracle, pool, student_spec, run_cfg, np.random.default_rng(seed)
            )
            results[mode].append(
                agreement_accuracy(student, eval_features, eval_teacher_labels)
            )
    return AblationResult(accuracies=results, seeds=list(seeds))
