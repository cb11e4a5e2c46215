"""Canonical benchmark setups: dataset, pool, and network shapes in one place.

These are the configurations the test suite and CLI defaults lean on, so the
numbers here are load-bearing; change them and every directional comparison
needs re-calibrating.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .data import DatasetSpec
from .network import NetworkSpec, TrainConfig


def default_teacher_train() -> TrainConfig:
    return TrainConfig(
        learning_rate=5e-4,
        batch_size=64,
        max_epochs=100,
        patience=10,
        lr_step_size=5,
        lr_gamma=0.95,
        seed=0,
    )


def default_student_train() -> TrainConfig:
    return TrainConfig(
        learning_rate=9e-4,
        batch_size=64,
        max_epochs=100,
        patience=10,
        lr_step_size=20,
        lr_gamma=0.95,
        seed=0,
    )


@dataclass(frozen=True)
class Benchmark:
    name: str
    data: DatasetSpec
    pool: DatasetSpec
    teacher_hidden: tuple[int, ...] = (64, 32)
    student_hidden: tuple[int, ...] = (32, 16)
    teacher_train: TrainConfig = field(default_factory=default_teacher_train)

    def teacher_spec(self) -> NetworkSpec:
        return NetworkSpec(
            input_dim=self.data.input_dim,
            hidden_sizes=self.teacher_hidden,
            num_classes=self.data.num_classes,
        )

    def student_spec(self) -> NetworkSpec:
        return NetworkSpec(
            input_dim=self.data.input_dim,
            hidden_sizes=self.student_hidden,
            num_classes=self.data.num_classes,
        )

    def pool_for_seed(self, seed: int) -> DatasetSpec:
        return replace(self.pool, seed=seed)


_BLOBS_DATA = DatasetSpec(
    generator="gaussian_blobs",
    num_classes=10,
    input_dim=8,
    per_class_count=200,
    class_separation=3.0,
    noise_scale=1.0,
    distribution_shift=0.0,
    seed=101,
)

_SEPARABLE_DATA = replace(_BLOBS_DATA, class_separation=10.0, seed=103)

BENCHMARKS: dict[str, Benchmark] = {
    # moderately overlapping blobs with a shifted proxy pool: the workhorse
    # for budget sweeps and mode comparisons
    "blobs": Benchmark(
        name="blobs",
        data=_BLOBS_DATA,
        pool=replace(_BLOBS_DATA, distribution_shift=0.3, seed=202),
    ),
    # widely separated blobs: teacher is near-perfect, pseudo-labels should be
    # clean even at small budgets
    "separable_blobs": Benchmark(
        name="separable_blobs",
        data=_SEPARABLE_DATA,
        pool=replace(_SEPARABLE_DATA, distribution_shift=0.1, seed=204),
    ),
    "rings": Benchmark(
        name="rings",
        data=DatasetSpec(
            generator="concentric_rings",
            num_classes=4,
            input_dim=4,
            per_class_count=250,
            class_separation=2.5,
            noise_scale=0.35,
            seed=105,
        ),
        pool=DatasetSpec(
            generator="concentric_rings",
            num_classes=4,
            input_dim=4,
            per_class_count=250,
            class_separation=2.5,
            noise_scale=0.35,
            distribution_shift=0.25,
            seed=206,
        ),
    ),
    "xor": Benchmark(
        name="xor",
        data=DatasetSpec(
            generator="xor_grid",
            num_classes=4,
            input_dim=4,
            per_class_count=250,
            class_separation=3.0,
            noise_scale=0.6,
            seed=107,
        ),
        pool=DatasetSpec(
            generator="xor_grid",
            num_classes=4,
            input_dim=4,
            per_class_count=250,
            class_separation=3.0,
            noise_scale=0.6,
            distribution_shift=0.25,
            seed=208,
        ),
    ),
}


def get_benchmark(name: str) -> Benchmark:
    try:
        return BENCHMARKS[name]
    except KeyError:
        known = ", ".join(sorted(BENCHMARKS))
        raise KeyError(f"unknown benchmark {name!r} (known: {known})") from None
