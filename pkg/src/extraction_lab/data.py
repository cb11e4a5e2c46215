"""Synthetic class-conditional data: true sets, proxy pools, splits, CSV I/O.

Three generator families stand in for a real data source. Each class draws
from one of two per-class variants (a small deterministic offset or region
split), so every class is mildly multi-modal. The proxy pool re-uses the
same generators with inflated noise, controlled by `distribution_shift`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

GENERATORS = ("gaussian_blobs", "concentric_rings", "xor_grid")


class DatasetFormatError(Exception):
    """Raised for unreadable dataset files; `reason` is a stable code."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass(frozen=True)
class DatasetSpec:
    generator: str = "gaussian_blobs"
    num_classes: int = 10
    input_dim: int = 8
    per_class_count: int = 200
    class_separation: float = 3.0
    noise_scale: float = 1.0
    distribution_shift: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator: {self.generator}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.input_dim < 2:
            raise ValueError("input_dim must be >= 2")
        if self.per_class_count < 1:
            raise ValueError("per_class_count must be >= 1")
        if self.class_separation <= 0 or self.noise_scale <= 0:
            raise ValueError("class_separation and noise_scale must be positive")
        if self.distribution_shift < 0:
            raise ValueError("distribution_shift must be >= 0")

    @property
    def total_count(self) -> int:
        return self.per_class_count * self.num_classes


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise ValueError("features and labels must have matching row counts")
        if not np.isfinite(self.features).all():
            raise ValueError("features must be finite")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class ProxyPool:
    """Unlabeled-by-teacher samples with provenance class and pseudo-labels.

    `active[i]` flips to False once sample i is promoted to the teacher-labeled
    set; promoted rows are never re-selected or re-labeled.
    """

    features: np.ndarray
    provenance_class: np.ndarray
    pseudo_label: np.ndarray  # (m, num_classes), each row a distribution
    active: np.ndarray = field(default=None)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.provenance_class = np.asarray(self.provenance_class, dtype=int)
        self.pseudo_label = np.asarray(self.pseudo_label, dtype=float)
        if self.active is None:
            self.active = np.ones(len(self.features), dtype=bool)
        else:
            self.active = np.asarray(self.active, dtype=bool)

    def __len__(self) -> int:
        return len(self.features)

    @property
    def num_classes(self) -> int:
        return self.pseudo_label.shape[1]

    def active_indices(self) -> np.ndarray:
        return np.flatnonzero(self.active)

    def copy(self) -> "ProxyPool":
        return ProxyPool(
            features=self.features.copy(),
            provenance_class=self.provenance_class.copy(),
            pseudo_label=self.pseudo_label.copy(),
            active=self.active.copy(),
        )

    def promote(self, indices) -> None:
        if not self.active[indices].all():
            raise ValueError("cannot promote an already-promoted sample")
        self.active[indices] = False


def _class_center(spec: DatasetSpec, c: int) -> np.ndarray:
    """Deterministic axis placement: guaranteed pairwise separation."""
    center = np.zeros(spec.input_dim)
    ring = c // spec.input_dim
    axis = c % spec.input_dim
    sign = 1.0 if ring % 2 == 0 else -1.0
    center[axis] = sign * spec.class_separation * (ring // 2 + 1)
    return center


def _variant_offset(spec: DatasetSpec, c: int, variant: int) -> np.ndarray:
    # per-class direction derived from spec.seed alone, so generation stays a
    # pure function of the DatasetSpec regardless of draw order
    local = np.random.default_rng([spec.seed, 7919, c])
    direction = local.standard_normal(spec.input_dim)
    direction /= max(np.linalg.norm(direction), 1e-12)
    sign = 1.0 if variant == 0 else -1.0
    return sign * 0.5 * spec.noise_scale * direction


def _xor_cells(spec: DatasetSpec) -> dict[int, list[tuple[int, int]]]:
    grid = math.ceil(math.sqrt(2 * spec.num_classes))
    cells: dict[int, list[tuple[int, int]]] = {c: [] for c in range(spec.num_classes)}
    for i in range(grid):
        cols = range(grid) if i % 2 == 0 else range(grid - 1, -1, -1)
        for step, j in enumerate(cols):
            k = i * grid + step
            cells[k % spec.num_classes].append((i, j))
    return cells


def sample_class(
    spec: DatasetSpec,
    c: int,
    variant: int,
    rng: np.random.Generator,
    noise_multiplier: float = 1.0,
) -> np.ndarray:
    """One sample of class `c` from variant 0 or 1 of the generator."""
    sigma = spec.noise_scale * noise_multiplier
    if spec.generator == "gaussian_blobs":
        center = _class_center(spec, c) + _variant_offset(spec, c, variant)
        return center + sigma * rng.standard_normal(spec.input_dim)
    if spec.generator == "concentric_rings":
        radius = spec.class_separation * (c + 1)
        theta = rng.uniform(0.0, np.pi) + (np.pi if variant == 1 else 0.0)
        x = sigma * rng.standard_normal(spec.input_dim)
        r = radius + sigma * rng.standard_normal()
        x[0] += r * np.cos(theta)
        x[1] += r * np.sin(theta)
        return x
    # xor_grid: snake-ordered cells mod num_classes; variants split the cells
    cells = _xor_cells(spec)[c]
    half = max(1, len(cells) // 2)
    group = cells[:half] if variant == 0 else cells[half:] or cells[:half]
    i, j = group[rng.integers(len(group))]
    grid = math.ceil(math.sqrt(2 * spec.num_classes))
    x = sigma * rng.standard_normal(spec.input_dim)
    x[0] += (i - (grid - 1) / 2.0) * spec.class_separation
    x[1] += (j - (grid - 1) / 2.0) * spec.class_separation
    return x


def generate_true_dataset(
    spec: DatasetSpec, rng: np.random.Generator | None = None
) -> tuple[LabeledDataset, LabeledDataset]:
    """Per-class draws with an 80/20 stratified train/test split.

    Variants alternate within each class so half the samples come from each.
    A class too small to populate the test side keeps everything in train.
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    train_rows, train_labels, test_rows, test_labels = [], [], [], []
    for c in range(spec.num_classes):
        rows = [
            sample_class(spec, c, i % 2, rng)
            for i in range(spec.per_class_count)
        ]
        order = rng.permutation(spec.per_class_count)
        n_test = int(0.2 * spec.per_class_count)
        for pos, idx in enumerate(order):
            if pos < n_test:
                test_rows.append(rows[idx])
                test_labels.append(c)
            else:
                train_rows.append(rows[idx])
                train_labels.append(c)
    train = LabeledDataset(np.array(train_rows), np.array(train_labels))
    test = (
        LabeledDataset(np.array(test_rows), np.array(test_labels))
        if test_rows
        else LabeledDataset(np.zeros((0, spec.input_dim)), np.zeros(0, dtype=int))
    )
    return train, test


def generate_proxy_pool(spec: DatasetSpec, rng: np.random.Generator | None = None) -> ProxyPool:
    """Pool of `total_count` samples with uniformly drawn classes and variants.

    Noise is inflated by (1 + distribution_shift) relative to the true data;
    pseudo-labels start as one-hot vectors at the provenance class.
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    m = spec.total_count
    features = np.empty((m, spec.input_dim))
    provenance = np.empty(m, dtype=int)
    mult = 1.0 + spec.distribution_shift
    for i in range(m):
        c = int(rng.integers(spec.num_classes))
        variant = int(rng.integers(2))
        features[i] = sample_class(spec, c, variant, rng, noise_multiplier=mult)
        provenance[i] = c
    pseudo = np.zeros((m, spec.num_classes))
    pseudo[np.arange(m), provenance] = 1.0
    return ProxyPool(features=features, provenance_class=provenance, pseudo_label=pseudo)


def split_validation(
    labels: np.ndarray,
    fraction: float,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Stratified (train_indices, val_indices) partition over the label rows.

    The validation side gets floor(fraction * m) rows overall, spread across
    classes proportionally (within one sample). Without an rng the selection
    is deterministic: the last rows of each class go to validation.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0, 1)")
    labels = np.asarray(labels, dtype=int)
    m = len(labels)
    if m == 0:
        raise ValueError("cannot split an empty set")
    target = int(fraction * m)
    classes = np.unique(labels)
    per_class = {c: np.flatnonzero(labels == c) for c in classes}
    if rng is not None:
        per_class = {c: rng.permutation(idx) for c, idx in per_class.items()}

    quota = {c: int(fraction * len(idx)) for c, idx in per_class.items()}
    remainder = target - sum(quota.values())
    if remainder > 0:
        frac_order = sorted(
            classes,
            key=lambda c: (-(fraction * len(per_class[c]) - quota[c]), c),
        )
        for c in frac_order:
            if remainder == 0:
                break
            if quota[c] < len(per_class[c]):
                quota[c] += 1
                remainder -= 1

    val_parts, train_parts = [], []
    for c in classes:
        idx = per_class[c]
        q = quota[c]
        val_parts.append(idx[len(idx) - q:])
        train_parts.append(idx[: len(idx) - q])
    val_idx = np.sort(np.concatenate(val_parts)) if val_parts else np.zeros(0, dtype=int)
    train_idx = np.sort(np.concatenate(train_parts))
    return train_idx, val_idx


def _feature_header(dim: int) -> list[str]:
    return [f"f{i}" for i in range(dim)]


def save_dataset(dataset: LabeledDataset, path) -> None:
    dim = dataset.features.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(_feature_header(dim) + ["label"]) + "\n")
        for row, label in zip(dataset.features, dataset.labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{label}\n")


def load_dataset(path, num_classes: int | None = None) -> LabeledDataset:
    """Read a dataset CSV; malformed input raises DatasetFormatError with a
    distinct reason ("malformed_header", "ragged_row", "label_out_of_range")."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines:
        raise DatasetFormatError("malformed_header", "empty file")
    header = lines[0].split(",")
    if header[-1] != "label" or header[:-1] != _feature_header(len(header) - 1):
        raise DatasetFormatError("malformed_header", f"unexpected header {header!r}")
    dim = len(header) - 1
    rows, labels = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != dim + 1:
            raise DatasetFormatError("ragged_row", f"line {lineno} has {len(parts)} fields")
        try:
            rows.append([float(v) for v in parts[:-1]])
            label = int(parts[-1])
        except ValueError as exc:
            raise DatasetFormatError("ragged_row", f"line {lineno}: {exc}") from exc
        if label < 0 or (num_classes is not None and label >= num_classes):
            raise DatasetFormatError("label_out_of_range", f"line {lineno} label {label}")
        labels.append(label)
    return LabeledDataset(np.array(rows).reshape(len(rows), dim), np.array(labels, dtype=int))


def pool_sidecar_path(path) -> str:
    path = str(path)
    return (path[: -len(".csv")] if path.endswith(".csv") else path) + ".labels.csv"


def save_pool(pool: ProxyPool, path) -> None:
    """Features CSV (label column = provenance class) plus a sidecar of
    pseudo-label rows and the active flag."""
    save_dataset(LabeledDataset(pool.features, pool.provenance_class), path)
    with open(pool_sidecar_path(path), "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join([f"p{i}" for i in range(pool.num_classes)] + ["active"]) + "\n")
        for probs, flag in zip(pool.pseudo_label, pool.active):
            fh.write(",".join(repr(float(v)) for v in probs) + f",{int(flag)}\n")


def load_pool(path, num_classes: int | None = None) -> ProxyPool:
    base = load_dataset(path, num_classes)
    sidecar = pool_sidecar_path(path)
    with open(sidecar, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines:
        raise DatasetFormatError("malformed_header", "empty sidecar")
    header = lines[0].split(",")
    n_classes = len(header) - 1
    if header != [f"p{i}" for i in range(n_classes)] + ["active"]:
        raise DatasetFormatError("malformed_header", f"unexpected sidecar header {header!r}")
    if len(lines) - 1 != len(base):
        raise DatasetFormatError("ragged_row", "sidecar row count does not match dataset")
    pseudo = np.empty((len(base), n_classes))
    active = np.empty(len(base), dtype=bool)
    for i, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != n_classes + 1:
            raise DatasetFormatError("ragged_row", f"sidecar line {i + 2}")
        pseudo[i] = [float(v) for v in parts[:-1]]
        active[i] = parts[-1] == "1"
    return ProxyPool(
        features=base.features,
        provenance_class=base.labels,
        pseudo_label=pseudo,
        active=active,
    )
