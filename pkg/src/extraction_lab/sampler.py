"""Chooses which pool samples to spend oracle budget on.

Latents are clustered by pseudo-label class, each latent gets an RBF score
against its nearest class centroid, and a stratified without-replacement
batch is drawn so every cluster contributes its share.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ProxyPool
from .network import Network, forward_batch


@dataclass
class CentroidSet:
    """Per-class mean latent and sample count; count 0 means undefined."""

    centroids: np.ndarray  # (num_classes, latent_dim)
    counts: np.ndarray  # (num_classes,)

    def defined(self) -> np.ndarray:
        return np.flatnonzero(self.counts > 0)


@dataclass
class SamplingPlan:
    probabilities: np.ndarray  # per entry of `indices`, in (0, 1]
    class_of: np.ndarray
    indices: np.ndarray  # pool indices the plan covers


def compute_centroids(latents: np.ndarray, class_assignments: np.ndarray, num_classes: int) -> CentroidSet:
    """Mean latent per class, accumulated row by row in pool order so the
    stored value is exactly sum/count (reproducible by any sequential
    accumulate-and-divide reimplementation)."""
    latents = np.asarray(latents, dtype=float)
    class_assignments = np.asarray(class_assignments, dtype=int)
    if len(latents) != len(class_assignments):
        raise ValueError("latents and class_assignments must have the same length")
    dim = latents.shape[1] if latents.ndim == 2 else 0
    sums = np.zeros((num_classes, dim))
    counts = np.zeros(num_classes, dtype=int)
    for latent, c in zip(latents, class_assignments):
        sums[c] += latent
        counts[c] += 1
    centroids = np.zeros((num_classes, dim))
    for c in range(num_classes):
        if counts[c] > 0:
            centroids[c] = sums[c] / counts[c]
    return CentroidSet(centroids=centroids, counts=counts)


def _nearest_defined_sq_dist(latent: np.ndarray, centroids: CentroidSet) -> float:
    defined = centroids.defined()
    if len(defined) == 0:
        raise ValueError("no defined centroids")
    diffs = centroids.centroids[defined] - latent
    sq = (diffs * diffs).sum(axis=1)
    return float(sq.min())


def sampling_probability(
    latent: np.ndarray,
    centroids: CentroidSet,
    sigma: float,
    squared: bool = True,
) -> float:
    """RBF proximity score exp(-dist / (2 sigma^2)) to the nearest centroid.

    `dist` is the squared Euclidean distance by default; set squared=False
    for the plain-Euclidean variant.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    sq = _nearest_defined_sq_dist(np.asarray(latent, dtype=float), centroids)
    dist = sq if squared else float(np.sqrt(sq))
    return float(np.exp(-dist / (2.0 * sigma * sigma)))


def _random_class_sq_dist(
    latent: np.ndarray, centroids: CentroidSet, rng: np.random.Generator
) -> float:
    defined = centroids.defined()
    if len(defined) == 0:
        raise ValueError("no defined centroids")
    c = defined[rng.integers(len(defined))]
    diff = centroids.centroids[c] - latent
    return float((diff * diff).sum())


def build_sampling_plan(
    pool: ProxyPool,
    student: Network,
    sigma: float,
    rng: np.random.Generator | None = None,
    squared: bool = True,
    centroid_mode: str = "nearest",
) -> SamplingPlan:
    """Scores every active pool sample under the current student latents.

    centroid_mode "nearest" measures distance to the closest defined
    centroid; "random" draws the reference class uniformly per sample,
    consuming `rng` once per sample.
    """
    active = pool.active_indices()
    if len(active) == 0:
        raise ValueError("pool has no active samples")
    _, latents = forward_batch(student, pool.features[active])
    classes = np.argmax(pool.pseudo_label[active], axis=1)
    centroids = compute_centroids(latents, classes, pool.num_classes)
    probs = np.empty(len(active))
    for i, latent in enumerate(latents):
        if centroid_mode == "random":
            if rng is None:
                raise ValueError("centroid_mode='random' needs an rng")
            sq = _random_class_sq_dist(latent, centroids, rng)
            dist = sq if squared else float(np.sqrt(sq))
            probs[i] = float(np.exp(-dist / (2.0 * sigma * sigma)))
        else:
            probs[i] = sampling_probability(latent, centroids, sigma, squared=squared)
    return SamplingPlan(probabilities=probs, class_of=classes, indices=active)


def _cluster_quotas(cluster_sizes: dict[int, int], count: int) -> dict[int, int]:
    # base share round-robin; larger clusters absorb remainders, and any
    # quota beyond a cluster's size spills to the next-largest with room
    order = sorted(cluster_sizes, key=lambda c: (-cluster_sizes[c], c))
    k = len(order)
    quotas = {c: count // k for c in order}
    for c in order[: count % k]:
        quotas[c] += 1
    overflow = 0
    for c in order:
        if quotas[c] > cluster_sizes[c]:
            overflow += quotas[c] - cluster_sizes[c]
            quotas[c] = cluster_sizes[c]
    while overflow > 0:
        progressed = False
        for c in order:
            if overflow == 0:
                break
            if quotas[c] < cluster_sizes[c]:
                quotas[c] += 1
                overflow -= 1
                progressed = True
        if not progressed:
            raise ValueError("requested count exceeds available samples")
    return quotas


def _weighted_draw_without_replacement(
    indices: np.ndarray, weights: np.ndarray, count: int, rng: np.random.Generator
) -> list[int]:
    remaining = list(range(len(indices)))
    picked = []
    for _ in range(count):
        w = weights[remaining]
        p = w / w.sum()
        pos = rng.choice(len(remaining), p=p)
        picked.append(int(indices[remaining[pos]]))
        remaining.pop(pos)
    return picked


def select_batch(
    pool: ProxyPool,
    student: Network,
    sigma: float,
    count: int,
    rng: np.random.Generator,
    squared: bool = True,
    centroid_mode: str = "nearest",
) -> list[int]:
    """Draws `count` distinct active pool indices, stratified by cluster.

    Clusters come from the argmax of the current pseudo-labels; quotas are
    count/|clusters| with remainders to the largest clusters first. Within a
    cluster, samples are drawn without replacement with probability
    proportional to their RBF proximity score; a cluster whose quota equals
    its size is taken whole without consuming randomness. Clusters are
    processed in descending size order (ties by class index).
    """
    active_count = int(pool.active.sum())
    if count > active_count:
        raise ValueError(f"requested {count} samples but only {active_count} are active")
    if count == 0:
        return []
    plan = build_sampling_plan(
        pool, student, sigma, rng=rng, squared=squared, centroid_mode=centroid_mode
    )
    cluster_members: dict[int, np.ndarray] = {}
    for c in np.unique(plan.class_of):
        cluster_members[int(c)] = np.flatnonzero(plan.class_of == c)
    sizes = {c: len(m) for c, m in cluster_members.items()}
    quotas = _cluster_quotas(sizes, count)
    order = sorted(sizes, key=lambda c: (-sizes[c], c))
    selected: list[int] = []
    for c in order:
        members = cluster_members[c]
        q = quotas[c]
        if q == 0:
            continue
        if q == len(members):
            selected.extend(int(plan.indices[m]) for m in members)
            continue
        selected.extend(
            _weighted_draw_without_replacement(
                plan.indices[members], plan.probabilities[members], q, rng
            )
        )
    return selected
