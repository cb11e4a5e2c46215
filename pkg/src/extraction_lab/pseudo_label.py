"""kNN pseudo-labeling in the student's latent space.

Exact brute-force neighbor search over the teacher-labeled set, then either
a clamped (1 - d) weighted average of soft labels or a plurality vote over
hard labels with distance-based tie breaking. Distances use elementwise
reductions so batched and per-pair evaluations agree bitwise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ProxyPool
from .network import Network, forward_batch

DISTANCE_METRICS = ("euclidean", "cosine")
NORM_EPS = 1e-12


@dataclass
class NeighborList:
    indices: np.ndarray  # into the labeled set, sorted by (distance, index)
    distances: np.ndarray


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - <u,v> / (|u| |v|), norms clamped at 1e-12; 1 if both are ~zero."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.sqrt((u * u).sum()))
    nv = float(np.sqrt((v * v).sum()))
    if nu < NORM_EPS and nv < NORM_EPS:
        return 1.0
    d = 1.0 - float((u * v).sum()) / (max(nu, NORM_EPS) * max(nv, NORM_EPS))
    return min(max(d, 0.0), 2.0)


def euclidean_distance(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    diff = u - v
    return float(np.sqrt((diff * diff).sum()))


def distances_to_set(query: np.ndarray, points: np.ndarray, metric: str) -> np.ndarray:
    """Distance from one query to every row of `points`.

    Bitwise-equal to calling the scalar distance per pair.
    """
    query = np.asarray(query, dtype=float)
    points = np.asarray(points, dtype=float)
    if metric == "euclidean":
        diff = points - query
        return np.sqrt((diff * diff).sum(axis=1))
    if metric == "cosine":
        nq = float(np.sqrt((query * query).sum()))
        norms = np.sqrt((points * points).sum(axis=1))
        dots = (points * query).sum(axis=1)
        out = 1.0 - dots / (np.maximum(norms, NORM_EPS) * max(nq, NORM_EPS))
        out[(norms < NORM_EPS) & (nq < NORM_EPS)] = 1.0
        return np.clip(out, 0.0, 2.0)
    raise ValueError(f"unknown metric: {metric}")


def knn(
    query_latent: np.ndarray,
    labeled_latents: np.ndarray,
    k: int,
    metric: str = "euclidean",
) -> NeighborList:
    """Exact scan: min(k, n) nearest, ties broken by ascending index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    labeled_latents = np.asarray(labeled_latents, dtype=float)
    if len(labeled_latents) == 0:
        raise ValueError("labeled set is empty")
    dists = distances_to_set(query_latent, labeled_latents, metric)
    order = np.argsort(dists, kind="stable")[: min(k, len(dists))]
    return NeighborList(indices=order, distances=dists[order])


def soft_pseudo_label(neighbors: NeighborList, labels: np.ndarray, weighting: str = "one_minus_d") -> np.ndarray:
    """Weighted average of the neighbors' soft labels.

    Default weights are max(1 - d, 0); the "inverse" variant uses
    1 / (d + 1e-12). All-zero weights fall back to uniform. Sums are
    accumulated sequentially in neighbor order (and the normalizer in class
    order), so any loop-based reimplementation reproduces the result bitwise
    regardless of the neighbor count.
    """
    labels = np.asarray(labels, dtype=float)
    if weighting == "one_minus_d":
        w = np.maximum(1.0 - neighbors.distances, 0.0)
    elif weighting == "inverse":
        w = 1.0 / (neighbors.distances + NORM_EPS)
    else:
        raise ValueError(f"unknown weighting: {weighting}")
    if not np.any(w > 0):
        w = np.full(len(neighbors.indices), 1.0 / len(neighbors.indices))
    mixed = np.zeros(labels.shape[1])
    total = 0.0
    for weight, row in zip(w, labels):
        mixed += weight * row
        total += float(weight)
    mixed /= total
    norm = 0.0
    for value in mixed:
        norm += float(value)
    return mixed / norm


def hard_pseudo_label(neighbors: NeighborList, labels: np.ndarray) -> int:
    """Plurality vote; ties by smallest summed distance, then lowest class."""
    labels = np.asarray(labels, dtype=int)
    votes: dict[int, int] = {}
    dist_sum: dict[int, float] = {}
    for label, dist in zip(labels, neighbors.distances):
        c = int(label)
        votes[c] = votes.get(c, 0) + 1
        dist_sum[c] = dist_sum.get(c, 0.0) + float(dist)
    return min(votes, key=lambda c: (-votes[c], dist_sum[c], c))


def pseudo_label_pool(
    pool: ProxyPool,
    labeled_samples: np.ndarray,
    labeled_responses: np.ndarray,
    student: Network,
    k: int,
    metric: str,
    mode: str,
    weighting: str = "one_minus_d",
) -> None:
    """Overwrites every active pool sample's pseudo-label in place.

    `labeled_responses` holds one distribution per teacher-labeled sample
    (one-hot in hard mode). Soft mode mixes neighbor distributions; hard
    mode votes over their argmaxes and writes a one-hot result. Promoted
    samples keep whatever label they last had.
    """
    labeled_samples = np.asarray(labeled_samples, dtype=float)
    labeled_responses = np.asarray(labeled_responses, dtype=float)
    if len(labeled_samples) == 0:
        raise ValueError("labeled set is empty")
    _, labeled_latents = forward_batch(student, labeled_samples)
    active = pool.active_indices()
    if len(active) == 0:
        return
    _, pool_latents = forward_batch(student, pool.features[active])
    hard_labels = np.argmax(labeled_responses, axis=1)
    for row, latent in zip(active, pool_latents):
        neighbors = knn(latent, labeled_latents, k, metric)
        if mode == "soft":
            pool.pseudo_label[row] = soft_pseudo_label(
                neighbors, labeled_responses[neighbors.indices], weighting=weighting
            )
        elif mode == "hard":
            winner = hard_pseudo_label(neighbors, hard_labels[neighbors.indices])
            pool.pseudo_label[row] = 0.0
            pool.pseudo_label[row, winner] = 1.0
        else:
            raise ValueError(f"unknown label mode: {mode}")
