"""MiniBatch K-Means with spherical (cosine) assignment.

Used by query sampling (cluster-centroid queries), the cluster-spread
detector, and domain-label fallback. Fitting is deterministic for a fixed
seed and single-threaded: the mini-batch order is part of the contract.
Every iteration re-evaluates full-batch inertia and rejects updates that
would increase it, so the reported inertia trajectory is non-increasing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .seeds import derive_rng


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray  # n_clusters x D, unit rows when spherical
    n_clusters: int
    inertia: float
    seed: int
    spherical: bool = True


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return m / norms


def kmeans_plusplus_init(points: np.ndarray, n_clusters: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each next center drawn with probability
    proportional to squared distance from the nearest chosen center."""
    n = points.shape[0]
    centers = np.empty((n_clusters, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = points[first]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, n_clusters):
        total = d2.sum()
        if total <= 0.0:
            # All remaining points coincide with chosen centers.
            centers[c:] = points[int(rng.integers(n))]
            break
        probs = d2 / total
        nxt = int(rng.choice(n, p=probs))
        centers[c] = points[nxt]
        d2 = np.minimum(d2, np.sum((points - centers[c]) ** 2, axis=1))
    return centers


def _assign(points: np.ndarray, centroids: np.ndarray, spherical: bool) -> np.ndarray:
    """Nearest-centroid labels; ties go to the lowest centroid index."""
    if spherical:
        # Unit vectors: max cosine == min squared Euclidean; argmax takes
        # the first (lowest) index among ties.
        return np.argmax(points @ centroids.T, axis=1)
    d2 = (
        np.sum(points**2, axis=1, keepdims=True)
        - 2.0 * points @ centroids.T
        + np.sum(centroids**2, axis=1)[None, :]
    )
    return np.argmin(d2, axis=1)


def _inertia(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    diff = points - centroids[labels]
    return float(np.sum(diff * diff))


def fit_minibatch_kmeans(
    points,
    n_clusters: int,
    batch_size: int = 1024,
    max_iters: int = 100,
    seed: int = 0,
    spherical: bool = True,
    tol: float = 1e-4,
) -> ClusterModel:
    """Fit MiniBatch K-Means.

    Parameters
    ----------
    points : (N, D) array, N >= n_clusters >= 1.
    batch_size : samples per mini-batch (capped at N, drawn without
        replacement per iteration).
    tol : early stop when the max centroid shift of an accepted update
        falls below this.

    Returns
    -------
    ClusterModel with full-batch inertia of the final accepted centroids.
    Deterministic for a fixed seed.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("points must be a 2-D matrix")
    n = x.shape[0]
    if n_clusters < 1 or n_clusters > n:
        raise ParameterError(f"n_clusters={n_clusters} outside [1, {n}]")

    if spherical:
        x = _unit_rows(x)

    rng = derive_rng(seed, "minibatch_kmeans")
    centroids = kmeans_plusplus_init(x, n_clusters, rng)
    if spherical:
        centroids = _unit_rows(centroids)

    labels = _assign(x, centroids, spherical)
    best_inertia = _inertia(x, centroids, labels)
    counts = np.zeros(n_clusters, dtype=np.float64)
    m = min(batch_size, n)

    for _ in range(max_iters):
        batch = rng.choice(n, size=m, replace=False)
        bx = x[batch]
        blabels = _assign(bx, centroids, spherical)

        new_centroids = centroids.copy()
        new_counts = counts.copy()
        for c in np.unique(blabels):
            members = bx[blabels == c]
            new_counts[c] += members.shape[0]
            eta = members.shape[0] / new_counts[c]
            new_centroids[c] = (1.0 - eta) * new_centroids[c] + eta * members.mean(axis=0)
        if spherical:
            new_centroids = _unit_rows(new_centroids)

        new_labels = _assign(x, new_centroids, spherical)
        new_inertia = _inertia(x, new_centroids, new_labels)
        if new_inertia <= best_inertia:
            shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
            centroids = new_centroids
            counts = new_counts
            best_inertia = new_inertia
            if shift < tol:
                break
        # Rejected updates keep the previous centroids; the batch draw
        # still advances the RNG so the trajectory stays seed-deterministic.

    return ClusterModel(
        centroids=centroids,
        n_clusters=n_clusters,
        inertia=best_inertia,
        seed=seed,
        spherical=spherical,
    )


def assign_cluster(model: ClusterModel, point) -> int:
    """Cluster id of the argmax-similarity centroid; ties -> lowest index."""
    p = np.asarray(point, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] != model.centroids.shape[1]:
        raise ShapeError(
            f"point dim {p.shape} incompatible with centroids {model.centroids.shape}"
        )
    return int(_assign(p[None, :], model.centroids, model.spherical)[0])


def assign_clusters(model: ClusterModel, points) -> np.ndarray:
    """Vectorized assign_cluster over rows."""
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != model.centroids.shape[1]:
        raise ShapeError(
            f"points shape {p.shape} incompatible with centroids {model.centroids.shape}"
        )
    return _assign(p, model.centroids, model.spherical)
