"""k-means (Lloyd with k-means++ seeding) and the silhouette coefficient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import InvalidKError, SingleClusterInputError


@dataclass(frozen=True, eq=False)
class KMeansModel:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    k: int
    n_iter: int
    # inertia after every assignment step of the winning restart
    inertia_trace: tuple[float, ...]


def _as_2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X.reshape(-1, 1) if X.ndim == 1 else X


def _sq_dist(X: np.ndarray, x_sq: np.ndarray, C: np.ndarray) -> np.ndarray:
    D = x_sq[:, None] - 2.0 * (X @ C.T) + (C**2).sum(axis=1)[None, :]
    np.maximum(D, 0.0, out=D)
    return D


def _kmeans_pp(X, x_sq, k, rng):
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    closest = _sq_dist(X, x_sq, X[centers])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            nxt = int(rng.integers(n))
        centers.append(nxt)
        closest = np.minimum(closest, _sq_dist(X, x_sq, X[[nxt]])[:, 0])
    return X[centers].copy()


def _centroids(X, labels, k):
    onehot = np.zeros((X.shape[0], k))
    onehot[np.arange(X.shape[0]), labels] = 1.0
    counts = onehot.sum(axis=0)
    return (onehot.T @ X) / counts[:, None]


def _repair_empty(X, D, labels, C, k):
    counts = np.bincount(labels, minlength=k)
    for empty in np.flatnonzero(counts == 0):
        cost = D[np.arange(len(labels)), labels].copy()
        cost[counts[labels] <= 1] = -1.0
        far = int(np.argmax(cost))
        counts[labels[far]] -= 1
        labels[far] = empty
        counts[empty] = 1
        C[empty] = X[far]
        D[far, empty] = 0.0
    return labels


def _lloyd(X, x_sq, k, rng, max_iter, tol):
    C = _kmeans_pp(X, x_sq, k, rng)
    trace = []
    labels = None
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        D = _sq_dist(X, x_sq, C)
        labels = _repair_empty(X, D, D.argmin(axis=1), C, k)
        trace.append(float(D[np.arange(len(labels)), labels].sum()))
        new_C = _centroids(X, labels, k)
        shift = float(np.sqrt(((new_C - C) ** 2).sum(axis=1)).max())
        C = new_C
        if shift < tol:
            break
    D = _sq_dist(X, x_sq, C)
    final = D.argmin(axis=1)
    if np.unique(final).size == k:
        labels = final
    inertia = float(D[np.arange(len(labels)), labels].sum())
    trace.append(inertia)
    return KMeansModel(C, labels, inertia, k, n_iter, tuple(trace))


def kmeans_fit(
    X,
    k: int,
    seed: int = 0,
    n_init: int = 5,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> KMeansModel:
    """Best-of-``n_init`` Lloyd k-means by inertia.

    Stops a restart when no centroid moves more than ``tol`` or after
    ``max_iter`` iterations. Empty clusters are re-seeded with the point
    farthest from its centroid.
    """
    X = _as_2d(X)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise InvalidKError(f"k must lie in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    x_sq = (X**2).sum(axis=1)
    best = None
    for _ in range(n_init):
        model = _lloyd(X, x_sq, k, rng, max_iter, tol)
        if best is None or model.inertia < best.inertia:
            best = model
    return best


def pairwise_distances(X) -> np.ndarray:
    X = _as_2d(X)
    return cdist(X, X)


def silhouette(X, labels, distances: np.ndarray | None = None) -> float:
    """Mean silhouette coefficient under Euclidean distance.

    Samples in singleton clusters score 0. ``distances`` may carry a
    precomputed pairwise distance matrix, in which case ``X`` is ignored.
    """
    _, codes = np.unique(np.asarray(labels), return_inverse=True)
    n_clusters = codes.max() + 1 if codes.size else 0
    if n_clusters < 2:
        raise SingleClusterInputError("silhouette needs at least two distinct labels")
    D = pairwise_distances(X) if distances is None else distances
    n = codes.size
    onehot = np.zeros((n, n_clusters))
    onehot[np.arange(n), codes] = 1.0
    sums = D @ onehot
    counts = onehot.sum(axis=0)

    own = counts[codes]
    a = np.where(own > 1, sums[np.arange(n), codes] / np.maximum(own - 1, 1), 0.0)
    mean_to = sums / counts[None, :]
    mean_to[np.arange(n), codes] = np.inf
    b = mean_to.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())
