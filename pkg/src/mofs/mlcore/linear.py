"""PCA via SVD and least-squares regression with intercept."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidKError, ShapeMismatchError


@dataclass(frozen=True, eq=False)
class PcaModel:
    components: np.ndarray  # d x k, orthonormal columns
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray
    mean: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[1]


@dataclass(frozen=True, eq=False)
class LinearModel:
    W: np.ndarray  # m x k
    intercept: np.ndarray


def _as_2d(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return A.reshape(-1, 1) if A.ndim == 1 else A


def pca_fit(X, k: int) -> PcaModel:
    """Top-``k`` principal axes of the column-centred data.

    Each component is oriented so that its largest-magnitude entry is
    positive. Variances use the ``n - 1`` denominator.
    """
    X = _as_2d(X)
    n, d = X.shape
    if not 1 <= k <= min(n, d):
        raise InvalidKError(f"k must lie in [1, {min(n, d)}], got {k}")
    mean = X.mean(axis=0)
    _, S, Vt = np.linalg.svd(X - mean, full_matrices=False)
    comps = Vt[:k].T.copy()
    pivots = np.abs(comps).argmax(axis=0)
    signs = np.sign(comps[pivots, np.arange(k)])
    comps *= np.where(signs == 0, 1.0, signs)
    var = S**2 / max(n - 1, 1)
    total = var.sum()
    ratio = var[:k] / total if total > 0 else np.zeros(k)
    return PcaModel(comps, var[:k].copy(), ratio, mean)


def pca_project(model: PcaModel, X) -> np.ndarray:
    X = _as_2d(X)
    if X.shape[1] != model.mean.shape[0]:
        raise ShapeMismatchError(
            f"expected {model.mean.shape[0]} columns, got {X.shape[1]}"
        )
    return (X - model.mean) @ model.components


def ols_fit(X, Z) -> LinearModel:
    """Minimum-norm least squares of ``Z`` on ``X`` with an intercept."""
    X, Z = _as_2d(X), _as_2d(Z)
    if X.shape[0] != Z.shape[0]:
        raise ShapeMismatchError(f"row mismatch: X has {X.shape[0]}, Z has {Z.shape[0]}")
    if X.shape[0] < 1:
        raise ShapeMismatchError("need at least one sample")
    x_mean, z_mean = X.mean(axis=0), Z.mean(axis=0)
    W = np.linalg.lstsq(X - x_mean, Z - z_mean, rcond=None)[0]
    return LinearModel(W, z_mean - x_mean @ W)


def ols_predict(model: LinearModel, X) -> np.ndarray:
    X = _as_2d(X)
    if X.shape[1] != model.W.shape[0]:
        raise ShapeMismatchError(f"expected {model.W.shape[0]} columns, got {X.shape[1]}")
    return X @ model.W + model.intercept
