"""Evaluation objectives f1 and the subset-size regulariser f2.

All objectives follow the minimisation convention:

* silhouette: ``-max_k silhouette(kmeans_k(X_x))`` over ``k`` in 2..5
* accuracy: ``-OOB accuracy`` of a 100-tree random forest
* PCA loss: mean squared error of a linear reconstruction of the fixed
  top-5 principal-component scores of the full training matrix from ``X_x``

Stochastic objectives draw their seed from the master seed and the identity
of the selected columns, so every objective is a deterministic function of
the subset. Column identity is a content fingerprint rather than a position,
which makes every objective invariant to the order of columns in ``X``.
"""

from __future__ import annotations

import enum
import hashlib
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dataset import SplitDataset, standardize
from .errors import EmptySubsetError, ObjectiveRangeError, ShapeMismatchError
from .mlcore import (
    ForestConfig,
    forest_fit,
    forest_oob_accuracy,
    kmeans_fit,
    ols_fit,
    ols_predict,
    pairwise_distances,
    pca_fit,
    pca_project,
    silhouette,
)
from .seeding import derive_seed


class Evaluation(str, enum.Enum):
    SILHOUETTE = "silhouette"
    ACCURACY = "accuracy"
    PCA_LOSS = "pca-loss"


class SizeDirection(str, enum.Enum):
    MINIMISE = "min"
    MAXIMISE = "max"


@dataclass(frozen=True)
class ObjectiveSpec:
    evaluation: Evaluation
    size_direction: SizeDirection

    @property
    def id(self) -> str:
        return f"{self.evaluation.value}/{self.size_direction.value}"

    @classmethod
    def parse(cls, evaluation: str, size: str) -> "ObjectiveSpec":
        return cls(Evaluation(evaluation), SizeDirection(size))

    def to_dict(self) -> dict:
        return {"evaluation": self.evaluation.value, "size_direction": self.size_direction.value}

    @classmethod
    def from_dict(cls, data: dict) -> "ObjectiveSpec":
        return cls.parse(data["evaluation"], data["size_direction"])


ALL_SPECS = tuple(ObjectiveSpec(e, s) for e in Evaluation for s in SizeDirection)


@dataclass(frozen=True)
class ObjectiveVector:
    f1: float
    f2: float

    def __iter__(self):
        return iter((self.f1, self.f2))


class FeatureSubset:
    """Immutable binary decision vector over ``d`` features.

    Bit ``i`` of :attr:`mask` corresponds to column ``i`` (0-based).
    """

    __slots__ = ("_bits", "_mask")

    def __init__(self, bits):
        arr = np.array(bits, dtype=bool).reshape(-1)
        arr.setflags(write=False)
        self._bits = arr
        self._mask = int(sum(1 << int(i) for i in np.flatnonzero(arr)))

    @classmethod
    def from_indices(cls, d: int, indices) -> "FeatureSubset":
        bits = np.zeros(d, dtype=bool)
        bits[list(indices)] = True
        return cls(bits)

    @classmethod
    def from_mask(cls, d: int, mask: int) -> "FeatureSubset":
        if mask >> d:
            raise ShapeMismatchError(f"mask has bits beyond d={d}")
        return cls([(mask >> i) & 1 for i in range(d)])

    @classmethod
    def from_hex(cls, d: int, text: str) -> "FeatureSubset":
        return cls.from_mask(d, int(text, 16))

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    @property
    def d(self) -> int:
        return self._bits.size

    @property
    def mask(self) -> int:
        return self._mask

    @property
    def cardinality(self) -> int:
        return int(self._bits.sum())

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self._bits)

    @property
    def hex(self) -> str:
        return "0x" + format(self._mask, f"0{(self.d + 3) // 4}x")

    def __len__(self) -> int:
        return self.d

    def __eq__(self, other) -> bool:
        return isinstance(other, FeatureSubset) and (self.d, self._mask) == (other.d, other._mask)

    def __hash__(self) -> int:
        return hash((self.d, self._mask))

    def __repr__(self) -> str:
        return f"FeatureSubset(d={self.d}, indices={self.indices.tolist()})"


@dataclass(frozen=True, eq=False)
class PcaTarget:
    Z: np.ndarray

    @property
    def k(self) -> int:
        return self.Z.shape[1]


@dataclass(eq=False)
class EvaluationContext:
    """Training data and fixed objective parameters shared by a run."""

    train_X: np.ndarray
    train_y: np.ndarray
    pca_target: PcaTarget
    master_seed: int = 0
    silhouette_k: tuple[int, ...] = (2, 3, 4, 5)
    kmeans_restarts: int = 5
    forest: ForestConfig = field(default_factory=ForestConfig)

    column_keys: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.train_X = np.ascontiguousarray(self.train_X, dtype=float)
        self.train_X.setflags(write=False)
        self.pca_target.Z.setflags(write=False)
        self.column_keys = column_fingerprints(self.train_X)

    @property
    def d(self) -> int:
        return self.train_X.shape[1]

    @classmethod
    def from_matrix(
        cls,
        X: np.ndarray,
        y: np.ndarray,
        master_seed: int = 0,
        n_components: int = 5,
        **kwargs,
    ) -> "EvaluationContext":
        """Build a context from an already standardised training matrix."""
        model = pca_fit(X, n_components)
        target = PcaTarget(np.ascontiguousarray(pca_project(model, X)))
        return cls(np.asarray(X, dtype=float), np.asarray(y), target, master_seed, **kwargs)

    @classmethod
    def from_split(
        cls, split: SplitDataset, master_seed: int = 0, n_components: int = 5, **kwargs
    ) -> "EvaluationContext":
        """Standardise the training rows and compute the PCA target once."""
        X, _, _ = standardize(split.train.X)
        return cls.from_matrix(X, split.train.y, master_seed, n_components, **kwargs)


def column_fingerprints(X: np.ndarray) -> np.ndarray:
    """64-bit content hash of every column."""
    cols = np.asfortranarray(X, dtype="<f8")
    keys = [
        int.from_bytes(hashlib.blake2b(cols[:, j].tobytes(), digest_size=8).digest(), "little")
        for j in range(cols.shape[1])
    ]
    return np.array(keys, dtype=np.uint64)


def canonical_columns(ctx: EvaluationContext, subset: FeatureSubset) -> tuple[np.ndarray, tuple[int, ...]]:
    """Selected columns in fingerprint order, plus the sorted fingerprints."""
    Xs = filter_columns(ctx.train_X, subset)
    keys = ctx.column_keys[subset.indices]
    order = np.argsort(keys, kind="stable")
    return np.ascontiguousarray(Xs[:, order]), tuple(int(k) for k in keys[order])


def filter_columns(X: np.ndarray, subset: FeatureSubset) -> np.ndarray:
    if subset.d != X.shape[1]:
        raise ShapeMismatchError(f"subset has length {subset.d}, data has {X.shape[1]} columns")
    if subset.cardinality == 0:
        raise EmptySubsetError("subset selects no features")
    return X[:, subset.indices]


def best_silhouette(
    X: np.ndarray, k_values=(2, 3, 4, 5), seed: int = 0, restarts: int = 5
) -> tuple[float, int]:
    """Highest silhouette over k-means partitions; ties keep the smaller k."""
    D = pairwise_distances(X)
    n_distinct = np.unique(X, axis=0).shape[0]
    best, best_k = -np.inf, 0
    for k in k_values:
        if k > n_distinct or k >= X.shape[0]:
            continue
        model = kmeans_fit(X, k, seed=derive_seed(seed, "k", k), n_init=restarts)
        score = silhouette(None, model.labels, distances=D)
        if score > best:
            best, best_k = score, k
    if best_k == 0:
        # fewer than two distinct points: no partition exists
        return 0.0, 1
    return float(best), best_k


def eval_silhouette_objective(subset: FeatureSubset, ctx: EvaluationContext) -> float:
    Xs, keys = canonical_columns(ctx, subset)
    seed = derive_seed(ctx.master_seed, "silhouette", *keys)
    score, _ = best_silhouette(Xs, ctx.silhouette_k, seed, ctx.kmeans_restarts)
    return -score


def eval_accuracy_objective(subset: FeatureSubset, ctx: EvaluationContext) -> float:
    Xs, keys = canonical_columns(ctx, subset)
    seed = derive_seed(ctx.master_seed, "accuracy", *keys)
    model = forest_fit(Xs, ctx.train_y, ctx.forest, seed=seed)
    return -forest_oob_accuracy(model, ctx.train_y)


def pca_loss(Xs: np.ndarray, Z: np.ndarray) -> float:
    residual = Z - ols_predict(ols_fit(Xs, Z), Xs)
    return float((residual**2).sum() / Z.shape[0])


def eval_pca_loss_objective(subset: FeatureSubset, ctx: EvaluationContext) -> float:
    return pca_loss(canonical_columns(ctx, subset)[0], ctx.pca_target.Z)


def eval_size_regulariser(subset: FeatureSubset, direction: SizeDirection) -> float:
    size = float(subset.cardinality)
    return size if SizeDirection(direction) is SizeDirection.MINIMISE else -size


EVALUATORS: dict[Evaluation, Callable[[FeatureSubset, EvaluationContext], float]] = {
    Evaluation.SILHOUETTE: eval_silhouette_objective,
    Evaluation.ACCURACY: eval_accuracy_objective,
    Evaluation.PCA_LOSS: eval_pca_loss_objective,
}

_F1_RANGE = {
    Evaluation.SILHOUETTE: (-1.0, 1.0),
    Evaluation.ACCURACY: (-1.0, 0.0),
    Evaluation.PCA_LOSS: (0.0, np.inf),
}


def _check_range(evaluation: Evaluation, f1: float) -> None:
    lo, hi = _F1_RANGE[evaluation]
    if not (np.isfinite(f1) and lo <= f1 <= hi):
        raise ObjectiveRangeError(f"{evaluation.value} objective out of range: {f1!r}")


def evaluate_uncached(subset: FeatureSubset, spec: ObjectiveSpec, ctx: EvaluationContext):
    if subset.cardinality == 0:
        raise EmptySubsetError("subset selects no features")
    f1 = float(EVALUATORS[spec.evaluation](subset, ctx))
    _check_range(spec.evaluation, f1)
    return ObjectiveVector(f1, eval_size_regulariser(subset, spec.size_direction))


class Evaluator:
    """Memoised objective evaluation for one run.

    :attr:`n_evaluations` counts distinct subsets actually computed; cache
    hits are tallied separately and never consume budget.
    """

    def __init__(self, spec: ObjectiveSpec, ctx: EvaluationContext):
        self.spec = spec
        self.ctx = ctx
        self._cache: dict[tuple[int, int, ObjectiveSpec], ObjectiveVector] = {}
        self._lock = threading.Lock()
        self.n_evaluations = 0
        self.cache_hits = 0

    def __call__(self, subset: FeatureSubset) -> ObjectiveVector:
        key = (subset.d, subset.mask, self.spec)
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self.cache_hits += 1
                return hit
        value = evaluate_uncached(subset, self.spec, self.ctx)
        with self._lock:
            if key not in self._cache:
                self._cache[key] = value
                self.n_evaluations += 1
            else:
                self.cache_hits += 1
            return self._cache[key]

    def is_cached(self, subset: FeatureSubset) -> bool:
        return (subset.d, subset.mask, self.spec) in self._cache


def evaluate(
    subset: FeatureSubset,
    spec: ObjectiveSpec,
    ctx: EvaluationContext,
    evaluator: Evaluator | None = None,
) -> ObjectiveVector:
    """Evaluate ``(f1, f2)``; pass an :class:`Evaluator` to memoise across calls."""
    if evaluator is None:
        return evaluate_uncached(subset, spec, ctx)
    if evaluator.spec != spec or evaluator.ctx is not ctx:
        raise ValueError("evaluator was built for a different spec or context")
    return evaluator(subset)
