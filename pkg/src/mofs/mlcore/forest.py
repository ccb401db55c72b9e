"""Random forest classifier (CART, Gini) with out-of-bag vote tallies.

Trees are grown to purity on bootstrap samples of size ``n``, drawing
``ceil(sqrt(m))`` candidate features per node. Each tree uses its own
random stream seeded from ``(seed, tree_index)``, so results do not depend
on the order in which trees are built. The tree builder is compiled with
numba; a forest evaluation sits inside the optimiser's inner loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from ..errors import EmptyInputError, ShapeMismatchError, SingleClassFitError
from ..seeding import derive_seed


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_features: int | None = None  # None -> ceil(sqrt(m))
    min_samples_split: int = 2


@dataclass(frozen=True)
class DecisionTree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    class_counts: np.ndarray  # per node, counts of in-bag samples

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]


@dataclass(frozen=True, eq=False)
class ForestModel:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    class_counts: np.ndarray
    leaf_class: np.ndarray
    offsets: np.ndarray
    n_nodes: np.ndarray
    classes: np.ndarray
    oob_votes: np.ndarray  # n_train x n_classes
    n_features: int
    config: ForestConfig
    seed: int

    @property
    def n_trees(self) -> int:
        return self.offsets.shape[0]

    def tree(self, i: int) -> DecisionTree:
        lo, hi = self.offsets[i], self.offsets[i] + self.n_nodes[i]
        return DecisionTree(
            self.feature[lo:hi],
            self.threshold[lo:hi],
            self.left[lo:hi],
            self.right[lo:hi],
            self.class_counts[lo:hi],
        )

    @property
    def trees(self) -> list[DecisionTree]:
        return [self.tree(i) for i in range(self.n_trees)]


@numba.njit(cache=True)
def _value_ranks(XT):
    """Dense rank of every value within its feature, plus distinct counts."""
    m, n = XT.shape
    ranks = np.empty((m, n), np.int64)
    n_distinct = np.empty(m, np.int64)
    for f in range(m):
        order = np.argsort(XT[f], kind="mergesort")
        r = 0
        for k in range(n):
            if k > 0 and XT[f, order[k]] != XT[f, order[k - 1]]:
                r += 1
            ranks[f, order[k]] = r
        n_distinct[f] = r + 1
    return ranks, n_distinct


@numba.njit(cache=True)
def _grow(XT, ranks, n_distinct, y, w, n_classes, idx, mtry, min_split, perm, feature, threshold, left,
          right, counts, base):
    """Grow one tree into the node arrays starting at ``base``.

    ``idx`` holds the distinct in-bag rows and ``w`` their bootstrap
    multiplicities. Duplicated rows always fall on the same side of a
    split, so this is equivalent to growing on the expanded sample.
    Candidate features are ordered by a counting sort over precomputed
    value ranks. Returns the number of nodes used.
    """
    n_feat = XT.shape[0]
    size_total = idx.shape[0]
    stack_start = np.empty(size_total * 2 + 1, np.int64)
    stack_end = np.empty(size_total * 2 + 1, np.int64)
    stack_node = np.empty(size_total * 2 + 1, np.int64)
    buf = np.empty(size_total, np.int64)
    vals = np.empty(size_total, np.float64)
    srows = np.empty(size_total, np.int64)
    bucket = np.empty(XT.shape[1] + 1, np.int64)
    left_counts = np.empty(n_classes, np.float64)
    node_counts = np.empty(n_classes, np.float64)

    n_nodes = 1
    stack_start[0] = 0
    stack_end[0] = size_total
    stack_node[0] = 0
    top = 1
    while top > 0:
        top -= 1
        start = stack_start[top]
        end = stack_end[top]
        node = base + stack_node[top]
        size = end - start

        node_counts[:] = 0.0
        weight = 0.0
        for i in range(start, end):
            node_counts[y[idx[i]]] += w[idx[i]]
            weight += w[idx[i]]
        counts[node, :] = node_counts
        feature[node] = -1
        left[node] = -1
        right[node] = -1
        threshold[node] = 0.0

        pure = False
        for c in range(n_classes):
            if node_counts[c] == weight:
                pure = True
        if pure or weight < min_split:
            continue

        best_score = np.inf
        best_feat = -1
        best_thr = 0.0
        visited_ok = 0
        for i in range(n_feat):
            if visited_ok >= mtry:
                break
            j = np.random.randint(i, n_feat)
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp
            f = perm[i]
            col = XT[f]
            n_ranks = n_distinct[f]
            rk = ranks[f]
            bucket[: n_ranks + 1] = 0
            for i2 in range(start, end):
                bucket[rk[idx[i2]] + 1] += 1
            for k in range(1, n_ranks):
                bucket[k] += bucket[k - 1]
            for i2 in range(start, end):
                row = idx[i2]
                pos = bucket[rk[row]]
                bucket[rk[row]] = pos + 1
                srows[pos] = row
            for r in range(size):
                vals[r] = col[srows[r]]
            if vals[0] == vals[size - 1]:
                continue
            visited_ok += 1
            left_counts[:] = 0.0
            nl = 0.0
            for r in range(size - 1):
                row = srows[r]
                left_counts[y[row]] += w[row]
                nl += w[row]
                v0 = vals[r]
                v1 = vals[r + 1]
                if v0 == v1:
                    continue
                nr = weight - nl
                sl = 0.0
                sr = 0.0
                for c in range(n_classes):
                    sl += left_counts[c] * left_counts[c]
                    rc = node_counts[c] - left_counts[c]
                    sr += rc * rc
                score = (nl - sl / nl) + (nr - sr / nr)
                if score < best_score:
                    best_score = score
                    best_feat = f
                    thr = 0.5 * (v0 + v1)
                    if thr == v1:
                        thr = v0
                    best_thr = thr
        if best_feat < 0:
            continue

        n_left = 0
        n_right = 0
        for i in range(start, end):
            if XT[best_feat, idx[i]] <= best_thr:
                idx[start + n_left] = idx[i]
                n_left += 1
            else:
                buf[n_right] = idx[i]
                n_right += 1
        for i in range(n_right):
            idx[start + n_left + i] = buf[i]

        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1

        stack_start[top] = start + n_left
        stack_end[top] = end
        stack_node[top] = n_nodes + 1
        top += 1
        stack_start[top] = start
        stack_end[top] = start + n_left
        stack_node[top] = n_nodes
        top += 1
        n_nodes += 2
    return n_nodes


@numba.njit(cache=True)
def _leaf_of(x, feature, threshold, left, right, base):
    node = 0
    while feature[base + node] >= 0:
        if x[feature[base + node]] <= threshold[base + node]:
            node = left[base + node]
        else:
            node = right[base + node]
    return base + node


@numba.njit(cache=True)
def _fit_forest(X, y, n_classes, seeds, mtry, min_split):
    n = X.shape[0]
    n_trees = seeds.shape[0]
    max_nodes = 2 * n
    total = n_trees * max_nodes
    feature = np.empty(total, np.int64)
    threshold = np.empty(total, np.float64)
    left = np.empty(total, np.int64)
    right = np.empty(total, np.int64)
    counts = np.zeros((total, n_classes), np.float64)
    offsets = np.empty(n_trees, np.int64)
    n_nodes = np.empty(n_trees, np.int64)
    oob = np.zeros((n, n_classes), np.int64)
    perm = np.empty(X.shape[1], np.int64)
    w = np.zeros(n, np.float64)
    XT = np.ascontiguousarray(X.T)
    ranks, n_distinct = _value_ranks(XT)

    for t in range(n_trees):
        np.random.seed(seeds[t])
        idx = np.random.randint(0, n, n)
        for i in range(perm.shape[0]):
            perm[i] = i
        w[:] = 0.0
        for i in range(n):
            w[idx[i]] += 1.0
        rows = np.flatnonzero(w)
        base = t * max_nodes
        offsets[t] = base
        n_nodes[t] = _grow(
            XT, ranks, n_distinct, y, w, n_classes, rows, mtry, min_split, perm, feature, threshold, left, right, counts, base
        )
        for i in range(n):
            if w[i] == 0.0:
                leaf = _leaf_of(X[i], feature, threshold, left, right, base)
                oob[i, np.argmax(counts[leaf])] += 1
    return feature, threshold, left, right, counts, offsets, n_nodes, oob


@numba.njit(cache=True)
def _votes(X, feature, threshold, left, right, leaf_class, offsets, n_classes):
    votes = np.zeros((X.shape[0], n_classes), np.int64)
    for t in range(offsets.shape[0]):
        for i in range(X.shape[0]):
            leaf = _leaf_of(X[i], feature, threshold, left, right, offsets[t])
            votes[i, leaf_class[leaf]] += 1
    return votes


def _as_2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return X.reshape(-1, 1) if X.ndim == 1 else X


def forest_fit(
    X,
    y,
    config: ForestConfig | None = None,
    seed: int = 0,
    allow_single_class: bool = False,
) -> ForestModel:
    """Fit a random forest; ``allow_single_class`` relaxes the two-class check."""
    config = config or ForestConfig()
    X = np.ascontiguousarray(_as_2d(X))
    y = np.asarray(y)
    n, m = X.shape
    if n == 0 or m == 0:
        raise EmptyInputError("forest_fit needs at least one sample and one feature")
    if y.shape[0] != n:
        raise ShapeMismatchError(f"{n} samples but {y.shape[0]} labels")
    classes, codes = np.unique(y, return_inverse=True)
    if classes.size < 2 and not allow_single_class:
        raise SingleClassFitError("forest_fit needs at least two classes")
    mtry = config.max_features or math.ceil(math.sqrt(m))
    mtry = min(max(int(mtry), 1), m)
    seeds = np.array(
        [derive_seed(seed, "tree", t) & 0xFFFFFFFF for t in range(config.n_trees)],
        dtype=np.uint32,
    )
    feature, threshold, left, right, counts, offsets, n_nodes, oob = _fit_forest(
        X, codes.astype(np.int64), classes.size, seeds, mtry, config.min_samples_split
    )
    used = np.concatenate([np.arange(o, o + k) for o, k in zip(offsets, n_nodes)])
    remap = np.full(feature.shape[0], -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    new_offsets = np.concatenate([[0], np.cumsum(n_nodes)[:-1]]).astype(np.int64)
    # child indices are tree-local, so they stay valid after compaction
    counts = counts[used]
    return ForestModel(
        feature=feature[used],
        threshold=threshold[used],
        left=left[used],
        right=right[used],
        class_counts=counts,
        leaf_class=counts.argmax(axis=1).astype(np.int64),
        offsets=new_offsets,
        n_nodes=n_nodes.astype(np.int64),
        classes=classes,
        oob_votes=oob,
        n_features=m,
        config=config,
        seed=int(seed),
    )


def forest_votes(model: ForestModel, X) -> np.ndarray:
    X = np.ascontiguousarray(_as_2d(X))
    if X.shape[1] != model.n_features:
        raise ShapeMismatchError(f"expected {model.n_features} columns, got {X.shape[1]}")
    return _votes(
        X,
        model.feature,
        model.threshold,
        model.left,
        model.right,
        model.leaf_class,
        model.offsets,
        model.classes.size,
    )


def forest_predict(model: ForestModel, X) -> np.ndarray:
    """Majority vote; ties go to the smallest class index."""
    return model.classes[forest_votes(model, X).argmax(axis=1)]


def forest_oob_accuracy(model: ForestModel, y) -> float:
    """Accuracy of out-of-bag votes over samples that received at least one."""
    y = np.asarray(y)
    has_vote = model.oob_votes.sum(axis=1) > 0
    if not has_vote.any():
        raise EmptyInputError("no sample received an out-of-bag vote")
    pred = model.classes[model.oob_votes[has_vote].argmax(axis=1)]
    return float(np.mean(pred == y[has_vote]))
