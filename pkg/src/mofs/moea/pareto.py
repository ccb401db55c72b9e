"""Two-objective dominance, non-dominated sorting and exact hypervolume."""

from __future__ import annotations

import numpy as np


def dominates(p, q) -> bool:
    """``p`` dominates ``q`` under minimisation."""
    return p[0] <= q[0] and p[1] <= q[1] and (p[0] < q[0] or p[1] < q[1])


def _as_points(points) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    return P.reshape(-1, 2)


def non_dominated_sort(points) -> list[list[int]]:
    """Partition point indices into successive non-dominated fronts.

    Points are visited in lexicographic ``(f1, f2)`` order; a point joins
    the first front whose most recent member does not dominate it. Within
    a front, indices are ordered by ascending ``f2`` then ``f1``.
    """
    P = _as_points(points)
    order = np.lexsort((P[:, 1], P[:, 0]))
    fronts: list[list[int]] = []
    tails: list[int] = []
    for i in order:
        f1, f2 = P[i]
        lo, hi = 0, len(fronts)
        # dominance by front j is monotone in j; binary search the first free front
        while lo < hi:
            mid = (lo + hi) // 2
            t1, t2 = P[tails[mid]]
            if t2 < f2 or (t2 == f2 and t1 < f1):
                lo = mid + 1
            else:
                hi = mid
        if lo == len(fronts):
            fronts.append([])
            tails.append(i)
        fronts[lo].append(int(i))
        tails[lo] = i
    return [sorted(front, key=lambda j: (P[j, 1], P[j, 0], j)) for front in fronts]


def _staircase(P: np.ndarray, ref) -> list[list[int]]:
    """Non-dominated points strictly inside ``ref``, grouped by identical coordinates.

    Groups are ordered by ascending ``f1`` (hence strictly descending ``f2``).
    """
    inside = np.flatnonzero((P[:, 0] < ref[0]) & (P[:, 1] < ref[1]))
    order = inside[np.lexsort((P[inside, 1], P[inside, 0]))]
    groups: list[list[int]] = []
    best_f2 = np.inf
    for i in order:
        if groups and P[groups[-1][0], 0] == P[i, 0] and P[groups[-1][0], 1] == P[i, 1]:
            groups[-1].append(int(i))
        elif P[i, 1] < best_f2:
            groups.append([int(i)])
            best_f2 = P[i, 1]
    return groups


def hypervolume_2d(points, ref) -> float:
    P = _as_points(points)
    ref = (float(ref[0]), float(ref[1]))
    hv = 0.0
    upper = ref[1]
    for group in _staircase(P, ref):
        f1, f2 = P[group[0]]
        hv += (ref[0] - f1) * (upper - f2)
        upper = f2
    return float(hv)


def hv_contribution_2d(points, ref) -> np.ndarray:
    """Exclusive hypervolume ``HV(all) - HV(all without p)`` of each point.

    Dominated or duplicated points get 0. The box between a staircase point
    and its neighbours can still be partly covered by points it weakly
    dominates, so their union is subtracted.
    """
    P = _as_points(points)
    ref = (float(ref[0]), float(ref[1]))
    contrib = np.zeros(P.shape[0])
    groups = _staircase(P, ref)
    for j, group in enumerate(groups):
        if len(group) > 1:
            continue
        i = group[0]
        f1, f2 = P[i]
        right = P[groups[j + 1][0], 0] if j + 1 < len(groups) else ref[0]
        upper = P[groups[j - 1][0], 1] if j > 0 else ref[1]
        behind = (P[:, 0] >= f1) & (P[:, 1] >= f2)
        behind[i] = False
        covered = hypervolume_2d(P[behind], (right, upper)) if behind.any() else 0.0
        contrib[i] = (right - f1) * (upper - f2) - covered
    return contrib
