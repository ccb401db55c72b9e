"""Pareto-front analysis: held-out accuracy, solution clustering, composition.

Report writers emit plain CSV tables meant for external plotting.
"""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .dataset import FeatureKind, SplitDataset, SyntheticDataset
from .errors import TooFewRecordsError
from .mlcore import ForestConfig, forest_fit, forest_predict
from .moea.pareto import dominates, non_dominated_sort
from .moea.sms_emoa import RunHistory
from .objectives import (
    EvaluationContext,
    Evaluator,
    FeatureSubset,
    ObjectiveSpec,
    ObjectiveVector,
    evaluate,
)
from .seeding import derive_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParetoRecord:
    subset: FeatureSubset
    f1: float
    f2: float
    test_accuracy: float | None = None
    cluster_id: str | None = None

    @property
    def size(self) -> int:
        return self.subset.cardinality

    @property
    def subset_fraction(self) -> float:
        return self.subset.cardinality / self.subset.d


def extract_front(history: RunHistory) -> list[ParetoRecord]:
    """Unique non-dominated members of the final population, by ascending f2."""
    snap = history.final
    seen: set[int] = set()
    records = []
    for i in non_dominated_sort(snap.objectives)[0]:
        sub = FeatureSubset(snap.bits[i])
        if sub.mask in seen:
            continue
        seen.add(sub.mask)
        records.append(ParetoRecord(sub, float(snap.objectives[i, 0]), float(snap.objectives[i, 1])))
    records.sort(key=lambda r: (r.f2, r.f1, r.subset.mask))
    return records


def test_seed(master_seed: int, subset: FeatureSubset) -> int:
    return derive_seed(master_seed, "test", subset.mask)


def test_accuracy(
    subset: FeatureSubset,
    split: SplitDataset,
    seed: int,
    config: ForestConfig | None = None,
    allow_single_class: bool = False,
) -> float:
    """Random-forest accuracy on the held-out rows, trained on the training rows."""
    cols = subset.indices
    model = forest_fit(
        split.train.X[:, cols], split.train.y, config, seed=seed, allow_single_class=allow_single_class
    )
    pred = forest_predict(model, split.test.X[:, cols])
    return float(np.mean(pred == split.test.y))


def with_test_accuracy(
    records: list[ParetoRecord],
    split: SplitDataset,
    master_seed: int,
    cache: dict[int, float] | None = None,
) -> list[ParetoRecord]:
    cache = {} if cache is None else cache
    out = []
    for rec in records:
        if rec.subset.mask not in cache:
            cache[rec.subset.mask] = test_accuracy(
                rec.subset, split, test_seed(master_seed, rec.subset)
            )
        out.append(replace(rec, test_accuracy=cache[rec.subset.mask]))
    return out


# ---------------------------------------------------------------------------
# clustering of solutions
# ---------------------------------------------------------------------------


def jaccard_distance(a: FeatureSubset, b: FeatureSubset) -> Fraction:
    union = bin(a.mask | b.mask).count("1")
    if union == 0:
        return Fraction(0)
    inter = bin(a.mask & b.mask).count("1")
    return 1 - Fraction(inter, union)


@dataclass(frozen=True)
class Clustering:
    labels: list[str]  # per input record
    linkage: np.ndarray  # (n-1) x 4: left, right, distance, size
    leaf_order: list[int]  # input indices in dendrogram order


def _average_linkage(subsets: list[FeatureSubset]):
    """Exact average-linkage merges on Jaccard distance.

    Returns merges as ``(a, b, distance, size)`` over cluster ids where
    leaves are ``0..n-1`` and the ``s``-th merge creates id ``n + s``. Ties
    go to the pair with the smallest leaf indices.
    """
    n = len(subsets)
    dist: dict[tuple[int, int], Fraction] = {}
    for i in range(n):
        for j in range(i + 1, n):
            dist[(i, j)] = jaccard_distance(subsets[i], subsets[j])
    size = {i: 1 for i in range(n)}
    min_leaf = {i: i for i in range(n)}
    active = list(range(n))
    merges = []

    def key(a: int, b: int):
        return (a, b) if a < b else (b, a)

    for step in range(n - 1):
        best = None
        for x in range(len(active)):
            for y in range(x + 1, len(active)):
                a, b = active[x], active[y]
                lo, hi = sorted((min_leaf[a], min_leaf[b]))
                cand = (dist[key(a, b)], lo, hi, a, b)
                if best is None or cand[:3] < best[:3]:
                    best = cand
        dab, _, _, a, b = best
        if min_leaf[a] > min_leaf[b]:
            a, b = b, a
        new = n + step
        for c in active:
            if c in (a, b):
                continue
            dist[key(c, new)] = (size[a] * dist[key(c, a)] + size[b] * dist[key(c, b)]) / (
                size[a] + size[b]
            )
        size[new] = size[a] + size[b]
        min_leaf[new] = min(min_leaf[a], min_leaf[b])
        active = [c for c in active if c not in (a, b)] + [new]
        merges.append((a, b, dab, size[new]))
    return merges


def cluster_solutions(records, n_clusters: int = 4) -> Clustering:
    """Agglomerative clustering of selected-feature sets (Jaccard, average linkage).

    Accepts :class:`ParetoRecord` objects or bare subsets. Groups are named
    ``C1..Cn`` in dendrogram leaf order. The result does not depend on the
    order of ``records``.
    """
    subsets = [r.subset if isinstance(r, ParetoRecord) else r for r in records]
    n = len(subsets)
    distinct = len({s.mask for s in subsets})
    if n_clusters < 1 or distinct < n_clusters:
        raise TooFewRecordsError(
            f"{distinct} distinct solution(s) cannot form {n_clusters} cluster(s)"
        )
    # canonical order makes the tie-break independent of input order
    canon = sorted(range(n), key=lambda i: (subsets[i].mask, i))
    merges = _average_linkage([subsets[i] for i in canon])

    children: dict[int, tuple[int, int]] = {n + s: (a, b) for s, (a, b, _, _) in enumerate(merges)}

    def leaves(node: int) -> list[int]:
        out, stack = [], [node]
        while stack:
            cur = stack.pop()
            if cur < n:
                out.append(cur)
            else:
                a, b = children[cur]
                stack.extend((b, a))
        return out

    root = 2 * n - 2 if n > 1 else 0
    order = leaves(root)

    # undo the last n_clusters - 1 merges
    groups = list(range(n))
    parent = {}
    for s, (a, b, _, _) in enumerate(merges[: n - n_clusters]):
        parent[a] = parent[b] = n + s

    def top(node: int) -> int:
        while node in parent:
            node = parent[node]
        return node

    groups = [top(leaf) for leaf in range(n)]
    names: dict[int, str] = {}
    for leaf in order:
        names.setdefault(groups[leaf], f"C{len(names) + 1}")

    labels = [""] * n
    for pos, orig in enumerate(canon):
        labels[orig] = names[groups[pos]]

    def ext(node: int) -> int:
        return canon[node] if node < n else node

    linkage = np.array(
        [[ext(a), ext(b), float(dist), sz] for a, b, dist, sz in merges], dtype=float
    ).reshape(-1, 4)
    return Clustering(labels, linkage, [canon[p] for p in order])


def label_records(records: list[ParetoRecord], clustering: Clustering) -> list[ParetoRecord]:
    return [replace(r, cluster_id=c) for r, c in zip(records, clustering.labels)]


# ---------------------------------------------------------------------------
# composition and lineage
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompositionMatrix:
    order: list[int]  # record indices, one per row
    matrix: np.ndarray  # rows x d, 0/1
    row_labels: list[str]
    kinds: tuple[FeatureKind, ...]
    kind_counts: dict[str, dict[FeatureKind, int]]
    mean_cardinality: dict[str, float]
    mean_test_accuracy: dict[str, float]


def composition_report(
    records: list[ParetoRecord],
    taxonomy: SyntheticDataset | tuple[FeatureKind, ...],
    clustering: Clustering | None = None,
) -> CompositionMatrix:
    """Selection matrix plus per-cluster feature-kind counts.

    Records without a ``cluster_id`` are pooled under ``C1``.
    """
    kinds = taxonomy.kinds if isinstance(taxonomy, SyntheticDataset) else tuple(taxonomy)
    order = clustering.leaf_order if clustering is not None else list(range(len(records)))
    matrix = np.array([records[i].subset.bits for i in order], dtype=np.int8).reshape(len(order), len(kinds))
    row_labels = [records[i].cluster_id or "C1" for i in order]

    kind_counts: dict[str, dict[FeatureKind, int]] = {}
    cards: dict[str, list[int]] = {}
    accs: dict[str, list[float]] = {}
    for i in order:
        rec = records[i]
        label = rec.cluster_id or "C1"
        counts = kind_counts.setdefault(label, {k: 0 for k in FeatureKind})
        for j in rec.subset.indices:
            counts[kinds[j]] += 1
        cards.setdefault(label, []).append(rec.size)
        if rec.test_accuracy is not None:
            accs.setdefault(label, []).append(rec.test_accuracy)
    return CompositionMatrix(
        order=list(order),
        matrix=matrix,
        row_labels=row_labels,
        kinds=kinds,
        kind_counts=kind_counts,
        mean_cardinality={c: float(np.mean(v)) for c, v in cards.items()},
        mean_test_accuracy={c: float(np.mean(accs[c])) if c in accs else float("nan") for c in cards},
    )


def lineage_coverage(subset: FeatureSubset, dataset: SyntheticDataset) -> float:
    """Fraction of informative features selected directly or through a derived feature."""
    informative = set(dataset.informative_indices.tolist())
    if not informative:
        return 0.0
    lineage = dataset.lineage_by_feature
    covered = set()
    for j in subset.indices.tolist():
        if j in informative:
            covered.add(j)
        elif j in lineage:
            covered.update(p for p in lineage[j].parents if p in informative)
    return len(covered) / len(informative)


# ---------------------------------------------------------------------------
# naive ground truth
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroundTruthReport:
    naive_subset: FeatureSubset
    naive_objectives: ObjectiveVector
    naive_test_accuracy: float
    status: str  # "dominated" or "non-dominated"
    dominating: list[int]  # record indices that dominate the naive subset
    accuracy_deltas: list[float]
    records: list[ParetoRecord] = field(repr=False)

    @property
    def dominating_with_higher_accuracy(self) -> int:
        return sum(1 for i in self.dominating if self.accuracy_deltas[i] > 0)


def naive_ground_truth(dataset: SyntheticDataset) -> FeatureSubset:
    return FeatureSubset.from_indices(dataset.d, dataset.informative_indices)


def compare_to_ground_truth(
    records: list[ParetoRecord],
    split: SplitDataset,
    spec: ObjectiveSpec,
    ctx: EvaluationContext,
    evaluator: Evaluator | None = None,
) -> GroundTruthReport:
    naive = naive_ground_truth(split.dataset)
    vec = evaluate(naive, spec, ctx, evaluator)
    naive_acc = test_accuracy(naive, split, test_seed(ctx.master_seed, naive))
    if any(r.test_accuracy is None for r in records):
        records = with_test_accuracy(records, split, ctx.master_seed)
    dominating = [i for i, r in enumerate(records) if dominates((r.f1, r.f2), tuple(vec))]
    return GroundTruthReport(
        naive_subset=naive,
        naive_objectives=vec,
        naive_test_accuracy=naive_acc,
        status="dominated" if dominating else "non-dominated",
        dominating=dominating,
        accuracy_deltas=[r.test_accuracy - naive_acc for r in records],
        records=records,
    )


# ---------------------------------------------------------------------------
# cross-formulation table
# ---------------------------------------------------------------------------

COMPARISON_COLUMNS = [
    "formulation",
    "objective",
    "size_direction",
    "init",
    "run_seed",
    "bitmask_hex",
    "subset_size",
    "subset_fraction",
    "f1",
    "f2",
    "test_accuracy",
]


def cross_formulation_table(
    runs: list[RunHistory],
    split: SplitDataset,
    cache: dict[tuple[int, int], float] | None = None,
) -> list[dict]:
    """One row per front member of every run, with held-out accuracy."""
    cache = {} if cache is None else cache
    rows = []
    for history in runs:
        per_seed = {m: a for (s, m), a in cache.items() if s == history.context_seed}
        records = with_test_accuracy(extract_front(history), split, history.context_seed, per_seed)
        for m, a in per_seed.items():
            cache[(history.context_seed, m)] = a
        for rec in records:
            rows.append(
                {
                    "formulation": history.spec.id,
                    "objective": history.spec.evaluation.value,
                    "size_direction": history.spec.size_direction.value,
                    "init": history.config.init.label,
                    "run_seed": history.config.master_seed,
                    "bitmask_hex": rec.subset.hex,
                    "subset_size": rec.size,
                    "subset_fraction": rec.subset_fraction,
                    "f1": rec.f1,
                    "f2": rec.f2,
                    "test_accuracy": rec.test_accuracy,
                }
            )
    return rows


# ---------------------------------------------------------------------------
# CSV writers
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write(path: Path, header: list[str], rows) -> Path:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return Path(path)


def write_front_csv(path, records: list[ParetoRecord]) -> Path:
    header = ["bitmask_hex", "subset_size", "subset_fraction", "f1", "f2", "test_accuracy", "cluster_id"]
    rows = [
        (r.subset.hex, r.size, r.subset_fraction, r.f1, r.f2, r.test_accuracy, r.cluster_id or "")
        for r in records
    ]
    return _write(path, header, rows)


def write_composition_csv(path, records: list[ParetoRecord], comp: CompositionMatrix) -> Path:
    d = len(comp.kinds)
    header = ["row", "record", "bitmask_hex", "cluster_id"] + [f"feat_{j + 1}" for j in range(d)]
    kind_row = ["kind", "", "", ""] + [k.value for k in comp.kinds]
    rows = [kind_row]
    for row, (rec_idx, label) in enumerate(zip(comp.order, comp.row_labels)):
        rows.append([row, rec_idx, records[rec_idx].subset.hex, label] + comp.matrix[row].tolist())
    return _write(path, header, rows)


def write_cluster_summary_csv(path, comp: CompositionMatrix) -> Path:
    header = ["cluster_id", "n_solutions", "mean_cardinality", "mean_test_accuracy"] + [
        k.value for k in FeatureKind
    ]
    counts = Counter(comp.row_labels)
    rows = [
        [c, counts[c], comp.mean_cardinality[c], comp.mean_test_accuracy[c]]
        + [comp.kind_counts[c][k] for k in FeatureKind]
        for c in sorted(comp.kind_counts, key=lambda s: int(s[1:]))
    ]
    return _write(path, header, rows)


def write_linkage_csv(path, clustering: Clustering) -> Path:
    rows = [(int(a), int(b), float(dd), int(s)) for a, b, dd, s in clustering.linkage]
    return _write(path, ["left", "right", "distance", "size"], rows)


def write_ground_truth_csv(path, report: GroundTruthReport) -> Path:
    header = [
        "role",
        "bitmask_hex",
        "subset_size",
        "f1",
        "f2",
        "test_accuracy",
        "accuracy_delta",
        "dominates_naive",
        "naive_status",
    ]
    naive = report.naive_subset
    rows = [
        (
            "naive",
            naive.hex,
            naive.cardinality,
            report.naive_objectives.f1,
            report.naive_objectives.f2,
            report.naive_test_accuracy,
            0.0,
            "",
            report.status,
        )
    ]
    dom = set(report.dominating)
    for i, rec in enumerate(report.records):
        rows.append(
            (
                "member",
                rec.subset.hex,
                rec.size,
                rec.f1,
                rec.f2,
                rec.test_accuracy,
                report.accuracy_deltas[i],
                int(i in dom),
                report.status,
            )
        )
    return _write(path, header, rows)


def write_comparison_csv(path, rows: list[dict]) -> Path:
    return _write(path, COMPARISON_COLUMNS, ([r[c] for c in COMPARISON_COLUMNS] for r in rows))


@dataclass
class AnalysisResult:
    records: list[ParetoRecord]
    clustering: Clustering | None
    composition: CompositionMatrix
    ground_truth: GroundTruthReport
    files: dict[str, Path]
    warnings: list[str]


def analyze(
    history: RunHistory,
    split: SplitDataset,
    ctx: EvaluationContext,
    out_dir: str | Path,
    n_clusters: int = 4,
) -> AnalysisResult:
    """Write front, composition, linkage and ground-truth reports for one run.

    When the front has fewer distinct solutions than ``n_clusters`` a warning
    is recorded and every record is labelled ``C1``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    warnings: list[str] = []
    records = with_test_accuracy(extract_front(history), split, ctx.master_seed)
    try:
        clustering = cluster_solutions(records, n_clusters)
    except TooFewRecordsError as exc:
        warnings.append(f"degenerate clustering: {exc}")
        log.warning("degenerate clustering: %s", exc)
        clustering = cluster_solutions(records, 1)
    records = label_records(records, clustering)
    comp = composition_report(records, split.dataset, clustering)
    report = compare_to_ground_truth(records, split, history.spec, ctx)
    files = {
        "front": write_front_csv(out_dir / "front.csv", records),
        "composition": write_composition_csv(out_dir / "composition.csv", records, comp),
        "clusters": write_cluster_summary_csv(out_dir / "clusters.csv", comp),
        "linkage": write_linkage_csv(out_dir / "linkage.csv", clustering),
        "ground_truth": write_ground_truth_csv(out_dir / "ground_truth.csv", report),
    }
    return AnalysisResult(records, clustering, comp, report, files, warnings)
