import csv
import itertools
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mofs import analysis as an
from mofs.dataset import FeatureKind
from mofs.errors import TooFewRecordsError
from mofs.moea import InitStrategy, MoeaConfig, RunHistory, Snapshot, dominates, run
from mofs.objectives import FeatureSubset, ObjectiveSpec, evaluate

PCA_MIN = ObjectiveSpec.parse("pca-loss", "min")


def history_of(bits, objs, spec=PCA_MIN, seed=0):
    bits = np.asarray(bits, dtype=bool)
    objs = np.asarray(objs, dtype=float)
    snap = Snapshot(0, len(bits), bits, objs, np.zeros(len(bits), dtype=np.int64))
    return RunHistory(spec, MoeaConfig(master_seed=seed), [snap], np.zeros(1), (1.0, 1.0), 1, 0, seed)


def records_of(masks, d):
    return [an.ParetoRecord(FeatureSubset.from_mask(d, m), 0.0, 0.0) for m in masks]


# ---------------------------------------------------------------------------
# front extraction
# ---------------------------------------------------------------------------


def test_extract_front_single_point():
    h = history_of([[1, 0, 0], [1, 1, 0]], [[0.1, 1.0], [0.2, 2.0]])
    front = an.extract_front(h)
    assert len(front) == 1 and front[0].subset.indices.tolist() == [0]
    assert front[0].subset_fraction == pytest.approx(1 / 3)


def test_extract_front_deduplicates_masks():
    h = history_of([[1, 0], [1, 0], [1, 1]], [[0.5, 1.0], [0.5, 1.0], [0.1, 2.0]])
    front = an.extract_front(h)
    assert [r.subset.mask for r in front] == [1, 3]
    assert [r.f2 for r in front] == [1.0, 2.0]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_extract_front_matches_brute_force(seed):
    r = np.random.default_rng(seed)
    bits = r.random((30, 6)) < 0.5
    bits[:, 0] = True
    objs = r.integers(0, 5, size=(30, 2)).astype(float)
    front = an.extract_front(history_of(bits, objs))
    expected = {
        FeatureSubset(bits[i]).mask
        for i in range(30)
        if not any(dominates(objs[j], objs[i]) for j in range(30))
    }
    assert {rec.subset.mask for rec in front} == expected
    assert len(front) == len(expected)
    assert [rec.f2 for rec in front] == sorted(rec.f2 for rec in front)


# ---------------------------------------------------------------------------
# held-out accuracy
# ---------------------------------------------------------------------------


def test_naive_ground_truth_test_accuracy(default_split):
    naive = an.naive_ground_truth(default_split.dataset)
    assert naive.indices.tolist() == list(range(10))
    assert an.test_accuracy(naive, default_split, an.test_seed(1, naive)) >= 0.6


def test_single_noise_feature_near_chance(default_split):
    for j in range(20, 25):
        s = FeatureSubset.from_indices(85, [j])
        assert 0.20 < an.test_accuracy(s, default_split, an.test_seed(1, s)) < 0.47


def test_constant_label_hook(default_split):
    ds = default_split.dataset
    const = replace(ds, y=np.zeros_like(ds.y))
    split = type(default_split)(const, default_split.train_indices, default_split.test_indices, 0)
    s = FeatureSubset.from_indices(85, [0, 1])
    assert an.test_accuracy(s, split, 0, allow_single_class=True) == 1.0


def test_test_accuracy_is_deterministic(default_split):
    s = FeatureSubset.from_indices(85, [0, 3, 30])
    assert an.test_accuracy(s, default_split, 7) == an.test_accuracy(s, default_split, 7)


# ---------------------------------------------------------------------------
# clustering
# ---------------------------------------------------------------------------


def oracle_average_linkage(subsets):
    """Average linkage by recomputing every cluster distance from member pairs."""
    n = len(subsets)
    canon = sorted(range(n), key=lambda i: (subsets[i].mask, i))
    rank = {orig: pos for pos, orig in enumerate(canon)}
    clusters = [frozenset([i]) for i in range(n)]
    heights, partitions = [], {n: set(clusters)}

    def dist(a, b):
        total = sum(an.jaccard_distance(subsets[i], subsets[j]) for i in a for j in b)
        return Fraction(total, len(a) * len(b))

    while len(clusters) > 1:
        best = min(
            itertools.combinations(clusters, 2),
            key=lambda ab: (dist(*ab), *sorted((min(rank[i] for i in ab[0]), min(rank[i] for i in ab[1])))),
        )
        heights.append(dist(*best))
        clusters = [c for c in clusters if c not in best] + [best[0] | best[1]]
        partitions[len(clusters)] = set(clusters)
    return heights, partitions


def test_jaccard_distance_examples():
    a = FeatureSubset([1, 1, 0, 0])
    b = FeatureSubset([0, 1, 1, 0])
    assert an.jaccard_distance(a, b) == Fraction(2, 3)
    assert an.jaccard_distance(a, a) == 0


def test_four_identical_groups_recovered():
    masks = [0b0011, 0b0011, 0b1100, 0b1100, 0b0110, 0b0110, 0b1001, 0b1001]
    recs = records_of(masks, 4)
    c = an.cluster_solutions(recs, 4)
    for i in range(0, 8, 2):
        assert c.labels[i] == c.labels[i + 1]
    assert set(c.labels) == {"C1", "C2", "C3", "C4"}
    assert c.linkage.shape == (7, 4)
    assert c.linkage[-1, 3] == 8


def test_identical_records_are_degenerate():
    recs = records_of([5, 5, 5], 4)
    with pytest.raises(TooFewRecordsError):
        an.cluster_solutions(recs, 2)
    assert an.cluster_solutions(recs, 1).labels == ["C1"] * 3


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_clustering_matches_brute_force_oracle(seed):
    r = np.random.default_rng(seed)
    masks = [int(m) for m in r.integers(1, 2**10, size=12)]
    subsets = [FeatureSubset.from_mask(10, m) for m in masks]
    heights, partitions = oracle_average_linkage(subsets)
    distinct = len(set(masks))
    c = an.cluster_solutions(subsets, min(4, distinct))
    assert [Fraction(h).limit_denominator(10**6) for h in c.linkage[:, 2]] == [
        h.limit_denominator(10**6) for h in heights
    ]
    k = min(4, distinct)
    groups = {}
    for i, label in enumerate(c.labels):
        groups.setdefault(label, set()).add(i)
    assert {frozenset(g) for g in groups.values()} == partitions[k]
    # labels appear as C1, C2, ... along the dendrogram leaf order
    seen = []
    for leaf in c.leaf_order:
        if c.labels[leaf] not in seen:
            seen.append(c.labels[leaf])
    assert seen == [f"C{i + 1}" for i in range(k)]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_cluster_labels_invariant_to_input_order(seed):
    r = np.random.default_rng(seed)
    masks = [int(m) for m in r.integers(1, 2**8, size=10)]
    perm = r.permutation(10)
    k = min(4, len(set(masks)))
    a = an.cluster_solutions(records_of(masks, 8), k)
    b = an.cluster_solutions(records_of([masks[i] for i in perm], 8), k)
    assert [b.labels[int(np.flatnonzero(perm == i)[0])] for i in range(10)] == a.labels


def test_linkage_uses_input_indices_for_leaves():
    c = an.cluster_solutions(records_of([0b111, 0b001, 0b110], 3), 1)
    leaves = {int(x) for x in c.linkage[:, :2].ravel() if x < 3}
    assert leaves == {0, 1, 2}
    assert set(c.leaf_order) == {0, 1, 2}


# ---------------------------------------------------------------------------
# composition and lineage
# ---------------------------------------------------------------------------


def test_composition_examples(default_data):
    rec_gt = an.ParetoRecord(FeatureSubset.from_indices(85, range(10)), 0.0, 10.0, 0.8, "C1")
    rec_noise = an.ParetoRecord(FeatureSubset.from_indices(85, [20]), 0.0, 1.0, 0.3, "C2")
    comp = an.composition_report([rec_gt, rec_noise], default_data)
    assert comp.kind_counts["C1"][FeatureKind.INFORMATIVE] == 10
    assert sum(comp.kind_counts["C1"].values()) == 10
    assert comp.kind_counts["C2"][FeatureKind.GAUSSIAN_NOISE] == 1
    assert comp.mean_cardinality == {"C1": 10.0, "C2": 1.0}
    assert comp.mean_test_accuracy == {"C1": 0.8, "C2": 0.3}


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_composition_row_sums_equal_cardinalities(default_data, seed):
    r = np.random.default_rng(seed)
    masks = [int.from_bytes(r.bytes(11), "little") % (1 << 85) or 1 for _ in range(6)]
    recs = records_of(masks, 85)
    c = an.cluster_solutions(recs, 1)
    comp = an.composition_report(an.label_records(recs, c), default_data, c)
    assert comp.matrix.sum(axis=1).tolist() == [recs[i].size for i in comp.order]
    assert sum(sum(v.values()) for v in comp.kind_counts.values()) == sum(r.size for r in recs)


def test_lineage_coverage_examples(default_data):
    assert an.lineage_coverage(FeatureSubset.from_indices(85, range(10)), default_data) == 1.0
    assert an.lineage_coverage(FeatureSubset.from_indices(85, [80]), default_data) == 0.1
    noise = FeatureSubset.from_indices(85, range(20, 30))
    assert an.lineage_coverage(noise, default_data) == 0.0
    # a linear-redundant feature covers its three parents
    assert an.lineage_coverage(FeatureSubset.from_indices(85, [10]), default_data) == 0.3


@settings(max_examples=50, deadline=None)
@given(base=st.sets(st.integers(0, 84), min_size=1), extra=st.sets(st.integers(0, 84)))
def test_lineage_coverage_monotone(default_data, base, extra):
    a = an.lineage_coverage(FeatureSubset.from_indices(85, base), default_data)
    b = an.lineage_coverage(FeatureSubset.from_indices(85, base | extra), default_data)
    assert 0.0 <= a <= b <= 1.0


# ---------------------------------------------------------------------------
# naive ground truth
# ---------------------------------------------------------------------------


def test_ground_truth_self_comparison(default_split, default_ctx):
    naive = an.naive_ground_truth(default_split.dataset)
    vec = evaluate(naive, PCA_MIN, default_ctx)
    rec = an.ParetoRecord(naive, vec.f1, vec.f2)
    report = an.compare_to_ground_truth([rec], default_split, PCA_MIN, default_ctx)
    assert report.status == "non-dominated"
    assert report.accuracy_deltas == [0.0]


def test_ground_truth_dominated_and_deltas(default_split, default_ctx):
    naive = an.naive_ground_truth(default_split.dataset)
    vec = evaluate(naive, PCA_MIN, default_ctx)
    better = an.ParetoRecord(FeatureSubset.from_indices(85, [0, 1]), vec.f1 - 1.0, 2.0)
    worse = an.ParetoRecord(FeatureSubset.from_indices(85, [20]), vec.f1 + 1.0, 1.0)
    report = an.compare_to_ground_truth([better, worse], default_split, PCA_MIN, default_ctx)
    assert report.status == "dominated" and report.dominating == [0]
    naive_acc = an.test_accuracy(naive, default_split, an.test_seed(default_ctx.master_seed, naive))
    for rec, delta in zip([better, worse], report.accuracy_deltas):
        acc = an.test_accuracy(rec.subset, default_split, an.test_seed(default_ctx.master_seed, rec.subset))
        assert delta == acc - naive_acc


# ---------------------------------------------------------------------------
# cross-formulation table and the full report
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_runs(default_ctx):
    cfg = dict(population_size=8, generations=1, init=InitStrategy.fixed_cardinality(2))
    return [
        run(ObjectiveSpec.parse("pca-loss", "min"), default_ctx, MoeaConfig(master_seed=1, **cfg)),
        run(ObjectiveSpec.parse("silhouette", "max"), default_ctx, MoeaConfig(master_seed=2, **cfg)),
    ]


def test_cross_formulation_table(small_runs, default_split):
    single = an.cross_formulation_table(small_runs[:1], default_split)
    assert len(single) == len(an.extract_front(small_runs[0]))
    rows = an.cross_formulation_table(small_runs, default_split)
    assert {r["formulation"] for r in rows} == {"pca-loss/min", "silhouette/max"}
    for row in rows:
        assert list(row) == an.COMPARISON_COLUMNS
        s = FeatureSubset.from_hex(85, row["bitmask_hex"])
        assert row["test_accuracy"] == an.test_accuracy(s, default_split, an.test_seed(1, s))
        assert row["subset_fraction"] == row["subset_size"] / 85


def test_analyze_writes_consistent_reports(small_runs, default_split, default_ctx, tmp_path):
    result = an.analyze(small_runs[0], default_split, default_ctx, tmp_path, n_clusters=2)
    for name in ("front", "composition", "clusters", "linkage", "ground_truth"):
        assert result.files[name].is_file()
    with result.files["front"].open() as fh:
        front = list(csv.DictReader(fh))
    assert [r["bitmask_hex"] for r in front] == [r.subset.hex for r in result.records]
    with result.files["composition"].open() as fh:
        rows = list(csv.reader(fh))
    assert rows[1][0] == "kind" and rows[1][4] == "Informative"
    assert len(rows) == 2 + len(result.records)
    for row in rows[2:]:
        rec = result.records[int(row[1])]
        assert sum(int(v) for v in row[4:]) == rec.size
        assert row[3] == rec.cluster_id
    with result.files["linkage"].open() as fh:
        assert len(list(csv.DictReader(fh))) == len(result.records) - 1


def test_analyze_degenerate_front_falls_back_to_one_cluster(default_split, default_ctx, tmp_path):
    bits = np.zeros((3, 85), dtype=bool)
    bits[:, 0] = True
    h = history_of(bits, [[0.5, 1.0]] * 3)
    result = an.analyze(h, default_split, default_ctx, tmp_path)
    assert result.warnings and [r.cluster_id for r in result.records] == ["C1"]
