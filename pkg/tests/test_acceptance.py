"""Acceptance criteria 1-9.

Each test prints one ``CRITERION n: PASS|FAIL`` line and the lines are
repeated in the pytest terminal summary.
"""

import contextlib
import os
import statistics
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES, cached_run, seed_ctx
from sklearn.metrics import adjusted_rand_score

from mofs import analysis as an
from mofs import cli
from mofs import dataset as ds
from mofs.dataset import FeatureKind
from mofs.mlcore import kmeans_fit, ols_fit, pca_fit, silhouette
from mofs.moea import (
    InitStrategy,
    MoeaConfig,
    ReferenceMode,
    RunHistory,
    Snapshot,
    dominates,
    hv_contribution_2d,
    hypervolume_2d,
    non_dominated_sort,
    run,
)
from mofs.objectives import (
    ALL_SPECS,
    FeatureSubset,
    ObjectiveSpec,
    eval_accuracy_objective,
    eval_pca_loss_objective,
    eval_silhouette_objective,
)

SEEDS = (0, 1, 2)
K1 = InitStrategy.fixed_cardinality(1)


@contextlib.contextmanager
def criterion(number: int, title: str):
    """Record PASS when the block finishes cleanly, FAIL otherwise."""
    details: list[str] = []
    start = time.perf_counter()
    try:
        yield details
    except BaseException as exc:
        details.append(f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
        status = "FAIL"
        raise
    else:
        status = "PASS"
    finally:
        elapsed = time.perf_counter() - start
        line = f"CRITERION {number}: {status} - {title} ({elapsed:.1f} s)"
        if details:
            line += " | " + "; ".join(details)
        print(line)
        ACCEPTANCE_LINES.append(line)


# ---------------------------------------------------------------------------
# 1. hypervolume oracle
# ---------------------------------------------------------------------------

GRID = 2000


def grid_area(points: np.ndarray) -> float:
    """Dominated area inside the unit box, counted on a GRID x GRID cell lattice.

    Cell (i, j) is dominated when its centre is weakly above some point.
    Columns are processed together: the lowest dominating row per column
    gives the count of dominated cells in that column.
    """
    if len(points) == 0:
        return 0.0
    centres = (np.arange(GRID) + 0.5) / GRID
    lowest = np.full(GRID, np.inf)
    for x, y in points:
        lowest[centres >= x] = np.minimum(lowest[centres >= x], y)
    first_row = np.searchsorted(centres, lowest, side="left")
    cells = np.where(np.isfinite(lowest), GRID - first_row, 0).sum()
    return float(cells) / GRID**2


def test_criterion_1_hypervolume_oracle():
    with criterion(1, "hypervolume vs grid oracle") as info:
        start = time.perf_counter()
        pts = [(1, 3), (2, 2), (3, 1)]
        assert hypervolume_2d(pts, (4, 4)) == 6
        assert hv_contribution_2d(pts, (4, 4)).tolist() == [1, 1, 1]
        r = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(200):
            n = int(r.integers(1, 9))
            # coordinates on the oracle lattice so every box edge falls between cell centres
            P = r.integers(0, GRID, size=(n, 2)) / GRID
            total = grid_area(P)
            hv = hypervolume_2d(P, (1.0, 1.0))
            contrib = hv_contribution_2d(P, (1.0, 1.0))
            pairs = [(hv, total)] + [
                (contrib[i], total - grid_area(np.delete(P, i, axis=0))) for i in range(n)
            ]
            for ours, oracle in pairs:
                err = abs(ours - oracle) / oracle if oracle > 0 else abs(ours)
                worst = max(worst, err)
        elapsed = time.perf_counter() - start
        info.append(f"max relative error {worst:.2e}, {elapsed:.2f} s")
        assert worst <= 1e-3
        assert elapsed < 10


# ---------------------------------------------------------------------------
# 2. sorting and fronts
# ---------------------------------------------------------------------------


def test_criterion_2_sorting_and_fronts():
    with criterion(2, "non-dominated sort and front extraction vs brute force") as info:
        start = time.perf_counter()
        r = np.random.default_rng(7)
        for _ in range(200):
            P = r.integers(0, 15, size=(50, 2)).astype(float)
            remaining = set(range(50))
            oracle = []
            while remaining:
                front = {i for i in remaining if not any(dominates(P[j], P[i]) for j in remaining)}
                oracle.append(front)
                remaining -= front
            assert [set(f) for f in non_dominated_sort(P)] == oracle

            # objectives are a function of the mask, as in a real run
            masks = r.integers(1, 64, size=50)
            table = r.integers(0, 15, size=(64, 2)).astype(float)
            bits = ((masks[:, None] >> np.arange(6)) & 1).astype(bool)
            objs = table[masks]
            snap = Snapshot(0, 50, bits, objs, np.zeros(50, dtype=np.int64))
            h = RunHistory(ObjectiveSpec.parse("accuracy", "min"), MoeaConfig(), [snap],
                           np.zeros(1), (1.0, 1.0), 1, 0, 0)
            got = {rec.subset.mask for rec in an.extract_front(h)}
            want = {int(masks[i]) for i in range(50) if not any(dominates(objs[j], objs[i]) for j in range(50))}
            assert got == want and len(an.extract_front(h)) == len(want)
        elapsed = time.perf_counter() - start
        info.append(f"{elapsed:.2f} s")
        assert elapsed < 5


# ---------------------------------------------------------------------------
# 3. numerical kernels
# ---------------------------------------------------------------------------


def test_criterion_3_numerical_kernels():
    with criterion(3, "PCA, OLS, k-means and silhouette kernels") as info:
        r = np.random.default_rng(3)
        pca_err = ols_err = 0.0
        for _ in range(50):
            X = r.normal(size=(20, 6))
            eig = np.sort(np.linalg.eigvalsh(np.cov(X, rowvar=False)))[::-1]
            pca_err = max(pca_err, np.abs(pca_fit(X, 6).explained_variance - eig).max())
            Z = r.normal(size=(20, 3))
            A = np.column_stack([np.ones(20), X])
            beta = np.linalg.solve(A.T @ A, A.T @ Z)
            model = ols_fit(X, Z)
            ols_err = max(
                ols_err,
                np.abs(model.W - beta[1:]).max(),
                np.abs(model.intercept - beta[0]).max(),
            )
        rises = 0
        for seed in range(100):
            X = np.random.default_rng(seed).normal(size=(80, 3))
            trace = np.array(kmeans_fit(X, 1 + seed % 6, seed=seed).inertia_trace)
            rises += int(np.any(np.diff(trace) > 1e-9 * trace[0]))
        sil = silhouette(np.array([0.0, 1.0, 2.0, 3.0]), [0, 0, 1, 1])
        info.append(
            f"PCA err {pca_err:.1e}, OLS err {ols_err:.1e}, k-means rises {rises}/100, "
            f"silhouette {sil!r}"
        )
        assert pca_err <= 1e-6 and ols_err <= 1e-6 and rises == 0
        assert abs(sil - 7 / 15) <= 1e-12


# ---------------------------------------------------------------------------
# 4. objective invariants
# ---------------------------------------------------------------------------


def test_criterion_4_objective_invariants(default_ctx):
    with criterion(4, "objective ranges and PCA-loss monotonicity") as info:
        start = time.perf_counter()
        d = default_ctx.d
        r = np.random.default_rng(4)
        lo = {"silhouette": np.inf, "accuracy": np.inf, "pca": np.inf}
        hi = {"silhouette": -np.inf, "accuracy": -np.inf}
        for _ in range(500):
            s = FeatureSubset.from_indices(d, r.choice(d, int(r.integers(1, d + 1)), replace=False))
            sil = eval_silhouette_objective(s, default_ctx)
            acc = eval_accuracy_objective(s, default_ctx)
            pca = eval_pca_loss_objective(s, default_ctx)
            assert -1.0 <= sil <= 1.0 and -1.0 <= acc <= 0.0 and pca >= 0.0
            lo = {"silhouette": min(lo["silhouette"], sil), "accuracy": min(lo["accuracy"], acc),
                  "pca": min(lo["pca"], pca)}
            hi = {"silhouette": max(hi["silhouette"], sil), "accuracy": max(hi["accuracy"], acc)}
        full = eval_pca_loss_objective(FeatureSubset(np.ones(d, dtype=bool)), default_ctx)
        worst = -np.inf
        for _ in range(200):
            inner = r.choice(d, int(r.integers(1, d)), replace=False)
            extra = r.choice(d, int(r.integers(1, d)), replace=False)
            a = FeatureSubset.from_indices(d, inner)
            b = FeatureSubset.from_indices(d, np.union1d(inner, extra))
            worst = max(worst, eval_pca_loss_objective(b, default_ctx) - eval_pca_loss_objective(a, default_ctx))
        elapsed = time.perf_counter() - start
        info.append(
            f"silhouette in [{lo['silhouette']:.3f}, {hi['silhouette']:.3f}], "
            f"accuracy in [{lo['accuracy']:.3f}, {hi['accuracy']:.3f}], min PCA loss {lo['pca']:.3g}, "
            f"full-subset loss {full:.1e}, worst nested increase {worst:.1e}, {elapsed:.0f} s"
        )
        assert full <= 1e-8
        assert worst <= 1e-9
        assert elapsed < 300


# ---------------------------------------------------------------------------
# 5. elitism under a fixed reference point
# ---------------------------------------------------------------------------


def test_criterion_5_fixed_reference_elitism(default_ctx):
    with criterion(5, "fixed-reference hypervolume never decreases") as info:
        start = time.perf_counter()
        bad = []
        n_runs = 0
        for spec in ALL_SPECS:
            for init in cli.SUITE_INITS:
                for seed in SEEDS:
                    cfg = MoeaConfig(
                        population_size=20,
                        generations=10,
                        init=init,
                        reference_mode=ReferenceMode.FIXED,
                        master_seed=seed,
                    )
                    h = run(spec, default_ctx, cfg)
                    n_runs += 1
                    if np.any(np.diff(h.hv_trace) < 0):
                        bad.append(f"{spec.id} {init.label} seed {seed}")
        elapsed = time.perf_counter() - start
        info.append(f"{n_runs} runs, {len(bad)} with a decrease, {elapsed:.0f} s")
        assert n_runs == 54
        assert not bad, bad
        assert elapsed < 900


# ---------------------------------------------------------------------------
# 6 and 7. directional reproductions
# ---------------------------------------------------------------------------


def scored_front(split, seed, objective):
    ctx = seed_ctx(split, seed)
    history = cached_run(ctx, objective, "min", K1, seed)
    return an.with_test_accuracy(an.extract_front(history), split, ctx.master_seed), ctx


def test_criterion_6_silhouette_collapse(default_split):
    with criterion(6, "silhouette fronts collapse to tiny, less accurate subsets") as info:
        passes = 0
        for seed in SEEDS:
            sil, _ = scored_front(default_split, seed, "silhouette")
            acc, _ = scored_front(default_split, seed, "accuracy")
            median = statistics.median(r.size for r in sil)
            best_sil = max(r.test_accuracy for r in sil)
            best_acc = max(r.test_accuracy for r in acc)
            ok = median <= 3 and best_sil <= best_acc - 0.10
            passes += ok
            info.append(
                f"seed {seed}: median size {median}, best test acc {best_sil:.3f} vs "
                f"accuracy front {best_acc:.3f} ({'ok' if ok else 'miss'})"
            )
        assert passes >= 2


def test_criterion_7_pca_loss_competitive(default_split):
    with criterion(7, "PCA-loss fronts hold compact competitive subsets") as info:
        passes = 0
        for seed in SEEDS:
            pca, _ = scored_front(default_split, seed, "pca-loss")
            acc, _ = scored_front(default_split, seed, "accuracy")
            best_acc = max(r.test_accuracy for r in acc)
            compact = [r for r in pca if r.size <= 15]
            best_compact = max((r.test_accuracy for r in compact), default=float("nan"))
            competitive = bool(compact) and best_compact >= best_acc - 0.05

            clustering = an.cluster_solutions(pca, min(4, len(pca)))
            labelled = an.label_records(pca, clustering)
            comp = an.composition_report(labelled, default_split.dataset, clustering)
            best_cluster = max(comp.mean_test_accuracy, key=lambda c: (comp.mean_test_accuracy[c], c))
            coverage = max(
                an.lineage_coverage(r.subset, default_split.dataset)
                for r in labelled
                if r.cluster_id == best_cluster
            )
            ok = competitive and coverage >= 0.8
            passes += ok
            info.append(
                f"seed {seed}: best <=15-feature test acc {best_compact:.3f} vs {best_acc:.3f}, "
                f"best cluster {best_cluster} covers {round(coverage * 10)}/10 ({'ok' if ok else 'miss'})"
            )
        assert passes >= 2


# ---------------------------------------------------------------------------
# 8. suite determinism
# ---------------------------------------------------------------------------


def test_criterion_8_suite_determinism(tmp_path):
    with criterion(8, "suite comparison.csv is byte-identical, serial and parallel") as info:
        base = cli.ExperimentConfig(master_seed=0)
        start = time.perf_counter()
        assert cli.run_suite(base, tmp_path / "serial", workers=1) == []
        serial = time.perf_counter() - start
        start = time.perf_counter()
        assert cli.run_suite(base, tmp_path / "parallel", workers=2) == []
        parallel = time.perf_counter() - start
        a = (tmp_path / "serial" / cli.COMPARISON_FILE).read_bytes()
        b = (tmp_path / "parallel" / cli.COMPARISON_FILE).read_bytes()
        runs = [p for p in (tmp_path / "serial").iterdir() if (p / "history.csv").is_file()]
        info.append(
            f"{len(runs)} runs, serial {serial / 60:.1f} min, 2 workers {parallel / 60:.1f} min "
            f"on {os.cpu_count()} CPU(s), identical={a == b}"
        )
        assert len(runs) == 18
        assert a == b and len(a) > 0
        # a single serial pass bounds what a 4-core machine needs
        assert serial <= 3600


# ---------------------------------------------------------------------------
# 9. dataset statistics
# ---------------------------------------------------------------------------


def test_criterion_9_dataset_statistics(default_data):
    with criterion(9, "dataset statistical suite at the default seed") as info:
        X, y = default_data.X, default_data.y
        noise_corr = max(
            abs(np.corrcoef(X[:, j], (y == c).astype(float))[0, 1])
            for j in default_data.indices_of(FeatureKind.GAUSSIAN_NOISE)
            for c in range(default_data.config.n_classes)
        )
        r2 = []
        for j in default_data.indices_of(FeatureKind.LINEAR_REDUNDANT):
            parents = list(default_data.lineage_by_feature[int(j)].parents)
            A = np.column_stack([np.ones(len(X)), X[:, parents]])
            coef, *_ = np.linalg.lstsq(A, X[:, j], rcond=None)
            resid = X[:, j] - A @ coef
            r2.append(1 - resid.var() / X[:, j].var())
        monotone = True
        for parent in default_data.informative_indices:
            feats = sorted(
                (lin.noise_std, lin.feature)
                for lin in default_data.lineages
                if lin.transform == "sweep" and lin.parents == (int(parent),)
            )
            corr = [abs(np.corrcoef(X[:, f], X[:, parent])[0, 1]) for _, f in feats]
            monotone &= bool(np.all(np.diff(corr) < 0))
        streams = [np.random.default_rng(s) for s in np.random.SeedSequence(default_data.config.master_seed).spawn(6)]
        block, latent = ds.make_structured_noise(
            default_data.n, default_data.config.n_structured_noise,
            default_data.config.structured_noise_groups, streams[4],
        )
        assert np.array_equal(block, X[:, default_data.indices_of(FeatureKind.STRUCTURED_NOISE)])
        ari = adjusted_rand_score(latent, y)
        info.append(
            f"max |noise-class corr| {noise_corr:.3f}, min linear R2 {min(r2):.4f}, "
            f"sweep monotone {monotone}, structured-noise ARI {ari:+.4f}"
        )
        assert noise_corr < 0.1
        assert min(r2) >= 0.99
        assert monotone
        assert abs(ari) < 0.05
