"""Steady-state SMS-EMOA over feature-subset bit strings.

One generation is ``population_size`` steady-state steps. Each step breeds a
single offspring, evaluates it and then discards the member of the worst
non-dominated front that contributes least hypervolume.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..errors import BudgetExceededError, InvalidConfigError, MissingRunError, SchemaMismatchError
from ..objectives import (
    Evaluation,
    EvaluationContext,
    Evaluator,
    FeatureSubset,
    ObjectiveSpec,
    SizeDirection,
)
from ..seeding import derive_rng
from .init import InitStrategy
from .pareto import hv_contribution_2d, hypervolume_2d, non_dominated_sort
from .variation import make_offspring

HISTORY_FILE = "history.csv"
HV_TRACE_FILE = "hv_trace.csv"
MANIFEST_FILE = "manifest.json"


class ReferenceMode(str, enum.Enum):
    DYNAMIC = "dynamic"
    FIXED = "fixed"


@dataclass(frozen=True)
class MoeaConfig:
    population_size: int = 50
    generations: int = 50
    init: InitStrategy = field(default_factory=InitStrategy.binary_random)
    crossover_probability: float = 0.9
    mutation_rate: float | None = None  # None -> 1/d
    reference_mode: ReferenceMode = ReferenceMode.DYNAMIC
    reference_point: tuple[float, float] | None = None
    master_seed: int = 0

    def validate(self, d: int) -> None:
        if self.population_size < 2:
            raise InvalidConfigError("population_size must be at least 2")
        if self.generations < 0:
            raise InvalidConfigError("generations must be non-negative")
        if not 0.0 <= self.crossover_probability <= 1.0:
            raise InvalidConfigError("crossover_probability must lie in [0, 1]")
        if self.mutation_rate is not None and not 0.0 <= self.mutation_rate <= 1.0:
            raise InvalidConfigError("mutation_rate must lie in [0, 1]")
        if self.reference_mode is ReferenceMode.FIXED and self.reference_point is not None:
            if len(self.reference_point) != 2:
                raise InvalidConfigError("reference point needs two coordinates")
        self.init.validate(d)

    def to_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "generations": self.generations,
            "init": self.init.to_dict(),
            "crossover_probability": self.crossover_probability,
            "mutation_rate": self.mutation_rate,
            "reference_mode": self.reference_mode.value,
            "reference_point": None if self.reference_point is None else list(self.reference_point),
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MoeaConfig":
        ref = data.get("reference_point")
        return cls(
            population_size=int(data.get("population_size", 50)),
            generations=int(data.get("generations", 50)),
            init=InitStrategy.from_dict(data.get("init", {"kind": "random"})),
            crossover_probability=float(data.get("crossover_probability", 0.9)),
            mutation_rate=None if data.get("mutation_rate") is None else float(data["mutation_rate"]),
            reference_mode=ReferenceMode(data.get("reference_mode", "dynamic")),
            reference_point=None if ref is None else (float(ref[0]), float(ref[1])),
            master_seed=int(data.get("master_seed", 0)),
        )


def default_reference_point(spec: ObjectiveSpec, ctx: EvaluationContext) -> tuple[float, float]:
    """A point strictly worse than every feasible objective vector."""
    if spec.evaluation is Evaluation.SILHOUETTE:
        f1 = 1.1
    elif spec.evaluation is Evaluation.ACCURACY:
        f1 = 0.1
    else:
        # intercept-only regression already attains mean ||Z_i||^2 (Z is centred)
        Z = ctx.pca_target.Z
        f1 = 1.1 * float((Z**2).sum() / Z.shape[0]) + 1e-9
    f2 = ctx.d + 1.0 if spec.size_direction is SizeDirection.MINIMISE else 0.0
    return (f1, f2)


def rank_and_contribution(objs: np.ndarray, mode: ReferenceMode, ref=None):
    """Front rank and within-front hypervolume contribution of every point.

    In dynamic mode objectives are min-max normalised over ``objs`` and each
    front is measured against its own worst corner shifted by one.
    """
    objs = np.asarray(objs, dtype=float)
    fronts = non_dominated_sort(objs)
    ranks = np.empty(objs.shape[0], dtype=np.int64)
    contrib = np.zeros(objs.shape[0])
    if mode is ReferenceMode.DYNAMIC:
        lo, hi = objs.min(axis=0), objs.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        pts = (objs - lo) / span
    else:
        pts = objs
    for r, front in enumerate(fronts):
        ranks[front] = r
        front_pts = pts[front]
        front_ref = front_pts.max(axis=0) + 1.0 if mode is ReferenceMode.DYNAMIC else ref
        contrib[front] = hv_contribution_2d(front_pts, front_ref)
    return ranks, contrib


def survival_select(
    objs: np.ndarray,
    rng: np.random.Generator,
    mode: ReferenceMode = ReferenceMode.DYNAMIC,
    ref=None,
) -> int:
    """Index of the member to discard from ``objs`` (population plus offspring)."""
    ranks, contrib = rank_and_contribution(objs, mode, ref)
    worst = np.flatnonzero(ranks == ranks.max())
    c = contrib[worst]
    candidates = worst[c == c.min()]
    if candidates.size == 1:
        return int(candidates[0])
    return int(candidates[rng.integers(candidates.size)])


@dataclass(frozen=True, eq=False)
class Snapshot:
    generation: int
    evaluations: int
    bits: np.ndarray  # pop x d bool
    objectives: np.ndarray  # pop x 2
    births: np.ndarray

    @property
    def subsets(self) -> list[FeatureSubset]:
        return [FeatureSubset(b) for b in self.bits]


@dataclass(eq=False)
class RunHistory:
    spec: ObjectiveSpec
    config: MoeaConfig
    snapshots: list[Snapshot]
    hv_trace: np.ndarray
    trace_reference: tuple[float, float]
    n_evaluations: int
    cache_hits: int
    context_seed: int
    dataset_fingerprint: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]

    @property
    def d(self) -> int:
        return self.snapshots[0].bits.shape[1]

    def manifest(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "config": self.config.to_dict(),
            "seeds": {"run_seed": self.config.master_seed, "context_seed": self.context_seed},
            "dataset_fingerprint": self.dataset_fingerprint,
            "d": self.d,
            "trace_reference": list(self.trace_reference),
            "n_evaluations": self.n_evaluations,
            "cache_hits": self.cache_hits,
            **self.extra,
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        with (path / HISTORY_FILE).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(
                ["generation", "evaluations", "member_index", "bitmask_hex", "f1", "f2", "subset_size"]
            )
            for snap in self.snapshots:
                for i, sub in enumerate(snap.subsets):
                    f1, f2 = snap.objectives[i]
                    w.writerow(
                        [snap.generation, snap.evaluations, i, sub.hex, repr(float(f1)),
                         repr(float(f2)), sub.cardinality]
                    )
        with (path / HV_TRACE_FILE).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "hypervolume"])
            for step, hv in enumerate(self.hv_trace):
                w.writerow([step, repr(float(hv))])
        (path / MANIFEST_FILE).write_text(json.dumps(self.manifest(), indent=1, sort_keys=True))
        return path

    @classmethod
    def load(cls, path: str | Path) -> "RunHistory":
        path = Path(path)
        if not (path / MANIFEST_FILE).is_file() or not (path / HISTORY_FILE).is_file():
            raise MissingRunError(f"{path} is not a run directory")
        manifest = json.loads((path / MANIFEST_FILE).read_text())
        d = int(manifest["d"])
        rows: dict[int, list] = {}
        evals: dict[int, int] = {}
        with (path / HISTORY_FILE).open() as fh:
            for row in csv.DictReader(fh):
                g = int(row["generation"])
                evals[g] = int(row["evaluations"])
                rows.setdefault(g, []).append(
                    (int(row["member_index"]), row["bitmask_hex"], float(row["f1"]), float(row["f2"]))
                )
        snapshots = []
        for g in sorted(rows):
            members = sorted(rows[g])
            bits = np.array([FeatureSubset.from_hex(d, m[1]).bits for m in members])
            objs = np.array([(m[2], m[3]) for m in members])
            snapshots.append(Snapshot(g, evals[g], bits, objs, np.zeros(len(members), dtype=np.int64)))
        if not snapshots:
            raise SchemaMismatchError(f"{path / HISTORY_FILE} holds no members")
        trace = []
        if (path / HV_TRACE_FILE).is_file():
            with (path / HV_TRACE_FILE).open() as fh:
                trace = [float(r["hypervolume"]) for r in csv.DictReader(fh)]
        known = {"spec", "config", "seeds", "dataset_fingerprint", "d", "trace_reference",
                 "n_evaluations", "cache_hits"}
        return cls(
            spec=ObjectiveSpec.from_dict(manifest["spec"]),
            config=MoeaConfig.from_dict(manifest["config"]),
            snapshots=snapshots,
            hv_trace=np.asarray(trace),
            trace_reference=tuple(manifest["trace_reference"]),
            n_evaluations=int(manifest["n_evaluations"]),
            cache_hits=int(manifest["cache_hits"]),
            context_seed=int(manifest["seeds"]["context_seed"]),
            dataset_fingerprint=manifest.get("dataset_fingerprint", ""),
            extra={k: v for k, v in manifest.items() if k not in known},
        )


def run(
    spec: ObjectiveSpec,
    ctx: EvaluationContext,
    config: MoeaConfig,
    evaluator: Evaluator | None = None,
    dataset_fingerprint: str = "",
    progress: Callable[[int, int], None] | None = None,
) -> RunHistory:
    """Run SMS-EMOA and record every generation.

    ``progress`` is called as ``progress(generation, evaluations)`` after
    each generation.
    """
    d = ctx.d
    config.validate(d)
    pop = config.population_size
    budget = pop * (config.generations + 1)
    evaluator = evaluator or Evaluator(spec, ctx)
    start_count = evaluator.n_evaluations
    start_hits = evaluator.cache_hits

    mode = config.reference_mode
    if mode is ReferenceMode.FIXED:
        ref = config.reference_point or default_reference_point(spec, ctx)
    else:
        ref = None
    trace_ref = ref if ref is not None else default_reference_point(spec, ctx)

    rng = derive_rng(config.master_seed, "moea")
    bits = config.init.sample(pop, d, derive_rng(config.master_seed, "init"))
    objs = np.array([tuple(evaluator(FeatureSubset(b))) for b in bits])
    births = np.zeros(pop, dtype=np.int64)

    def used() -> int:
        n = evaluator.n_evaluations - start_count
        if n > budget:
            raise BudgetExceededError(f"{n} evaluations exceed the budget of {budget}")
        return n

    trace = [hypervolume_2d(objs, trace_ref)]
    snapshots = [Snapshot(0, used(), bits.copy(), objs.copy(), births.copy())]
    for gen in range(1, config.generations + 1):
        for _ in range(pop):
            ranks, contrib = rank_and_contribution(objs, mode, ref)
            child = make_offspring(
                bits, ranks, contrib, rng, config.crossover_probability, config.mutation_rate
            )
            value = evaluator(FeatureSubset(child))
            bits = np.vstack([bits, child[None, :]])
            objs = np.vstack([objs, np.array([tuple(value)])])
            births = np.append(births, gen)
            drop = survival_select(objs, rng, mode, ref)
            keep = np.arange(pop + 1) != drop
            bits, objs, births = bits[keep], objs[keep], births[keep]
            trace.append(hypervolume_2d(objs, trace_ref))
            used()
        snapshots.append(Snapshot(gen, used(), bits.copy(), objs.copy(), births.copy()))
        if progress is not None:
            progress(gen, used())

    return RunHistory(
        spec=spec,
        config=config,
        snapshots=snapshots,
        hv_trace=np.asarray(trace),
        trace_reference=(float(trace_ref[0]), float(trace_ref[1])),
        n_evaluations=used(),
        cache_hits=evaluator.cache_hits - start_hits,
        context_seed=ctx.master_seed,
        dataset_fingerprint=dataset_fingerprint,
    )
