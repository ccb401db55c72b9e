"""Command-line entry point: ``generate``, ``run``, ``suite`` and ``analyze``.

Settings resolve as: command-line flags, then the JSON ``--config`` file,
then built-in defaults. ``MOFS_OUTPUT_ROOT`` sets the default output root.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__, analysis
from . import dataset as ds
from .errors import (
    InvalidConfigError,
    InvalidFlagCombinationError,
    MissingDatasetError,
    MofsError,
    SchemaMismatchError,
)
from .moea import InitKind, InitStrategy, MoeaConfig, ReferenceMode, RunHistory, run
from .objectives import (
    ALL_SPECS,
    Evaluation,
    EvaluationContext,
    ObjectiveSpec,
    SizeDirection,
)
from .seeding import derive_seed

log = logging.getLogger("mofs")

OUTPUT_ROOT_ENV = "MOFS_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "mofs-output"
EXPERIMENT_KEY = "experiment"
COMPARISON_FILE = "comparison.csv"
FAILURES_FILE = "failures.json"
SUITE_MANIFEST = "suite.json"
SUITE_INITS = (
    InitStrategy.binary_random(0.5),
    InitStrategy.segmented((0.25, 0.5, 0.75)),
    InitStrategy.fixed_cardinality(1),
)


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV) or DEFAULT_OUTPUT_ROOT)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one optimisation run."""

    spec: ObjectiveSpec = ObjectiveSpec(Evaluation.ACCURACY, SizeDirection.MINIMISE)
    moea: MoeaConfig = field(default_factory=MoeaConfig)
    dataset: str | None = None
    generator: ds.GeneratorConfig = field(default_factory=ds.GeneratorConfig)
    split_seed: int = 0
    test_fraction: float = ds.DEFAULT_TEST_FRACTION
    output: str | None = None
    master_seed: int = 0

    def validate(self, d: int | None = None) -> None:
        if self.dataset is None:
            self.generator.validate()
            d = self.generator.n_features if d is None else d
        if not 0.0 < self.test_fraction < 1.0:
            raise InvalidConfigError("test_fraction must lie in (0, 1)")
        if d is not None:
            self.moea.validate(d)

    def to_dict(self) -> dict:
        return {
            "objective": self.spec.evaluation.value,
            "size": self.spec.size_direction.value,
            **self.moea.to_dict(),
            "dataset": self.dataset,
            "generator": self.generator.to_dict(),
            "split_seed": self.split_seed,
            "test_fraction": self.test_fraction,
            "output": self.output,
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {
            "objective", "size", "dataset", "generator", "split_seed", "test_fraction",
            "output", "master_seed",
        } | {f.name for f in dataclasses.fields(MoeaConfig)}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            spec = ObjectiveSpec.parse(data.get("objective", "accuracy"), data.get("size", "min"))
            moea = MoeaConfig.from_dict(data)
        except (ValueError, KeyError, TypeError) as exc:
            raise InvalidConfigError(str(exc)) from exc
        return cls(
            spec=spec,
            moea=moea,
            dataset=data.get("dataset"),
            generator=ds.GeneratorConfig.from_dict(data.get("generator", {})),
            split_seed=int(data.get("split_seed", 0)),
            test_fraction=float(data.get("test_fraction", ds.DEFAULT_TEST_FRACTION)),
            output=data.get("output"),
            master_seed=int(data.get("master_seed", 0)),
        )


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def read_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise InvalidConfigError(f"config file {p} not found")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidConfigError("config file must hold a JSON object")
    return data


def load_dataset(path: str | Path) -> tuple[ds.SyntheticDataset, ds.SplitDataset]:
    p = Path(path)
    if not (p / ds.DATA_FILE).is_file():
        raise MissingDatasetError(f"no dataset at {p}")
    return ds.load(p)


def resolve_dataset(config: ExperimentConfig) -> tuple[ds.SyntheticDataset, ds.SplitDataset]:
    """Load the configured dataset, or generate it inline from the generator config."""
    if config.dataset is not None:
        return load_dataset(config.dataset)
    data = ds.generate(config.generator)
    return data, ds.split(data, config.test_fraction, config.split_seed)


def _progress_printer(label: str):
    def report(generation: int, evaluations: int) -> None:
        # one write per line keeps output from parallel workers readable
        sys.stderr.write(f"[{label}] generation {generation} evaluations {evaluations}\n")
        sys.stderr.flush()

    return report


def execute_run(
    config: ExperimentConfig,
    out_dir: str | Path,
    split_data: ds.SplitDataset | None = None,
    verbose: bool = False,
) -> RunHistory:
    """Run one formulation and write its history, trace and manifest."""
    if split_data is None:
        _, split_data = resolve_dataset(config)
    config.validate(split_data.dataset.d)
    ctx = EvaluationContext.from_split(split_data, master_seed=config.master_seed)
    label = f"{config.spec.id} {config.moea.init.label}"
    history = run(
        config.spec,
        ctx,
        config.moea,
        dataset_fingerprint=ds.fingerprint(split_data.dataset, split_data),
        progress=_progress_printer(label) if verbose else None,
    )
    history.extra[EXPERIMENT_KEY] = config.to_dict()
    history.save(out_dir)
    return history


def experiment_from_manifest(history: RunHistory) -> ExperimentConfig:
    data = history.extra.get(EXPERIMENT_KEY)
    if data is None:
        raise SchemaMismatchError("run manifest lacks the experiment section")
    return ExperimentConfig.from_dict(data)


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

_GENERATOR_FLAGS = {
    "n_samples": int,
    "n_classes": int,
    "n_informative": int,
    "n_linear_redundant": int,
    "n_nonlinear_redundant": int,
    "n_gaussian_noise": int,
    "n_structured_noise": int,
    "n_sweep": int,
    "class_separation": float,
    "label_flip_fraction": float,
    "redundant_noise_std": float,
    "linear_parents": int,
    "structured_noise_groups": int,
}


def cmd_generate(args: argparse.Namespace) -> int:
    file_cfg = read_config_file(args.config)
    gen = dict(file_cfg.get("generator", {}))
    for name in _GENERATOR_FLAGS:
        value = getattr(args, name)
        if value is not None:
            gen[name] = value
    if args.sweep_noise_levels is not None:
        gen["sweep_noise_levels"] = args.sweep_noise_levels
    if args.seed is not None:
        gen["master_seed"] = args.seed
    config = ds.GeneratorConfig.from_dict(gen)
    config.validate()
    test_fraction = _pick(args.test_fraction, file_cfg, "test_fraction", ds.DEFAULT_TEST_FRACTION)
    split_seed = _pick(args.split_seed, file_cfg, "split_seed", 0)
    out = Path(args.out or file_cfg.get("output") or output_root() / "dataset")

    data = ds.generate(config)
    split_data = ds.split(data, float(test_fraction), int(split_seed))
    ds.save(data, split_data, out)
    print(ds.fingerprint(data, split_data))
    log.info("dataset %dx%d written to %s", data.n, data.d, out)
    return 0


def _pick(flag, file_cfg: dict, key: str, default):
    if flag is not None:
        return flag
    return file_cfg.get(key, default)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def build_run_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge flags over the config file and check flag combinations."""
    data = read_config_file(args.config)
    base = ExperimentConfig.from_dict(data)

    init = base.moea.init
    init_kind = InitKind(args.init) if args.init is not None else init.kind
    if args.init_k is not None and init_kind is not InitKind.FIXED:
        raise InvalidFlagCombinationError("--init-k applies only to --init fixed")
    if args.init_p is not None and init_kind is InitKind.FIXED:
        raise InvalidFlagCombinationError("--init-p does not apply to --init fixed")
    if init_kind is InitKind.RANDOM and args.init_p is not None and len(args.init_p) != 1:
        raise InvalidFlagCombinationError("--init random takes a single --init-p value")

    if init_kind is InitKind.FIXED:
        if args.init_k is not None:
            init = InitStrategy.fixed_cardinality(args.init_k)
        elif init.kind is InitKind.FIXED and "k" in data.get("init", {}):
            pass
        else:
            raise InvalidFlagCombinationError("--init fixed requires --init-k")
    elif init_kind is InitKind.RANDOM:
        if args.init_p is not None:
            init = InitStrategy.binary_random(args.init_p[0])
        elif init.kind is not InitKind.RANDOM:
            init = InitStrategy.binary_random()
    else:
        if args.init_p is not None:
            init = InitStrategy.segmented(args.init_p)
        elif init.kind is not InitKind.SEGMENTED:
            init = InitStrategy.segmented()

    ref_mode = ReferenceMode(args.ref_mode) if args.ref_mode is not None else base.moea.reference_mode
    ref_point = tuple(args.ref_point) if args.ref_point is not None else base.moea.reference_point
    if args.ref_point is not None and ref_mode is not ReferenceMode.FIXED:
        raise InvalidFlagCombinationError("--ref-point requires --ref-mode fixed")

    seed = args.seed if args.seed is not None else base.master_seed
    moea = dataclasses.replace(
        base.moea,
        population_size=args.pop if args.pop is not None else base.moea.population_size,
        generations=args.gens if args.gens is not None else base.moea.generations,
        init=init,
        reference_mode=ref_mode,
        reference_point=ref_point,
        master_seed=seed,
    )
    spec = ObjectiveSpec(
        Evaluation(args.objective) if args.objective is not None else base.spec.evaluation,
        SizeDirection(args.size) if args.size is not None else base.spec.size_direction,
    )
    dataset = args.dataset if args.dataset is not None else base.dataset
    return dataclasses.replace(
        base,
        spec=spec,
        moea=moea,
        dataset=None if dataset is None else str(dataset),
        output=args.out if args.out is not None else base.output,
        master_seed=seed,
    )


def run_dir_name(spec: ObjectiveSpec, init: InitStrategy) -> str:
    return f"{spec.evaluation.value}_{spec.size_direction.value}_{init.kind.value}"


def cmd_run(args: argparse.Namespace) -> int:
    config = build_run_config(args)
    if config.dataset is not None:
        _, split_data = load_dataset(config.dataset)
    else:
        _, split_data = resolve_dataset(config)
    out = Path(
        config.output
        or output_root() / "runs" / f"{run_dir_name(config.spec, config.moea.init)}_s{config.master_seed}"
    )
    history = execute_run(config, out, split_data, verbose=args.verbose)
    print(out)
    log.info(
        "%s: %d evaluations, %d cache hits, final hypervolume %r",
        config.spec.id,
        history.n_evaluations,
        history.cache_hits,
        float(history.hv_trace[-1]),
    )
    return 0


# ---------------------------------------------------------------------------
# suite
# ---------------------------------------------------------------------------


def suite_grid(base: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """The 6 formulations x 3 initialisations, each with its own run seed."""
    grid = []
    for spec in ALL_SPECS:
        for init in SUITE_INITS:
            run_seed = derive_seed(
                base.master_seed, spec.evaluation.value, spec.size_direction.value, init.kind.value
            )
            moea = dataclasses.replace(base.moea, init=init, master_seed=run_seed)
            grid.append((run_dir_name(spec, init), dataclasses.replace(base, spec=spec, moea=moea)))
    return grid


def _suite_task(task: tuple[str, ExperimentConfig, str, bool]) -> tuple[str, dict | None]:
    name, config, out_dir, verbose = task
    try:
        execute_run(config, out_dir, verbose=verbose)
        return name, None
    except Exception as exc:  # noqa: BLE001 - a failed run must not stop the suite
        return name, {
            "run": name,
            "objective": config.spec.evaluation.value,
            "size": config.spec.size_direction.value,
            "init": config.moea.init.to_dict(),
            "error": type(exc).__name__,
            "message": str(exc),
            "traceback": traceback.format_exc(),
        }


def run_suite(
    base: ExperimentConfig, out_dir: str | Path, workers: int = 1, verbose: bool = False
) -> list[dict]:
    """Run the full grid, write ``comparison.csv`` and return the failures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if base.dataset is None:
        # materialise the inline dataset once so every run and analysis shares it
        data, split_data = resolve_dataset(base)
        ds.save(data, split_data, out_dir / "dataset")
        base = dataclasses.replace(base, dataset=str((out_dir / "dataset").resolve()))
    else:
        data, split_data = load_dataset(base.dataset)
        base = dataclasses.replace(base, dataset=str(Path(base.dataset).resolve()))
    base.validate(data.d)

    grid = suite_grid(base)
    tasks = [(name, cfg, str(out_dir / name), verbose) for name, cfg in grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(_suite_task, tasks))
    else:
        results = dict(_suite_task(t) for t in tasks)

    failures = [results[name] for name, _ in grid if results[name] is not None]
    histories = [RunHistory.load(out_dir / name) for name, _ in grid if results[name] is None]
    rows = analysis.cross_formulation_table(histories, split_data) if histories else []
    analysis.write_comparison_csv(out_dir / COMPARISON_FILE, rows)
    (out_dir / FAILURES_FILE).write_text(json.dumps(failures, indent=1, sort_keys=True))
    manifest = {
        "base": base.to_dict(),
        "runs": [
            {"run": name, "run_seed": cfg.moea.master_seed, "ok": results[name] is None}
            for name, cfg in grid
        ],
        "dataset_fingerprint": ds.fingerprint(data, split_data),
    }
    (out_dir / SUITE_MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True))
    for failure in failures:
        log.error("run %s failed: %s: %s", failure["run"], failure["error"], failure["message"])
    return failures


def cmd_suite(args: argparse.Namespace) -> int:
    data = read_config_file(args.config)
    base = ExperimentConfig.from_dict(data)
    seed = args.seed if args.seed is not None else base.master_seed
    moea = dataclasses.replace(
        base.moea,
        population_size=args.pop if args.pop is not None else base.moea.population_size,
        generations=args.gens if args.gens is not None else base.moea.generations,
    )
    if args.ref_mode is not None:
        moea = dataclasses.replace(moea, reference_mode=ReferenceMode(args.ref_mode))
    base = dataclasses.replace(
        base,
        moea=moea,
        dataset=args.dataset if args.dataset is not None else base.dataset,
        master_seed=seed,
    )
    out = Path(args.out or base.output or output_root() / "suite")
    if args.workers < 1:
        raise InvalidConfigError("--workers must be at least 1")
    failures = run_suite(base, out, workers=args.workers, verbose=args.verbose)
    print(out)
    if failures:
        sys.stderr.write(f"{len(failures)} of 18 runs failed; see {out / FAILURES_FILE}\n")
        return 1
    return 0


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def cmd_analyze(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    history = RunHistory.load(run_dir)
    config = experiment_from_manifest(history)
    if args.dataset is not None:
        _, split_data = load_dataset(args.dataset)
    else:
        _, split_data = resolve_dataset(config)
    fp = ds.fingerprint(split_data.dataset, split_data)
    if history.dataset_fingerprint and fp != history.dataset_fingerprint:
        raise SchemaMismatchError("dataset does not match the one recorded in the run manifest")
    if args.clusters < 1:
        raise InvalidConfigError("--clusters must be at least 1")
    ctx = EvaluationContext.from_split(split_data, master_seed=history.context_seed)
    out = Path(args.out or run_dir / "analysis")
    result = analysis.analyze(history, split_data, ctx, out, n_clusters=args.clusters)
    for warning in result.warnings:
        sys.stderr.write(f"warning: {warning}\n")
    print(out)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_run_flags(p: argparse.ArgumentParser, single: bool) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--dataset", help="dataset directory (default: generate inline)")
    p.add_argument("--out", help=f"output directory (default: under ${OUTPUT_ROOT_ENV} or ./{DEFAULT_OUTPUT_ROOT})")
    p.add_argument("--seed", type=int, help="master seed (default: 0)")
    p.add_argument("--pop", type=int, help="population size (default: 50)")
    p.add_argument("--gens", type=int, help="generations (default: 50)")
    p.add_argument(
        "--ref-mode",
        choices=[m.value for m in ReferenceMode],
        help="hypervolume reference for survival (default: dynamic)",
    )
    p.add_argument("-v", "--verbose", action="store_true", help="print progress per generation")
    if single:
        p.add_argument("--objective", choices=[e.value for e in Evaluation], help="evaluation objective f1 (default: accuracy)")
        p.add_argument("--size", choices=[s.value for s in SizeDirection], help="subset-size direction f2 (default: min)")
        p.add_argument("--init", choices=[k.value for k in InitKind], help="initialisation (default: random)")
        p.add_argument("--init-p", type=float, nargs="+", help="selection probability; several values for segmented (default: 0.5, or 0.25 0.5 0.75)")
        p.add_argument("--init-k", type=int, help="cardinality for --init fixed (required with it)")
        p.add_argument("--ref-point", type=float, nargs=2, metavar=("F1", "F2"), help="survival reference point for --ref-mode fixed (default: objective bound)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mofs",
        description="Multiobjective feature selection experiments on a synthetic taxonomy dataset.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING", help="logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate and save a synthetic dataset")
    g.add_argument("--config", help="JSON config file with a 'generator' section")
    g.add_argument("--out", help="dataset directory (default: <output root>/dataset)")
    g.add_argument("--seed", type=int, help=f"generator master seed (default: {ds.DEFAULT_MASTER_SEED})")
    defaults = ds.GeneratorConfig()
    for name, kind in _GENERATOR_FLAGS.items():
        g.add_argument(
            "--" + name.replace("_", "-"), type=kind, help=f"default: {getattr(defaults, name)}"
        )
    g.add_argument(
        "--sweep-noise-levels", type=float, nargs="+",
        help=f"default: {' '.join(f'{s:g}' for s in defaults.sweep_noise_levels)}",
    )
    g.add_argument("--test-fraction", type=float, help=f"default: {ds.DEFAULT_TEST_FRACTION}")
    g.add_argument("--split-seed", type=int, help="default: 0")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run one formulation")
    _add_run_flags(r, single=True)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("suite", help="run all 6 formulations x 3 initialisations")
    _add_run_flags(s, single=False)
    s.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    s.set_defaults(func=cmd_suite)

    a = sub.add_parser("analyze", help="write front, composition, linkage and ground-truth reports")
    a.add_argument("run", help="run directory")
    a.add_argument("--dataset", help="dataset directory (default: as recorded in the manifest)")
    a.add_argument("--clusters", type=int, default=4, help="number of solution groups")
    a.add_argument("--out", help="report directory (default: <run>/analysis)")
    a.set_defaults(func=cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MofsError, ValueError, OSError) as exc:
        sys.stderr.write(f"mofs {args.command}: {type(exc).__name__}: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
