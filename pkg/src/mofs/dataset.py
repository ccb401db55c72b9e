"""Synthetic classification dataset with a known feature taxonomy.

Feature blocks are laid out contiguously in this order::

    Informative | LinearRedundant | NonLinearRedundant | GaussianNoise
    | StructuredNoise | Sweep

With the default configuration this gives ``feat_1..feat_10`` informative,
``feat_11..15`` linear redundant, ``feat_16..20`` non-linear redundant,
``feat_21..25`` Gaussian noise, ``feat_26..30`` structured noise and
``feat_31..85`` sweep features. Derived features (redundant and sweep) carry a
:class:`Lineage` naming their informative parents. All indices stored in
memory and in metadata files are 0-based column positions.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateSplitError,
    InvalidConfigError,
    InvalidGroupsError,
    SchemaMismatchError,
)

DATA_FILE = "data.csv"
META_FILE = "metadata.json"
DEFAULT_MASTER_SEED = 20240521
DEFAULT_TEST_FRACTION = 0.3

NONLINEAR_TRANSFORMS = ("square", "sine", "tanh", "product", "abs")


class FeatureKind(str, enum.Enum):
    INFORMATIVE = "Informative"
    LINEAR_REDUNDANT = "LinearRedundant"
    NONLINEAR_REDUNDANT = "NonLinearRedundant"
    GAUSSIAN_NOISE = "GaussianNoise"
    STRUCTURED_NOISE = "StructuredNoise"
    SWEEP = "Sweep"


BLOCK_ORDER = tuple(FeatureKind)
DERIVED_KINDS = frozenset(
    {FeatureKind.LINEAR_REDUNDANT, FeatureKind.NONLINEAR_REDUNDANT, FeatureKind.SWEEP}
)


@dataclass(frozen=True)
class Lineage:
    """Provenance of one derived feature.

    ``transform`` is ``"linear"`` for linear-redundant features, one of
    :data:`NONLINEAR_TRANSFORMS` for non-linear ones and ``"sweep"`` for
    sweep features. ``weights`` is only set for linear combinations.
    """

    feature: int
    parents: tuple[int, ...]
    transform: str
    noise_std: float
    weights: tuple[float, ...] | None = None

    def to_dict(self) -> dict:
        out = {
            "feature": self.feature,
            "parents": list(self.parents),
            "transform": self.transform,
            "noise_std": self.noise_std,
        }
        if self.weights is not None:
            out["weights"] = list(self.weights)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Lineage":
        weights = data.get("weights")
        return cls(
            feature=int(data["feature"]),
            parents=tuple(int(p) for p in data["parents"]),
            transform=str(data["transform"]),
            noise_std=float(data["noise_std"]),
            weights=None if weights is None else tuple(float(w) for w in weights),
        )


@dataclass(frozen=True)
class GeneratorConfig:
    n_samples: int = 1000
    n_classes: int = 3
    n_informative: int = 10
    n_linear_redundant: int = 5
    n_nonlinear_redundant: int = 5
    n_gaussian_noise: int = 5
    n_structured_noise: int = 5
    n_sweep: int = 55
    class_separation: float = 1.0
    label_flip_fraction: float = 0.05
    redundant_noise_std: float = 0.05
    linear_parents: int = 3
    sweep_noise_levels: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
    structured_noise_groups: int = 4
    master_seed: int = DEFAULT_MASTER_SEED

    @property
    def block_sizes(self) -> dict[FeatureKind, int]:
        return {
            FeatureKind.INFORMATIVE: self.n_informative,
            FeatureKind.LINEAR_REDUNDANT: self.n_linear_redundant,
            FeatureKind.NONLINEAR_REDUNDANT: self.n_nonlinear_redundant,
            FeatureKind.GAUSSIAN_NOISE: self.n_gaussian_noise,
            FeatureKind.STRUCTURED_NOISE: self.n_structured_noise,
            FeatureKind.SWEEP: self.n_sweep,
        }

    @property
    def n_features(self) -> int:
        return sum(self.block_sizes.values())

    def validate(self) -> None:
        """Raise :class:`InvalidConfigError` if the configuration is unusable."""
        if self.n_samples < 1:
            raise InvalidConfigError(f"n_samples must be positive, got {self.n_samples}")
        if self.n_classes < 2:
            raise InvalidConfigError(f"n_classes must be >= 2, got {self.n_classes}")
        if self.n_samples < self.n_classes:
            raise InvalidConfigError("n_samples must be at least n_classes")
        for kind, count in self.block_sizes.items():
            if count < 0:
                raise InvalidConfigError(f"negative feature count for {kind.value}")
        if self.n_informative < 1:
            raise InvalidConfigError("at least one informative feature is required")
        if self.n_classes > 2**self.n_informative:
            raise InvalidConfigError("too many classes for the informative hypercube")
        if not 0.0 <= self.label_flip_fraction < 0.5:
            raise InvalidConfigError(
                f"label_flip_fraction must lie in [0, 0.5), got {self.label_flip_fraction}"
            )
        if not self.class_separation > 0:
            raise InvalidConfigError("class_separation must be positive")
        if not self.redundant_noise_std > 0:
            raise InvalidConfigError("redundant_noise_std must be positive")
        if self.n_linear_redundant and not 1 <= self.linear_parents <= self.n_informative:
            raise InvalidConfigError("linear_parents must lie in [1, n_informative]")
        if self.n_sweep:
            levels = self.sweep_noise_levels
            if not levels or any(s <= 0 for s in levels):
                raise InvalidConfigError("sweep noise levels must be non-empty and positive")
            if any(b < a for a, b in zip(levels, levels[1:])):
                raise InvalidConfigError("sweep noise levels must be ascending")
        if self.n_structured_noise:
            _check_groups(self.structured_noise_groups, self.n_classes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["sweep_noise_levels"] = list(self.sweep_noise_levels)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfigError(f"unknown generator keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "sweep_noise_levels" in kwargs:
            kwargs["sweep_noise_levels"] = tuple(float(s) for s in kwargs["sweep_noise_levels"])
        return cls(**kwargs)


def _check_groups(groups: int, n_classes: int) -> None:
    if groups < 2 or groups == n_classes:
        raise InvalidGroupsError(
            f"structured noise needs >= 2 groups different from n_classes={n_classes}, "
            f"got {groups}"
        )


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    X: np.ndarray
    y: np.ndarray
    kinds: tuple[FeatureKind, ...]
    lineages: tuple[Lineage, ...]
    config: GeneratorConfig

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def feature_names(self) -> list[str]:
        return [f"feat_{j + 1}" for j in range(self.d)]

    def indices_of(self, kind: FeatureKind) -> np.ndarray:
        return np.array([j for j, k in enumerate(self.kinds) if k is kind], dtype=np.int64)

    @property
    def informative_indices(self) -> np.ndarray:
        return self.indices_of(FeatureKind.INFORMATIVE)

    @property
    def lineage_by_feature(self) -> dict[int, Lineage]:
        return {lin.feature: lin for lin in self.lineages}

    def subset_rows(self, rows: np.ndarray) -> "SyntheticDataset":
        return SyntheticDataset(self.X[rows], self.y[rows], self.kinds, self.lineages, self.config)


@dataclass(frozen=True, eq=False)
class SplitDataset:
    dataset: SyntheticDataset
    train_indices: np.ndarray
    test_indices: np.ndarray
    split_seed: int
    test_fraction: float = DEFAULT_TEST_FRACTION
    train: SyntheticDataset = field(init=False)
    test: SyntheticDataset = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "train", self.dataset.subset_rows(self.train_indices))
        object.__setattr__(self, "test", self.dataset.subset_rows(self.test_indices))


# ---------------------------------------------------------------------------
# block generators
# ---------------------------------------------------------------------------


def _random_full_rank(dim: int, rng: np.random.Generator) -> np.ndarray:
    for _ in range(100):
        A = rng.uniform(-1.0, 1.0, size=(dim, dim))
        if np.linalg.matrix_rank(A) == dim:
            return A
    raise RuntimeError("could not draw a full-rank mixing matrix")  # pragma: no cover


def make_informative(
    config: GeneratorConfig,
    rng: np.random.Generator,
    mixing: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Class-conditional Gaussian clusters on hypercube vertices.

    Returns ``(X, y, y_clean)`` where ``y_clean`` holds labels before the
    random flips. Flipped samples always receive a different class.
    ``mixing`` replaces the random full-rank mixing matrix (pass the
    identity to disable mixing).
    """
    n, c, m = config.n_samples, config.n_classes, config.n_informative
    vertex_ids = rng.choice(2**m, size=c, replace=False)
    bits = (vertex_ids[:, None] >> np.arange(m)[None, :]) & 1
    centroids = config.class_separation * (2.0 * bits - 1.0)

    A = _random_full_rank(m, rng) if mixing is None else np.asarray(mixing, dtype=float)
    if A.shape != (m, m):
        raise InvalidConfigError(f"mixing matrix must be {m}x{m}")

    y_clean = np.arange(n) % c
    rng.shuffle(y_clean)
    X = rng.standard_normal((n, m)) @ A + centroids[y_clean]

    y = y_clean.copy()
    flip = rng.random(n) < config.label_flip_fraction
    y[flip] = (y[flip] + rng.integers(1, c, size=int(flip.sum()))) % c
    if np.unique(y).size != c:
        raise InvalidConfigError("label flips emptied a class; increase n_samples")
    return X, y.astype(np.int64), y_clean.astype(np.int64)


def make_linear_redundant(
    informative: np.ndarray,
    rng: np.random.Generator,
    count: int = 5,
    n_parents: int = 3,
    noise_std: float = 0.05,
    first_index: int = 0,
) -> tuple[np.ndarray, list[Lineage]]:
    n, m = informative.shape
    block = np.empty((n, count))
    lineages = []
    for j in range(count):
        parents = np.sort(rng.choice(m, size=n_parents, replace=False))
        weights = rng.uniform(0.5, 1.5, size=n_parents) * rng.choice([-1.0, 1.0], size=n_parents)
        block[:, j] = informative[:, parents] @ weights + noise_std * rng.standard_normal(n)
        lineages.append(
            Lineage(
                feature=first_index + j,
                parents=tuple(int(p) for p in parents),
                transform="linear",
                noise_std=float(noise_std),
                weights=tuple(float(w) for w in weights),
            )
        )
    return block, lineages


def apply_transform(kind: str, columns: np.ndarray) -> np.ndarray:
    """Evaluate a non-linear transform on its parent column(s)."""
    v = columns[:, 0]
    if kind == "square":
        return v**2
    if kind == "sine":
        return np.sin(v)
    if kind == "tanh":
        return np.tanh(v)
    if kind == "abs":
        return np.abs(v)
    if kind == "product":
        return v * columns[:, 1]
    raise ValueError(f"unknown transform {kind!r}")


def make_nonlinear_redundant(
    informative: np.ndarray,
    rng: np.random.Generator,
    count: int = 5,
    noise_std: float = 0.05,
    first_index: int = 0,
    transforms: tuple[str, ...] | None = None,
) -> tuple[np.ndarray, list[Lineage]]:
    """Non-linear functions of one or two informative parents.

    Transforms are a random permutation of :data:`NONLINEAR_TRANSFORMS`,
    cycled when ``count`` exceeds five, unless ``transforms`` is given.
    """
    n, m = informative.shape
    if transforms is None:
        order = rng.permutation(len(NONLINEAR_TRANSFORMS))
        transforms = tuple(NONLINEAR_TRANSFORMS[i] for i in order)
    block = np.empty((n, count))
    lineages = []
    for j in range(count):
        kind = transforms[j % len(transforms)]
        n_parents = 2 if kind == "product" else 1
        if n_parents > m:
            raise InvalidConfigError("product transform needs two informative features")
        parents = np.sort(rng.choice(m, size=n_parents, replace=False))
        block[:, j] = apply_transform(kind, informative[:, parents])
        if noise_std:
            block[:, j] += noise_std * rng.standard_normal(n)
        lineages.append(
            Lineage(
                feature=first_index + j,
                parents=tuple(int(p) for p in parents),
                transform=kind,
                noise_std=float(noise_std),
            )
        )
    return block, lineages


def make_gaussian_noise(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((n, count))


def make_structured_noise(
    n: int,
    count: int,
    groups: int,
    rng: np.random.Generator,
    n_classes: int = 3,
) -> tuple[np.ndarray, np.ndarray]:
    """Label-independent mixture of Gaussians; returns ``(block, latent_groups)``."""
    _check_groups(groups, n_classes)
    latent = rng.integers(0, groups, size=n)
    means = rng.normal(0.0, 2.0, size=(groups, count))
    return means[latent] + rng.standard_normal((n, count)), latent


def make_sweep(
    informative: np.ndarray,
    levels: tuple[float, ...] | list[float],
    rng: np.random.Generator,
    count: int = 55,
    first_index: int = 0,
) -> tuple[np.ndarray, list[Lineage]]:
    """Copies of informative features degraded by increasing Gaussian noise.

    Sweep feature ``j`` copies informative feature ``j % m`` with noise level
    ``levels[min(j // m, len(levels) - 1)]``, so each pass over the
    informative block uses the next, noisier level.
    """
    if len(levels) == 0:
        raise InvalidConfigError("sweep needs at least one noise level")
    if any(b < a for a, b in zip(levels, levels[1:])):
        raise InvalidConfigError("sweep noise levels must be ascending")
    n, m = informative.shape
    block = np.empty((n, count))
    lineages = []
    for j in range(count):
        parent = j % m
        sigma = float(levels[min(j // m, len(levels) - 1)])
        block[:, j] = informative[:, parent] + sigma * rng.standard_normal(n)
        lineages.append(
            Lineage(feature=first_index + j, parents=(parent,), transform="sweep", noise_std=sigma)
        )
    return block, lineages


def generate(config: GeneratorConfig | None = None) -> SyntheticDataset:
    """Generate the full dataset; a pure function of ``config``."""
    config = config or GeneratorConfig()
    config.validate()
    streams = [
        np.random.default_rng(s)
        for s in np.random.SeedSequence(config.master_seed).spawn(len(BLOCK_ORDER))
    ]
    sizes = config.block_sizes
    offsets = np.cumsum([0] + [sizes[k] for k in BLOCK_ORDER])
    start = dict(zip(BLOCK_ORDER, offsets[:-1].tolist()))

    informative, y, _ = make_informative(config, streams[0])
    lin, lin_lineage = make_linear_redundant(
        informative,
        streams[1],
        count=config.n_linear_redundant,
        n_parents=config.linear_parents,
        noise_std=config.redundant_noise_std,
        first_index=start[FeatureKind.LINEAR_REDUNDANT],
    )
    nonlin, nonlin_lineage = make_nonlinear_redundant(
        informative,
        streams[2],
        count=config.n_nonlinear_redundant,
        noise_std=config.redundant_noise_std,
        first_index=start[FeatureKind.NONLINEAR_REDUNDANT],
    )
    gauss = make_gaussian_noise(config.n_samples, config.n_gaussian_noise, streams[3])
    if config.n_structured_noise:
        structured, _ = make_structured_noise(
            config.n_samples,
            config.n_structured_noise,
            config.structured_noise_groups,
            streams[4],
            n_classes=config.n_classes,
        )
    else:
        structured = np.empty((config.n_samples, 0))
    sweep, sweep_lineage = make_sweep(
        informative,
        config.sweep_noise_levels,
        streams[5],
        count=config.n_sweep,
        first_index=start[FeatureKind.SWEEP],
    )

    X = np.hstack([informative, lin, nonlin, gauss, structured, sweep])
    kinds = tuple(kind for kind in BLOCK_ORDER for _ in range(sizes[kind]))
    lineages = tuple(lin_lineage + nonlin_lineage + sweep_lineage)
    return SyntheticDataset(X=X, y=y, kinds=kinds, lineages=lineages, config=config)


# ---------------------------------------------------------------------------
# splitting and scaling
# ---------------------------------------------------------------------------


def split(
    dataset: SyntheticDataset,
    test_fraction: float = DEFAULT_TEST_FRACTION,
    seed: int = 0,
) -> SplitDataset:
    """Stratified train/test split.

    Each class contributes ``round(test_fraction * n_class)`` test samples,
    clamped so both sides keep at least one sample of every class.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DegenerateSplitError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(dataset.y):
        members = np.flatnonzero(dataset.y == c)
        if members.size < 2:
            raise DegenerateSplitError(f"class {c} has {members.size} sample(s); cannot split")
        members = rng.permutation(members)
        n_test = int(math.floor(test_fraction * members.size + 0.5))
        n_test = min(max(n_test, 1), members.size - 1)
        test.append(members[:n_test])
        train.append(members[n_test:])
    return SplitDataset(
        dataset=dataset,
        train_indices=np.sort(np.concatenate(train)),
        test_indices=np.sort(np.concatenate(test)),
        split_seed=int(seed),
        test_fraction=float(test_fraction),
    )


def standardize(train: np.ndarray, apply_to: np.ndarray | None = None):
    """Z-score ``apply_to`` with statistics of ``train``.

    Returns ``(scaled, mean, std)``. Constant training columns map to zero.
    """
    train = np.asarray(train, dtype=float)
    apply_to = train if apply_to is None else np.asarray(apply_to, dtype=float)
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    safe = np.where(std > 0, std, 1.0)
    scaled = (apply_to - mean) / safe
    scaled[:, std == 0] = 0.0
    return scaled, mean, std


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def fingerprint(dataset: SyntheticDataset, split_data: SplitDataset | None = None) -> str:
    """SHA-256 content hash of the data, taxonomy, lineage and split."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(dataset.X, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(dataset.y, dtype="<i8").tobytes())
    meta = {
        "kinds": [k.value for k in dataset.kinds],
        "lineages": [lin.to_dict() for lin in dataset.lineages],
    }
    h.update(json.dumps(meta, sort_keys=True).encode())
    if split_data is not None:
        h.update(np.asarray(split_data.train_indices, dtype="<i8").tobytes())
        h.update(np.asarray(split_data.test_indices, dtype="<i8").tobytes())
    return h.hexdigest()


def save(dataset: SyntheticDataset, split_data: SplitDataset, path: str | Path) -> Path:
    """Write ``data.csv`` and ``metadata.json`` into directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    header = ",".join(dataset.feature_names + ["target"])
    table = np.column_stack([dataset.X, dataset.y.astype(float)])
    fmt = ["%.17g"] * dataset.d + ["%d"]
    np.savetxt(path / DATA_FILE, table, delimiter=",", header=header, comments="", fmt=fmt)
    meta = {
        "d": dataset.d,
        "n": dataset.n,
        "config": dataset.config.to_dict(),
        "kinds": [k.value for k in dataset.kinds],
        "lineages": [lin.to_dict() for lin in dataset.lineages],
        "split": {
            "train_indices": [int(i) for i in split_data.train_indices],
            "test_indices": [int(i) for i in split_data.test_indices],
            "test_fraction": split_data.test_fraction,
        },
        "seeds": {"master_seed": dataset.config.master_seed, "split_seed": split_data.split_seed},
        "fingerprint": fingerprint(dataset, split_data),
    }
    (path / META_FILE).write_text(json.dumps(meta, indent=1))
    return path


def load(path: str | Path) -> tuple[SyntheticDataset, SplitDataset]:
    path = Path(path)
    data_file, meta_file = path / DATA_FILE, path / META_FILE
    if not data_file.is_file():
        raise FileNotFoundError(f"no {DATA_FILE} in {path}")
    if not meta_file.is_file():
        raise SchemaMismatchError(f"metadata sidecar {META_FILE} missing in {path}")
    try:
        meta = json.loads(meta_file.read_text())
        config = GeneratorConfig.from_dict(meta["config"])
        kinds = tuple(FeatureKind(k) for k in meta["kinds"])
        lineages = tuple(Lineage.from_dict(x) for x in meta["lineages"])
        train_idx = np.asarray(meta["split"]["train_indices"], dtype=np.int64)
        test_idx = np.asarray(meta["split"]["test_indices"], dtype=np.int64)
        test_fraction = float(meta["split"].get("test_fraction", DEFAULT_TEST_FRACTION))
        split_seed = int(meta["seeds"]["split_seed"])
        d = int(meta["d"])
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaMismatchError(f"malformed metadata in {meta_file}: {exc}") from exc

    with data_file.open() as fh:
        header = fh.readline().strip().split(",")
    expected = [f"feat_{j + 1}" for j in range(d)] + ["target"]
    if header != expected:
        raise SchemaMismatchError(
            f"data header has {len(header) - 1} features, metadata declares d={d}"
        )
    table = np.loadtxt(data_file, delimiter=",", skiprows=1, ndmin=2)
    if table.shape[1] != d + 1 or len(kinds) != d:
        raise SchemaMismatchError("column count does not match metadata")
    X = np.ascontiguousarray(table[:, :d])
    y = table[:, d].astype(np.int64)
    dataset = SyntheticDataset(X=X, y=y, kinds=kinds, lineages=lineages, config=config)
    split_data = SplitDataset(
        dataset=dataset,
        train_indices=train_idx,
        test_indices=test_idx,
        split_seed=split_seed,
        test_fraction=test_fraction,
    )
    if np.union1d(train_idx, test_idx).size != dataset.n or np.intersect1d(train_idx, test_idx).size:
        raise SchemaMismatchError("split indices do not partition the samples")
    return dataset, split_data
