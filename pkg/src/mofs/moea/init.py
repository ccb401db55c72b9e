"""Initial population samplers over binary genomes."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidConfigError, InvalidKError


def repair_empty(bits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Switch on one uniformly random bit in every all-zero row (in place)."""
    bits = np.atleast_2d(bits)
    for row in np.flatnonzero(~bits.any(axis=1)):
        bits[row, rng.integers(bits.shape[1])] = True
    return bits


def _check_p(p: float) -> None:
    if not 0.0 < p < 1.0:
        raise InvalidConfigError(f"selection probability must lie in (0, 1), got {p}")


def init_binary_random(pop_size: int, d: int, p: float, rng: np.random.Generator) -> np.ndarray:
    _check_p(p)
    return repair_empty(rng.random((pop_size, d)) < p, rng)


def segment_sizes(pop_size: int, n_segments: int) -> list[int]:
    base, extra = divmod(pop_size, n_segments)
    return [base + (1 if i < extra else 0) for i in range(n_segments)]


def init_segmented(
    pop_size: int,
    d: int,
    p_list=(0.25, 0.5, 0.75),
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Concatenate Bernoulli sub-populations, one per probability in ``p_list``."""
    if len(p_list) == 0:
        raise InvalidConfigError("segmented initialisation needs at least one probability")
    rng = rng if rng is not None else np.random.default_rng()
    parts = [
        init_binary_random(size, d, p, rng)
        for size, p in zip(segment_sizes(pop_size, len(p_list)), p_list)
    ]
    return np.vstack(parts)


def init_fixed_cardinality(pop_size: int, d: int, k: int, rng: np.random.Generator) -> np.ndarray:
    if not 1 <= k <= d:
        raise InvalidKError(f"cardinality must lie in [1, {d}], got {k}")
    bits = np.zeros((pop_size, d), dtype=bool)
    for row in range(pop_size):
        bits[row, rng.choice(d, size=k, replace=False)] = True
    return bits


class InitKind(str, enum.Enum):
    RANDOM = "random"
    SEGMENTED = "segmented"
    FIXED = "fixed"


@dataclass(frozen=True)
class InitStrategy:
    kind: InitKind
    p: float = 0.5
    p_list: tuple[float, ...] = (0.25, 0.5, 0.75)
    k: int = 1

    @classmethod
    def binary_random(cls, p: float = 0.5) -> "InitStrategy":
        return cls(InitKind.RANDOM, p=p)

    @classmethod
    def segmented(cls, p_list=(0.25, 0.5, 0.75)) -> "InitStrategy":
        return cls(InitKind.SEGMENTED, p_list=tuple(p_list))

    @classmethod
    def fixed_cardinality(cls, k: int = 1) -> "InitStrategy":
        return cls(InitKind.FIXED, k=k)

    @property
    def label(self) -> str:
        if self.kind is InitKind.RANDOM:
            return f"random(p={self.p:g})"
        if self.kind is InitKind.SEGMENTED:
            return "segmented(p=" + "/".join(f"{p:g}" for p in self.p_list) + ")"
        return f"fixed(k={self.k})"

    def validate(self, d: int) -> None:
        if self.kind is InitKind.RANDOM:
            _check_p(self.p)
        elif self.kind is InitKind.SEGMENTED:
            if not self.p_list:
                raise InvalidConfigError("segmented initialisation needs probabilities")
            for p in self.p_list:
                _check_p(p)
        elif not 1 <= self.k <= d:
            raise InvalidKError(f"cardinality must lie in [1, {d}], got {self.k}")

    def sample(self, pop_size: int, d: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind is InitKind.RANDOM:
            return init_binary_random(pop_size, d, self.p, rng)
        if self.kind is InitKind.SEGMENTED:
            return init_segmented(pop_size, d, self.p_list, rng)
        return init_fixed_cardinality(pop_size, d, self.k, rng)

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind.value}
        if self.kind is InitKind.RANDOM:
            out["p"] = self.p
        elif self.kind is InitKind.SEGMENTED:
            out["p_list"] = list(self.p_list)
        else:
            out["k"] = self.k
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "InitStrategy":
        kind = InitKind(data["kind"])
        if kind is InitKind.RANDOM:
            return cls.binary_random(float(data.get("p", 0.5)))
        if kind is InitKind.SEGMENTED:
            return cls.segmented(tuple(float(p) for p in data.get("p_list", (0.25, 0.5, 0.75))))
        return cls.fixed_cardinality(int(data.get("k", 1)))
