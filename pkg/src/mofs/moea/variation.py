"""Parent selection and bit-string variation."""

from __future__ import annotations

import numpy as np

from .init import repair_empty


def binary_tournament(ranks: np.ndarray, contrib: np.ndarray, rng: np.random.Generator) -> int:
    """Lower front rank wins, then larger hypervolume contribution, then a coin flip."""
    a, b = rng.choice(ranks.shape[0], size=2, replace=False)
    if ranks[a] != ranks[b]:
        return int(a if ranks[a] < ranks[b] else b)
    if contrib[a] != contrib[b]:
        return int(a if contrib[a] > contrib[b] else b)
    return int(a if rng.random() < 0.5 else b)


def vary(
    parent1: np.ndarray,
    parent2: np.ndarray,
    rng: np.random.Generator,
    crossover_probability: float = 0.9,
    mutation_rate: float | None = None,
) -> np.ndarray:
    """Uniform crossover (else copy ``parent1``), bit-flip mutation, empty repair."""
    d = parent1.shape[0]
    rate = 1.0 / d if mutation_rate is None else mutation_rate
    if rng.random() < crossover_probability:
        child = np.where(rng.random(d) < 0.5, parent1, parent2)
    else:
        child = parent1.copy()
    child ^= rng.random(d) < rate
    return repair_empty(child[None, :], rng)[0]


def make_offspring(
    population: np.ndarray,
    ranks: np.ndarray,
    contrib: np.ndarray,
    rng: np.random.Generator,
    crossover_probability: float = 0.9,
    mutation_rate: float | None = None,
    return_parents: bool = False,
):
    """Create one child from two tournament-selected parents."""
    if population.shape[0] < 2:
        i = j = 0
    else:
        i = binary_tournament(ranks, contrib, rng)
        j = binary_tournament(ranks, contrib, rng)
    child = vary(population[i], population[j], rng, crossover_probability, mutation_rate)
    if return_parents:
        return child, (i, j)
    return child
