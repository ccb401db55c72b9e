import numpy as np
import pytest

from mofs import dataset as ds
from mofs.objectives import EvaluationContext

CONTEXT_SEED = 1


@pytest.fixture(scope="session")
def default_data():
    return ds.generate()


@pytest.fixture(scope="session")
def default_split(default_data):
    return ds.split(default_data, 0.3, 0)


@pytest.fixture(scope="session")
def default_ctx(default_split):
    return EvaluationContext.from_split(default_split, master_seed=CONTEXT_SEED)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_RUN_CACHE: dict = {}


def cached_run(ctx, objective: str, size: str, init, seed: int, **config):
    """Run SMS-EMOA once per argument set and share the history across tests."""
    from mofs.moea import MoeaConfig, run
    from mofs.objectives import ObjectiveSpec

    key = (id(ctx), objective, size, init, seed, tuple(sorted(config.items())))
    if key not in _RUN_CACHE:
        spec = ObjectiveSpec.parse(objective, size)
        _RUN_CACHE[key] = run(spec, ctx, MoeaConfig(init=init, master_seed=seed, **config))
    return _RUN_CACHE[key]


_CTX_CACHE: dict = {}


def seed_ctx(split, seed: int):
    """Evaluation context whose objective seeds derive from ``seed``."""
    key = (id(split), seed)
    if key not in _CTX_CACHE:
        _CTX_CACHE[key] = EvaluationContext.from_split(split, master_seed=seed)
    return _CTX_CACHE[key]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
