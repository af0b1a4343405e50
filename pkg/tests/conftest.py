"""Shared fixtures: the seeded random-instance corpus used across suites."""

from __future__ import annotations

import random

import pytest

from flowswitch import ArrivalInstance

CORPUS_SEED = 20260808
CORPUS_ALPHAS = (0.5, 1.0, 2.0, 4.0)


def build_corpus(count: int = 200, seed: int = CORPUS_SEED) -> list[ArrivalInstance]:
    """Seeded unit-job instances with at most 10 jobs over at most 10 slots."""
    rng = random.Random(seed)
    out = []
    for i in range(count):
        n_jobs = rng.randint(1, 10)
        horizon = rng.randint(1, 10)
        slots = sorted(rng.randint(1, horizon) for _ in range(n_jobs))
        out.append(ArrivalInstance(tuple((s, 1) for s in slots),
                                   name=f"corpus-{seed}-{i}"))
    return out


@pytest.fixture(scope="session")
def corpus() -> list[ArrivalInstance]:
    return build_corpus()


@pytest.fixture(scope="session")
def small_corpus() -> list[ArrivalInstance]:
    return build_corpus(count=40, seed=CORPUS_SEED + 1)
