"""Generators for adversarial constructions and random slotted workloads."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import ArrivalInstance


class GeneratorKind(str, Enum):
    BATCH = "batch"
    PERIODIC = "periodic"
    SIGMA1 = "sigma1"
    SIGMA2 = "sigma2"
    RANDOM_SLOTTED = "random"


def batch(n_jobs: int, size: int = 1) -> ArrivalInstance:
    """All jobs arrive together at slot 1."""
    if n_jobs < 0:
        raise ValueError("n_jobs must be nonnegative")
    return ArrivalInstance(tuple((1, size) for _ in range(n_jobs)),
                           name=f"batch(N={n_jobs},w={size})")


def periodic(x: int, k: int) -> ArrivalInstance:
    """x unit jobs (x even) at each of slots 2, 4, ..., 2k."""
    if x % 2 != 0 or x <= 0:
        raise ValueError(f"x must be a positive even integer, got {x}")
    if k < 0:
        raise ValueError("k must be nonnegative")
    arrivals = tuple((2 * i, 1) for i in range(1, k + 1) for _ in range(x))
    return ArrivalInstance(arrivals, name=f"periodic(x={x},k={k})")


def sigma1(n_jobs: int) -> ArrivalInstance:
    """Single burst: N unit jobs at slot 1."""
    inst = batch(n_jobs, 1)
    return ArrivalInstance(inst.arrivals, name=f"sigma1(N={n_jobs})")


def sigma2(n_jobs: int, horizon: int) -> ArrivalInstance:
    """Sustained load: N unit jobs at every slot 1..T."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    arrivals = tuple((t, 1) for t in range(1, horizon + 1) for _ in range(n_jobs))
    return ArrivalInstance(arrivals, name=f"sigma2(N={n_jobs},T={horizon})")


def random_slotted(rate: float, horizon: int, seed: int) -> ArrivalInstance:
    """Unit jobs with per-slot Poisson(rate) counts, deterministic per seed.

    Pinned to Poisson so experiment outputs are reproducible; the published
    experiments spread the same average load in an unspecified way.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    rng = np.random.default_rng(seed)
    counts = rng.poisson(rate, horizon)
    arrivals = tuple((t, 1)
                     for t, c in enumerate(counts, start=1)
                     for _ in range(int(c)))
    return ArrivalInstance(
        arrivals, name=f"random(rate={rate:g},T={horizon},seed={seed})")


@dataclass(frozen=True)
class GeneratorSpec:
    """A parsed generator request: which family, with which parameters.

    Random generation must carry a seed so builds are reproducible.
    """

    kind: GeneratorKind
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind is GeneratorKind.RANDOM_SLOTTED and "seed" not in self.params:
            raise ValueError("random workloads need an explicit seed")

    def _int(self, key: str, default: int | None = None) -> int:
        if key not in self.params:
            if default is None:
                raise ValueError(
                    f"instance kind {self.kind.value!r} needs parameter {key!r}")
            return default
        value = self.params[key]
        if value != int(value):
            raise ValueError(f"parameter {key!r} must be an integer")
        return int(value)

    def build(self) -> ArrivalInstance:
        if self.kind is GeneratorKind.BATCH:
            return batch(self._int("n"), self._int("w", 1))
        if self.kind is GeneratorKind.PERIODIC:
            return periodic(self._int("x"), self._int("k"))
        if self.kind is GeneratorKind.SIGMA1:
            return sigma1(self._int("n"))
        if self.kind is GeneratorKind.SIGMA2:
            return sigma2(self._int("n"), self._int("t"))
        return random_slotted(self.params.get("rate", 0.0),
                              self._int("t"), self._int("seed"))

    @classmethod
    def parse(cls, spec: str) -> "GeneratorSpec":
        """Parse 'kind:key=val,...' strings, e.g. 'batch:N=4' or
        'random:rate=5,T=100,seed=1'."""
        kind_text, _, rest = spec.partition(":")
        try:
            kind = GeneratorKind(kind_text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown instance kind {kind_text.strip()!r}") from None
        params: dict[str, float] = {}
        if rest.strip():
            for item in rest.split(","):
                key, eq, value = item.partition("=")
                if not eq:
                    raise ValueError(f"malformed instance parameter {item!r}")
                params[key.strip().lower()] = float(value)
        return cls(kind, params)


def parse_instance_spec(spec: str) -> ArrivalInstance:
    """Build an instance from 'kind:key=val,...' generator strings."""
    return GeneratorSpec.parse(spec).build()
