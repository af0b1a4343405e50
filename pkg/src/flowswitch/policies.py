"""Online server-count policies and closed-form batch profiles.

Every online rule maps the causally observable state to an integer server
count. Fractional formulas are ceiled (with a tiny epsilon guard against
float noise) and all rules return 0 on an empty system so work neutrality
holds by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .engine import ObservableState

_CEIL_EPS = 1e-9


def _ceil(x: float) -> int:
    return max(0, math.ceil(x - _CEIL_EPS))


def effective_alpha(alpha: float) -> float:
    """The quadratic rule replaces alpha by 1 whenever alpha < 1."""
    return max(alpha, 1.0)


def _check_alpha(alpha: float):
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")


@dataclass(frozen=True)
class FullParallel:
    """s(t) = n(t): one server per outstanding job."""

    @property
    def name(self) -> str:
        return "full_parallel"

    def decide(self, state: ObservableState) -> int:
        return state.n


@dataclass(frozen=True)
class BalanceValue:
    """s(t) = ceil(n(t) / alpha), the value-balancing baseline."""

    alpha: float

    def __post_init__(self):
        _check_alpha(self.alpha)

    @property
    def name(self) -> str:
        return f"balance_value(alpha={self.alpha:g})"

    def decide(self, state: ObservableState) -> int:
        if state.n == 0:
            return 0
        return _ceil(state.n / self.alpha)


@dataclass(frozen=True)
class BalanceDelta:
    """|s(t) - s(t-1)| = n(t)/alpha, moving upward while work remains.

    The increment direction is not pinned by the rule itself; downward
    balancing stalls service, so this implementation always adds
    ceil(n/alpha) servers (clamped at n) and drops to 0 when idle.
    """

    alpha: float

    def __post_init__(self):
        _check_alpha(self.alpha)

    @property
    def name(self) -> str:
        return f"balance_delta(alpha={self.alpha:g})"

    def decide(self, state: ObservableState) -> int:
        if state.n == 0:
            return 0
        return min(state.s_prev + _ceil(state.n / self.alpha), state.n)


@dataclass(frozen=True)
class SqrtOnline:
    """s(t) = max(1, ceil(n(t)/sqrt(alpha))) while work remains."""

    alpha: float

    def __post_init__(self):
        _check_alpha(self.alpha)

    @property
    def name(self) -> str:
        return f"sqrt_online(alpha={self.alpha:g})"

    def decide(self, state: ObservableState) -> int:
        if state.n == 0:
            return 0
        return min(max(1, _ceil(state.n / math.sqrt(self.alpha))), state.n)


@dataclass(frozen=True)
class Lg:
    """Lazy-growth rule: raise s(t) to n(t)/alpha^(1/4), never proactively cut.

    If the carried-over count already exceeds the target, keep it (the
    engine still clamps at n); otherwise jump up to the target.
    """

    alpha: float

    def __post_init__(self):
        _check_alpha(self.alpha)

    @property
    def name(self) -> str:
        return f"lg(alpha={self.alpha:g})"

    def decide(self, state: ObservableState) -> int:
        if state.n == 0:
            return 0
        target = _ceil(state.n / self.alpha ** 0.25)
        if state.s_prev > target:
            return min(state.s_prev, state.n)
        return min(target, state.n)


@dataclass(frozen=True)
class GammaPolicy:
    """s(t) = ceil(n(t) / alpha^gamma), the one-parameter rate family."""

    alpha: float
    gamma: float

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")

    @property
    def name(self) -> str:
        return f"a_gamma(alpha={self.alpha:g},gamma={self.gamma:g})"

    def decide(self, state: ObservableState) -> int:
        if state.n == 0:
            return 0
        return min(_ceil(state.n / self.alpha ** self.gamma), state.n)


@dataclass(frozen=True)
class QuadAlg:
    """s(t) = min(ceil(beta * sqrt(n(t)/alpha)), n(t)) with alpha floored at 1."""

    alpha: float
    beta: float = 1.0

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.beta < 1:
            raise ValueError(f"beta must be >= 1, got {self.beta}")

    @property
    def name(self) -> str:
        return f"quad_alg(alpha={self.alpha:g},beta={self.beta:g})"

    def decide(self, state: ObservableState) -> int:
        if state.n == 0:
            return 0
        a_eff = effective_alpha(self.alpha)
        return min(_ceil(self.beta * math.sqrt(state.n / a_eff)), state.n)


@dataclass(frozen=True)
class QuadBalance:
    """alpha * (s(t)-s(t-1))^2 = n(t): add ceil(sqrt(n/alpha)) servers."""

    alpha: float

    def __post_init__(self):
        _check_alpha(self.alpha)

    @property
    def name(self) -> str:
        return f"quad_balance(alpha={self.alpha:g})"

    def decide(self, state: ObservableState) -> int:
        if state.n == 0:
            return 0
        return min(state.s_prev + _ceil(math.sqrt(state.n / self.alpha)), state.n)


# ---------------------------------------------------------------------------
# registry

POLICY_REGISTRY: dict[str, Callable[..., object]] = {
    "full_parallel": FullParallel,
    "balance_value": BalanceValue,
    "balance_delta": BalanceDelta,
    "sqrt_online": SqrtOnline,
    "lg": Lg,
    "a_gamma": GammaPolicy,
    "quad_alg": QuadAlg,
    "quad_balance": QuadBalance,
}

_NEEDS_ALPHA = {"balance_value", "balance_delta", "sqrt_online", "lg",
                "a_gamma", "quad_alg", "quad_balance"}


def make_policy(spec: str, default_alpha: float | None = None):
    """Build a policy from 'name:key=val,...' or 'name(key=val,...)'.

    Policies that take alpha inherit ``default_alpha`` (normally the cost
    model's) when the spec does not pin one.
    """
    spec = spec.strip()
    if "(" in spec:
        if not spec.endswith(")"):
            raise ValueError(f"unbalanced parentheses in policy spec {spec!r}")
        name, args = spec[:-1].split("(", 1)
    else:
        name, _, args = spec.partition(":")
    name = name.strip()
    if name not in POLICY_REGISTRY:
        raise ValueError(f"unknown policy {name!r}; known: {sorted(POLICY_REGISTRY)}")
    kwargs: dict[str, float] = {}
    if args.strip():
        for item in args.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise ValueError(f"malformed policy parameter {item!r}")
            kwargs[key.strip()] = float(value)
    if name in _NEEDS_ALPHA and "alpha" not in kwargs:
        if default_alpha is None:
            raise ValueError(f"policy {name!r} needs alpha (none given, no default)")
        kwargs["alpha"] = default_alpha
    try:
        return POLICY_REGISTRY[name](**kwargs)
    except TypeError as exc:
        raise ValueError(f"bad parameters for policy {name!r}: {exc}") from None


# ---------------------------------------------------------------------------
# offline batch profiles

@dataclass(frozen=True)
class LinearBatchProfile:
    """Constant-rate offline profile for a batch under linear switching."""

    speeds: tuple[float, ...]
    s_max: float
    flow_time: float
    switching_cost: float
    total: float


def batch_linear_offline(n_jobs: int, alpha: float) -> LinearBatchProfile:
    """Offline optimal (up to slot-edge effects) for N unit jobs at slot 1.

    Holds s = sqrt(N(N-1))/(2 sqrt(alpha)) while work neutrality permits,
    then serves the fractional remainder in one slot. Speeds are real
    valued; the cost is the linear objective of that fractional trace.
    """
    _check_alpha(alpha)
    if n_jobs < 0:
        raise ValueError("n_jobs must be nonnegative")
    if n_jobs == 0:
        return LinearBatchProfile((), 0.0, 0.0, 0.0, 0.0)
    s_max = math.sqrt(n_jobs * (n_jobs - 1)) / (2.0 * math.sqrt(alpha))
    if s_max <= 0.0:
        # single job: falls through to s = n = 1 for one slot
        speeds: list[float] = [float(n_jobs)]
    else:
        hold = int(n_jobs / s_max + _CEIL_EPS)
        speeds = [s_max] * hold
        remainder = n_jobs - hold * s_max
        if remainder > 1e-12:
            speeds.append(remainder)
    flow = 0.0
    remaining = float(n_jobs)
    for s in speeds:
        flow += remaining
        remaining -= s
    switching = sum(abs(b - a) for a, b in zip([0.0] + speeds, speeds + [0.0]))
    total = flow + alpha * switching
    return LinearBatchProfile(tuple(speeds), s_max, flow, switching, total)


def burst_objective(profile, n: float, horizon: int, alpha: float = 1.0) -> float:
    """H*n - sum_i s_i (H+1-i) + alpha * sum (s_i - s_{i-1})^2 with zero ends."""
    flow = horizon * n
    switching = 0.0
    prev = 0.0
    for i, s in enumerate(profile, start=1):
        flow -= s * (horizon + 1 - i)
        switching += (s - prev) ** 2
        prev = s
    switching += prev ** 2
    return flow + alpha * switching


def closed_form_burst_profile(n: float, horizon: int) -> tuple[float, ...]:
    """The published closed form for the batch burst problem, as printed.

    Known to produce infeasible profiles (s(1) can exceed n); callers must
    check feasibility against the numeric solver rather than trust it.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    h = horizon
    lam = 24.0 * n / (h * (h + 1) * (h + 2)) + (3.0 * h - 2.0) * (h + 1) / (h + 2)
    s = [0.25 * (n * lam - h * (h - 1) / 2.0)]
    for i in range(2, h + 1):
        incr = s[0] - lam * (i - 1) / 2.0 - (i - 1) * (h + 1 - i / 2.0) / 2.0
        s.append(s[-1] + incr)
    return tuple(s)


@dataclass(frozen=True)
class BurstBatchResult:
    """Numeric optimum of the batch burst problem plus closed-form audit."""

    profile: tuple[float, ...]
    objective: float
    closed_form: tuple[float, ...]
    closed_form_feasible: bool
    closed_form_matches: bool
    closed_form_objective: float | None


def batch_quad_continuous(n: float, horizon: int,
                          match_tol: float = 1e-6) -> BurstBatchResult:
    """Solve the batch burst problem numerically and audit the closed form.

    The convex solver is authoritative. The closed form is evaluated,
    feasibility-checked (nonnegative, sums to n), and compared; a mismatch
    is reported via the flags, never silently patched over.
    """
    from .oracle import convex_batch_solve

    if n < 0:
        raise ValueError("n must be nonnegative")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    sol = convex_batch_solve(n, horizon, alpha=1.0)
    profile = tuple(float(x) for x in sol.profile)
    closed = closed_form_burst_profile(n, horizon)
    feasible = all(x >= -match_tol for x in closed) and \
        abs(sum(closed) - n) <= match_tol
    matches = feasible and max(
        (abs(a - b) for a, b in zip(profile, closed)), default=0.0) <= match_tol
    closed_obj = burst_objective(closed, n, horizon) if feasible else None
    return BurstBatchResult(profile, sol.objective, closed, feasible,
                            matches, closed_obj)


@dataclass(frozen=True)
class HorizonSearchResult:
    horizon: int
    cost: float
    profile: tuple[float, ...]


def batch_quad_horizon_search(n: float, alpha: float) -> HorizonSearchResult:
    """Minimize the relaxed batch cost over the completion horizon H.

    Per-H cost is the burst objective (switching scaled by alpha) plus n,
    which restores the departure-slot term and makes the value comparable
    to the slotted objective. The objective is non-increasing in H, so ties
    resolve to the smallest H reaching the plateau.
    """
    from .oracle import convex_batch_solve

    _check_alpha(alpha)
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return HorizonSearchResult(0, 0.0, ())
    h_max = math.ceil(3.0 * math.sqrt(effective_alpha(alpha) * n)) + int(math.ceil(n))
    best: HorizonSearchResult | None = None
    for h in range(1, h_max + 1):
        sol = convex_batch_solve(n, h, alpha=alpha)
        cost = sol.objective + n
        if best is None or cost < best.cost - 1e-9:
            best = HorizonSearchResult(h, cost, tuple(float(x) for x in sol.profile))
    assert best is not None
    return best
