"""Ground-truth machinery: exact offline DP, brute-force cross-check,
the primal-dual lower bound, and the convex solver for batch bursts.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .core import ArrivalInstance, CostModel, ScheduleTrace
from .engine import simulate, trace_from_server_counts
from .policies import QuadAlg, effective_alpha

DEFAULT_STATE_BUDGET = 50_000_000
BUDGET_ENV_VAR = "FLOWSWITCH_ORACLE_BUDGET"


class UnsupportedInstanceError(Exception):
    """dp_opt handles unit-size jobs only."""


class DpBudgetError(Exception):
    """DP state space exceeds the configured budget."""

    def __init__(self, required: int, budget: int):
        self.required = required
        self.budget = budget
        super().__init__(f"DP needs {required} states, budget is {budget}")


class OracleSizeError(Exception):
    """exhaustive_opt is guarded to tiny inputs."""


class ConvexSolverError(Exception):
    """Burst solver failed to reach the KKT tolerance."""


def state_budget() -> int:
    raw = os.environ.get(BUDGET_ENV_VAR)
    return int(raw) if raw else DEFAULT_STATE_BUDGET


@dataclass(frozen=True)
class DpConfig:
    """Search-space bounds for the offline DP.

    s_cap defaults to the largest per-slot arrival count; tests that need a
    provably unrestricted optimum pass the total job count instead (s <= n
    <= total jobs always). t_cap defaults to last arrival + total work,
    which no optimal schedule exceeds.
    """

    s_cap: int | None = None
    t_cap: int | None = None
    budget: int | None = None

    def resolve(self, instance: ArrivalInstance) -> tuple[int, int, int]:
        s_cap = self.s_cap if self.s_cap is not None else instance.max_slot_arrivals
        s_cap = max(1, min(s_cap, instance.job_count))
        t_cap = self.t_cap if self.t_cap is not None \
            else instance.last_slot + instance.total_work
        if t_cap < instance.last_slot:
            raise ValueError("t_cap ends before the last arrival")
        return s_cap, t_cap, self.budget if self.budget is not None else state_budget()


def dp_opt(instance: ArrivalInstance, model: CostModel,
           cfg: DpConfig | None = None) -> tuple[float, ScheduleTrace]:
    """Exact offline minimum of the slotted objective for unit jobs.

    State is (slot, outstanding, previous server count); transitions pick
    s' in [0, min(n, s_cap)] and ties break toward smaller s', so the
    returned trace is deterministic. The final ramp-down to 0 is charged
    through one virtual slot past the horizon.
    """
    if not instance.all_unit:
        raise UnsupportedInstanceError("dp_opt requires unit job sizes")
    cfg = cfg or DpConfig()
    if instance.job_count == 0:
        return 0.0, ScheduleTrace((), {}, "dp_opt", instance.instance_id)
    s_cap, t_cap, budget = cfg.resolve(instance)
    n_jobs = instance.job_count
    t_end = t_cap + 1  # virtual slot charging the final down-switch
    n_states = (t_end + 1) * (n_jobs + 1) * (s_cap + 1)
    if n_states > budget:
        raise DpBudgetError(n_states, budget)

    arr = np.zeros(t_end + 2, dtype=np.int64)
    for slot, _ in instance.arrivals:
        arr[slot] += 1
    alpha = model.alpha
    sp = np.arange(s_cap + 1, dtype=np.float64)
    cgrid = np.empty((s_cap + 1, s_cap + 1))
    for s_new in range(s_cap + 1):
        delta = np.abs(s_new - sp)
        cgrid[s_new] = alpha * (delta if model.switching.value == "linear"
                                else delta * delta)
    n_vals = np.arange(n_jobs + 1, dtype=np.float64)

    inf = np.inf
    v_next = np.full((n_jobs + 1, s_cap + 1), inf)
    v_next[0, 0] = 0.0
    choice = np.zeros((t_end + 1, n_jobs + 1, s_cap + 1), dtype=np.int16)
    for t in range(t_end, 0, -1):
        a_next = int(arr[t + 1])
        v_t = np.full((n_jobs + 1, s_cap + 1), inf)
        pick = np.zeros((n_jobs + 1, s_cap + 1), dtype=np.int16)
        for s_new in range(s_cap + 1):
            nxt = np.full(n_jobs + 1, inf)
            n_idx = np.arange(s_new, n_jobs + 1)
            tgt = n_idx - s_new + a_next
            ok = tgt <= n_jobs
            nxt[n_idx[ok]] = v_next[tgt[ok], s_new]
            cand = n_vals[:, None] + cgrid[s_new][None, :] + nxt[:, None]
            better = cand < v_t  # strict: ascending s_new keeps the smallest
            v_t[better] = cand[better]
            pick[better] = s_new
        v_next = v_t
        choice[t] = pick

    n0 = int(arr[1])
    best = float(v_next[n0, 0])
    if not math.isfinite(best):
        raise ValueError("no feasible schedule within t_cap")

    counts: list[int] = []
    n_cur, s_prev = n0, 0
    for t in range(1, t_end + 1):
        s_t = int(choice[t][n_cur, s_prev])
        n_cur = n_cur - s_t + int(arr[t + 1])
        counts.append(s_t)
        s_prev = s_t
        if n_cur == 0 and t >= instance.last_slot:
            break
    while counts and counts[-1] == 0:
        counts.pop()
    trace = trace_from_server_counts(instance, counts, policy_name="dp_opt")
    return best, trace


def exhaustive_opt(instance: ArrivalInstance, model: CostModel,
                   t_cap: int | None = None) -> float:
    """Brute-force minimum over every server-count sequence.

    Independent oracle for dp_opt: plain depth-first enumeration with no
    memoization and no server cap beyond s <= n. Guarded to at most 6 jobs
    and t_cap <= 8.
    """
    if not instance.all_unit:
        raise UnsupportedInstanceError("exhaustive_opt requires unit job sizes")
    if t_cap is None:
        t_cap = instance.last_slot + instance.total_work
    if instance.job_count > 6 or t_cap > 8:
        raise OracleSizeError(
            f"exhaustive_opt guard: {instance.job_count} jobs, t_cap={t_cap}")
    if instance.job_count == 0:
        return 0.0
    arrivals = [0] * (t_cap + 2)
    for slot, _ in instance.arrivals:
        if slot > t_cap:
            raise OracleSizeError("arrival beyond t_cap")
        arrivals[slot] += 1
    alpha = model.alpha
    cost_fn = model.transition_cost
    best = math.inf

    def walk(t: int, n: int, s_prev: int, acc: float):
        nonlocal best
        if t > t_cap:
            if n == 0:
                total = acc + alpha * cost_fn(s_prev, 0)
                if total < best:
                    best = total
            return
        n += arrivals[t]
        if n == 0 and sum(arrivals[t:]) == 0:
            total = acc + alpha * cost_fn(s_prev, 0)
            if total < best:
                best = total
            return
        for s in range(n + 1):
            walk(t + 1, n - s, s, acc + n + alpha * cost_fn(s_prev, s))

    walk(1, 0, 0, 0.0)
    return best


# ---------------------------------------------------------------------------
# primal-dual lower bound

def delta_flow(instance: ArrivalInstance, job: int,
               alpha: float, beta: float) -> int:
    """Flow-time increase caused by one job, later arrivals disregarded.

    Simulates the quadratic rule on the stable-order prefix ending at
    ``job`` and on that prefix minus the job. Prefix truncation keeps the
    per-job increments telescoping to the full flow time even when several
    jobs share a slot.
    """
    if not instance.sizes_equal:
        raise UnsupportedInstanceError("delta_flow requires equal job sizes")
    if not 0 <= job < instance.job_count:
        raise ValueError(f"job index {job} out of range")
    policy = QuadAlg(alpha=alpha, beta=beta)
    with_job = ArrivalInstance(instance.arrivals[: job + 1])
    without_job = ArrivalInstance(instance.arrivals[:job])
    flow_with = sum(rec.n for rec in simulate(with_job, policy).slots)
    flow_without = sum(rec.n for rec in simulate(without_job, policy).slots)
    return flow_with - flow_without


def dual_bound_from_flow(flow_time: float, beta: float) -> float:
    """Weak-duality lower bound F * (4 beta^2 - 9) / (4 beta^2)."""
    return flow_time * (4.0 * beta * beta - 9.0) / (4.0 * beta * beta)


@dataclass(frozen=True)
class DualCertificate:
    """Per-job duals and the resulting lower bound on the offline optimum.

    per_pair_slack is the worst value of
        lambda_j - (t - a_j)/w_j - (3/beta) sqrt(alpha_eff n(t))
    over jobs j and slots t >= a_j of the online run; the certificate is
    sound when it is <= 0 and 4 beta^2 > 9.
    """

    lambdas: tuple[float, ...]
    flow_alg: int
    alpha: float
    beta: float
    bound: float
    per_pair_slack: float
    degenerate: bool

    def to_json_dict(self) -> dict:
        return {
            "lambdas": list(self.lambdas),
            "flow_alg": self.flow_alg,
            "alpha": self.alpha,
            "beta": self.beta,
            "bound": self.bound,
            # -inf means "no (job, slot) pairs", e.g. an empty instance
            "per_pair_slack": self.per_pair_slack
            if math.isfinite(self.per_pair_slack) else None,
            "degenerate": self.degenerate,
        }


def dual_lower_bound(instance: ArrivalInstance, alpha: float,
                     beta: float) -> DualCertificate:
    """Build the dual certificate for the quadratic rule on this instance."""
    if not instance.sizes_equal:
        raise UnsupportedInstanceError("dual_lower_bound requires equal job sizes")
    degenerate = 4.0 * beta * beta <= 9.0
    if degenerate:
        warnings.warn(f"beta={beta:g} gives a nonpositive dual bound",
                      RuntimeWarning, stacklevel=2)
    trace = simulate(instance, QuadAlg(alpha=alpha, beta=beta))
    flow_alg = sum(rec.n for rec in trace.slots)
    size = instance.arrivals[0][1] if instance.arrivals else 1
    lambdas = tuple(delta_flow(instance, j, alpha, beta) / size
                    for j in range(instance.job_count))
    bound = dual_bound_from_flow(flow_alg, beta)

    a_eff = effective_alpha(alpha)
    occ = trace.occupancies()
    rhs = [(3.0 / beta) * math.sqrt(a_eff * n) for n in occ]
    slack = -math.inf
    for j, lam in enumerate(lambdas):
        a_j = instance.arrivals[j][0]
        for idx in range(a_j - 1, len(occ)):
            t = idx + 1
            value = lam - (t - a_j) / size - rhs[idx]
            if value > slack:
                slack = value
    return DualCertificate(lambdas, flow_alg, alpha, beta, bound,
                           slack, degenerate)


# ---------------------------------------------------------------------------
# convex batch solver

@dataclass(frozen=True)
class BurstSolution:
    profile: tuple[float, ...]
    objective: float
    kkt_residual: float


def convex_batch_solve(n: float, horizon: int, alpha: float = 1.0,
                       tol: float = 1e-8) -> BurstSolution:
    """Minimize the batch burst objective over {s >= 0, sum s = n}.

    Strictly convex QP with zero boundary conditions; solved by active-set
    elimination on the KKT system, which lands well inside the 1e-8 KKT
    residual contract for these sizes. The minimizer is unique.
    """
    from .policies import burst_objective

    if n < 0:
        raise ValueError("n must be nonnegative")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    h = horizon
    if n == 0:
        return BurstSolution((0.0,) * h, 0.0, 0.0)

    # objective = c.s + s^T Q s / 2 + const, Q = 2 alpha T (path Laplacian)
    diag = np.full(h, 4.0 * alpha)
    lin = -np.arange(h, 0, -1, dtype=np.float64)  # -(H+1-i)

    def grad(s: np.ndarray) -> np.ndarray:
        g = lin + 4.0 * alpha * s
        g[:-1] -= 2.0 * alpha * s[1:]
        g[1:] -= 2.0 * alpha * s[:-1]
        return g

    active = np.zeros(h, dtype=bool)
    for _ in range(4 * h + 16):
        free = ~active
        k = int(free.sum())
        if k == 0:
            raise ConvexSolverError("all variables pinned at zero with n > 0")
        idx = np.flatnonzero(free)
        kkt = np.zeros((k + 1, k + 1))
        sub = np.diag(diag[idx])
        adjacent = np.flatnonzero(np.diff(idx) == 1)
        sub[adjacent, adjacent + 1] = -2.0 * alpha
        sub[adjacent + 1, adjacent] = -2.0 * alpha
        kkt[:k, :k] = sub
        kkt[:k, k] = -1.0
        kkt[k, :k] = 1.0
        rhs = np.concatenate([-lin[idx], [n]])
        sol = np.linalg.solve(kkt, rhs)
        s = np.zeros(h)
        s[idx] = sol[:k]
        lam = sol[k]
        if s.min() < -1e-11:
            active[int(np.argmin(s))] = True
            continue
        mults = grad(s) - lam
        blocked = np.flatnonzero(active)
        if blocked.size and mults[blocked].min() < -1e-9:
            active[blocked[int(np.argmin(mults[blocked]))]] = False
            continue
        break
    else:
        raise ConvexSolverError("active-set iteration limit reached")

    s = np.maximum(s, 0.0)
    g = grad(s)
    support = s > 1e-12
    residual = abs(float(s.sum()) - n)
    if support.any():
        residual = max(residual, float(np.abs(g[support] - lam).max()))
    if (~support).any():
        residual = max(residual, float(np.maximum(lam - g[~support], 0.0).max()))
    if residual > tol:
        raise ConvexSolverError(f"KKT residual {residual:.3e} exceeds {tol:g}")
    objective = burst_objective(s.tolist(), n, h, alpha)
    return BurstSolution(tuple(float(x) for x in s), float(objective),
                         float(residual))
