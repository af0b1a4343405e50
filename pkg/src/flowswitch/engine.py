"""Deterministic slot simulator: policy picks s(t), multi-server SRPT serves.

Each slot: arrivals join, the policy sees the causal state and requests a
server count, the engine clamps it to [0, n(t)] (one unit-speed server per
job), the s(t) jobs with shortest remaining work run for one unit, and jobs
hitting zero depart at slot end. Preemption and migration are free.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence, runtime_checkable

from .core import ArrivalInstance, CostModel, ScheduleTrace, SlotRecord


class PolicyFaultError(Exception):
    """Policy returned something that is not a finite number."""


class PolicyStallError(Exception):
    """Policy requested zero servers with work outstanding for K_stall slots."""


class ObservableState:
    """What an online policy may look at when choosing s(t).

    ``outstanding`` holds (job_id, arrival_slot, remaining) for every job in
    the system, in (arrival, id) order. It is materialized lazily and only
    valid while decide() runs; None in bulk-simulation mode. ``history`` is
    a read-only live view of past (t, n, s) triples. Policies must treat
    both as immutable and must not retain them.
    """

    __slots__ = ("t", "n", "s_prev", "history", "_provider", "_outstanding")

    def __init__(self, t: int, n: int, s_prev: int,
                 provider: Callable[[], tuple] | None = None,
                 history: Sequence[tuple[int, int, int]] | None = None):
        self.t = t
        self.n = n
        self.s_prev = s_prev
        self.history = history
        self._provider = provider
        self._outstanding: tuple | None = None

    @property
    def outstanding(self) -> tuple[tuple[int, int, int], ...] | None:
        if self._outstanding is None and self._provider is not None:
            self._outstanding = self._provider()
        return self._outstanding

    def __repr__(self) -> str:
        return f"ObservableState(t={self.t}, n={self.n}, s_prev={self.s_prev})"


@runtime_checkable
class PolicyDecision(Protocol):
    name: str

    def decide(self, state: ObservableState) -> int: ...


def srpt_select(outstanding: Sequence[tuple[int, int, int]], k: int) -> frozenset[int]:
    """Pick the min(k, len) jobs to serve, by (remaining, arrival, id).

    Equal remaining work is broken by arrival slot, then by job id, so
    same-size jobs run in arrival order.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k == 0 or not outstanding:
        return frozenset()
    ranked = sorted(outstanding, key=lambda rec: (rec[2], rec[1], rec[0]))
    return frozenset(rec[0] for rec in ranked[: min(k, len(ranked))])


def _check_policy_alpha(policy: PolicyDecision, model: CostModel | None):
    alpha = getattr(policy, "alpha", None)
    if model is not None and alpha is not None and alpha != model.alpha:
        raise ValueError(
            f"policy alpha {alpha} disagrees with cost model alpha {model.alpha}")


def simulate(instance: ArrivalInstance, policy: PolicyDecision,
             model: CostModel | None = None, *,
             record_served: bool = True) -> ScheduleTrace:
    """Run the policy over the whole instance and return its trace.

    ``model`` only cross-checks that a policy's alpha parameter matches the
    cost model it will be scored under; the dynamics never depend on it.
    ``record_served=False`` skips per-job bookkeeping (unit jobs only) for
    large runs; the resulting trace costs normally but cannot be validated.

    Raises PolicyFaultError on non-finite requests and PolicyStallError if
    the policy requests 0 with work outstanding for K_stall = total work +
    last arrival slot consecutive slots.
    """
    _check_policy_alpha(policy, model)
    jobs = instance.arrivals
    if not jobs:
        return ScheduleTrace((), {}, policy.name, instance.instance_id)
    if not record_served and not instance.all_unit:
        raise ValueError("record_served=False supports unit-size jobs only")

    jobs_by_slot = instance.jobs_by_slot()
    last_arrival = instance.last_slot
    k_stall = instance.total_work + last_arrival

    unit_fifo = instance.all_unit
    # unit jobs: SRPT reduces to FIFO by (arrival, id); ids already arrive
    # in that order, so a deque of ids suffices
    fifo: deque[int] = deque()
    general: list[list[int]] = []  # [job_id, arrival, remaining]

    def _snapshot() -> tuple[tuple[int, int, int], ...]:
        if unit_fifo:
            return tuple((j, jobs[j][0], 1) for j in fifo)
        return tuple(sorted(((j, a, r) for j, a, r in general),
                            key=lambda rec: (rec[1], rec[0])))

    provider = _snapshot if record_served else None
    slots: list[SlotRecord] = []
    history: list[tuple[int, int, int]] = []
    departures: dict[int, int] = {}
    s_prev = 0
    zero_streak = 0
    t = 0
    n = 0
    empty = frozenset()
    while True:
        t += 1
        for j in jobs_by_slot.get(t, ()):
            if unit_fifo:
                fifo.append(j)
            else:
                general.append([j, jobs[j][0], jobs[j][1]])
            n += 1
        if n == 0 and t > last_arrival:
            break
        n_slot = n  # occupancy during slot t, after arrivals, before departures

        request = policy.decide(ObservableState(t, n_slot, s_prev, provider, history))
        if isinstance(request, bool):
            raise PolicyFaultError(f"{policy.name} returned {request!r} at slot {t}")
        try:
            value = float(request)  # accepts numpy scalars too
        except (TypeError, ValueError):
            raise PolicyFaultError(
                f"{policy.name} returned {request!r} at slot {t}") from None
        if not math.isfinite(value):
            raise PolicyFaultError(f"{policy.name} returned {request!r} at slot {t}")
        request = int(value)

        if request <= 0 and n_slot > 0:
            zero_streak += 1
            if zero_streak >= k_stall:
                raise PolicyStallError(
                    f"{policy.name} idled {zero_streak} slots with work outstanding")
        else:
            zero_streak = 0

        s = min(max(request, 0), n_slot)
        served = empty
        if unit_fifo:
            if record_served:
                picked = [fifo.popleft() for _ in range(s)]
                for j in picked:
                    departures[j] = t
                served = frozenset(picked)
            else:
                for _ in range(s):
                    fifo.popleft()
            n -= s
        else:
            served = srpt_select(_snapshot(), s)
            keep = []
            for rec in general:
                if rec[0] in served:
                    rec[2] -= 1
                    if rec[2] == 0:
                        departures[rec[0]] = t
                        n -= 1
                        continue
                keep.append(rec)
            general = keep

        slots.append(SlotRecord(t, n_slot, s, served))
        history.append((t, n_slot, s))
        s_prev = s

    return ScheduleTrace(tuple(slots), departures, policy.name,
                         instance.instance_id, complete_records=record_served)


def trace_from_server_counts(instance: ArrivalInstance,
                             counts: Sequence[int],
                             policy_name: str = "fixed") -> ScheduleTrace:
    """Materialize a trace from a per-slot server-count sequence.

    Service order is SRPT, matching the engine. counts[i] is the requested
    s at slot i+1 and must never exceed the outstanding count there.
    """

    @dataclass(frozen=True)
    class _Replay:
        schedule: tuple[int, ...]
        name: str = policy_name

        def decide(self, state: ObservableState) -> int:
            idx = state.t - 1
            want = self.schedule[idx] if idx < len(self.schedule) else 0
            if want > state.n:
                raise ValueError(
                    f"replay count {want} exceeds n={state.n} at slot {state.t}")
            return want

    return simulate(instance, _Replay(tuple(int(c) for c in counts)))
