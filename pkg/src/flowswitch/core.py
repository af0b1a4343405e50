"""Domain types for arrival instances, schedule traces, and cost accounting.

Time is slotted, starting at slot 1, with s(0) = 0. Arrivals happen at the
start of a slot and departures at its end, so a job arriving and served in
slot t still contributes one slot of flow time. The final ramp-down to zero
servers after the last busy slot is always charged.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from typing import Mapping


class SwitchingKind(str, Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"


class TraceValidationError(Exception):
    """A cost/oracle operation received a trace that breaks an invariant."""

    def __init__(self, violation: str, slot: int | None = None,
                 job_id: int | None = None, message: str = ""):
        self.violation = violation
        self.slot = slot
        self.job_id = job_id
        detail = message or violation
        where = f" at slot {slot}" if slot is not None else ""
        who = f" (job {job_id})" if job_id is not None else ""
        super().__init__(f"{detail}{where}{who}")


@dataclass(frozen=True)
class ValidationResult:
    """Outcome of validate_trace; failures are values, not exceptions."""

    ok: bool
    violation: str | None = None
    slot: int | None = None
    job_id: int | None = None
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


_VALID = ValidationResult(True)


@dataclass(frozen=True)
class ArrivalInstance:
    """A job arrival schedule: (slot, size) records kept sorted by slot.

    Invariants:
        - every slot >= 1 and every size >= 1
        - records are sorted by slot; ties keep construction order
        - job id j is the index of the j-th record in that order
    """

    arrivals: tuple[tuple[int, int], ...]
    horizon_hint: int | None = None
    name: str = ""

    def __post_init__(self):
        records = []
        for slot, size in self.arrivals:
            if int(slot) != slot or slot < 1:
                raise ValueError(f"arrival slot must be a positive integer, got {slot!r}")
            if int(size) != size or size < 1:
                raise ValueError(f"job size must be a positive integer, got {size!r}")
            records.append((int(slot), int(size)))
        records.sort(key=lambda r: r[0])  # stable: same-slot order preserved
        object.__setattr__(self, "arrivals", tuple(records))
        if self.horizon_hint is not None and self.horizon_hint < self.last_slot:
            raise ValueError("horizon_hint smaller than the last arrival slot")

    @property
    def job_count(self) -> int:
        return len(self.arrivals)

    @property
    def total_work(self) -> int:
        return sum(w for _, w in self.arrivals)

    @property
    def last_slot(self) -> int:
        return self.arrivals[-1][0] if self.arrivals else 0

    @property
    def all_unit(self) -> bool:
        return all(w == 1 for _, w in self.arrivals)

    @property
    def sizes_equal(self) -> bool:
        return len({w for _, w in self.arrivals}) <= 1

    def work_at(self, slot: int) -> int:
        return sum(w for s, w in self.arrivals if s == slot)

    def work_by_slot(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for s, w in self.arrivals:
            out[s] = out.get(s, 0) + w
        return out

    def jobs_by_slot(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for j, (s, _) in enumerate(self.arrivals):
            out.setdefault(s, []).append(j)
        return out

    @property
    def max_slot_arrivals(self) -> int:
        """Largest per-slot arrival count (jobs, not work)."""
        counts: dict[int, int] = {}
        for s, _ in self.arrivals:
            counts[s] = counts.get(s, 0) + 1
        return max(counts.values(), default=0)

    @property
    def instance_id(self) -> str:
        if self.name:
            return self.name
        digest = hashlib.sha256(repr(self.arrivals).encode()).hexdigest()[:8]
        return f"custom-{digest}"

    def to_text(self) -> str:
        lines = [f"# instance {self.instance_id}: {self.job_count} jobs"]
        lines += [f"{s} {w}" for s, w in self.arrivals]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, name: str = "") -> "ArrivalInstance":
        records = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 't w', got {raw!r}")
            records.append((int(parts[0]), int(parts[1])))
        return cls(tuple(records), name=name)

    @classmethod
    def from_file(cls, path, name: str = "") -> "ArrivalInstance":
        with open(path) as fh:
            return cls.from_text(fh.read(), name=name or str(path))


@dataclass(frozen=True)
class CostModel:
    """Switching-cost family plus the tradeoff weight alpha.

    theta is an optional energy weight charged as theta * sum(s(t)); it is
    pure accounting and never enters competitive-ratio comparisons.
    """

    switching: SwitchingKind
    alpha: float
    theta: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.theta < 0:
            raise ValueError(f"theta must be nonnegative, got {self.theta}")
        object.__setattr__(self, "switching", SwitchingKind(self.switching))

    def transition_cost(self, s_prev: float, s_new: float) -> float:
        """Unweighted switching cost c(s_new, s_prev)."""
        delta = s_new - s_prev
        if self.switching is SwitchingKind.LINEAR:
            return abs(delta)
        return delta * delta

    @classmethod
    def linear(cls, alpha: float, theta: float = 0.0) -> "CostModel":
        return cls(SwitchingKind.LINEAR, alpha, theta)

    @classmethod
    def quadratic(cls, alpha: float, theta: float = 0.0) -> "CostModel":
        return cls(SwitchingKind.QUADRATIC, alpha, theta)

    @classmethod
    def parse(cls, spec: str) -> "CostModel":
        """Parse 'linear:alpha=1' / 'quad:alpha=2,theta=0.5'."""
        kind, _, rest = spec.partition(":")
        kind = kind.strip().lower()
        kinds = {"linear": SwitchingKind.LINEAR, "quad": SwitchingKind.QUADRATIC,
                 "quadratic": SwitchingKind.QUADRATIC}
        if kind not in kinds:
            raise ValueError(f"unknown switching kind {kind!r}")
        kwargs = {"alpha": 1.0}
        if rest.strip():
            for item in rest.split(","):
                key, _, value = item.partition("=")
                key = key.strip()
                if key not in ("alpha", "theta"):
                    raise ValueError(f"unknown cost-model parameter {key!r}")
                kwargs[key] = float(value)
        return cls(kinds[kind], **kwargs)

    @property
    def label(self) -> str:
        base = f"{self.switching.value}:alpha={self.alpha:g}"
        return base if self.theta == 0 else base + f",theta={self.theta:g}"


@dataclass(frozen=True)
class SlotRecord:
    """One slot of a schedule: occupancy n, active servers s, served job ids."""

    t: int
    n: int
    s: int
    served: frozenset[int] = frozenset()


@dataclass(frozen=True)
class ScheduleTrace:
    """Per-slot record of a complete schedule plus per-job departure slots.

    Slots run contiguously from t=1; idle slots (n=0, s=0) are recorded.
    ``complete_records`` is False for bulk simulation runs that skip per-job
    bookkeeping; such traces cost fine but cannot be validated.
    """

    slots: tuple[SlotRecord, ...]
    departures: Mapping[int, int]
    policy_name: str = ""
    instance_id: str = ""
    complete_records: bool = True

    @property
    def last_slot(self) -> int:
        return self.slots[-1].t if self.slots else 0

    def server_counts(self) -> tuple[int, ...]:
        return tuple(rec.s for rec in self.slots)

    def occupancies(self) -> tuple[int, ...]:
        return tuple(rec.n for rec in self.slots)

    def to_csv(self) -> str:
        lines = ["t,n,s,served_ids"]
        for rec in self.slots:
            ids = ";".join(str(j) for j in sorted(rec.served))
            lines.append(f"{rec.t},{rec.n},{rec.s},{ids}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, policy_name: str = "",
                 instance_id: str = "") -> "ScheduleTrace":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0].split(",")[:3] != ["t", "n", "s"]:
            raise ValueError("trace CSV must start with header 't,n,s,served_ids'")
        slots = []
        last_served: dict[int, int] = {}
        for ln in lines[1:]:
            t_s, n_s, s_s, ids = (ln.split(",", 3) + [""])[:4]
            served = frozenset(int(x) for x in ids.split(";") if x != "")
            rec = SlotRecord(int(t_s), int(n_s), int(s_s), served)
            for j in served:
                last_served[j] = rec.t
            slots.append(rec)
        return cls(tuple(slots), last_served, policy_name, instance_id)


@dataclass(frozen=True)
class CostBreakdown:
    """Flow time, switching, and energy parts of the slotted objective.

    switching_cost is the unweighted sum of c(s(t), s(t-1)); total applies
    alpha. energy_cost already includes theta.
    """

    flow_time: int
    switching_cost: float
    energy_cost: float
    total: float
    alpha: float
    switching_kind: SwitchingKind

    @classmethod
    def zero(cls, model: CostModel) -> "CostBreakdown":
        return cls(0, 0.0, 0.0, 0.0, model.alpha, model.switching)

    def to_json_dict(self) -> dict:
        return {
            "flow_time": self.flow_time,
            "switching_cost": self.switching_cost,
            "energy_cost": self.energy_cost,
            "total": self.total,
            "alpha": self.alpha,
            "switching_kind": self.switching_kind.value,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def cost_of_trace(trace: ScheduleTrace, model: CostModel) -> CostBreakdown:
    """Evaluate flow + alpha * switching + energy over a trace.

    All transitions are charged, including 0 -> s(1) and the final drop back
    to zero. Raises TraceValidationError on internally inconsistent slots;
    full validation against an instance is validate_trace's job.
    """
    flow = 0
    switching = 0.0
    servers = 0
    prev = 0
    for rec in trace.slots:
        if rec.n < 0:
            raise TraceValidationError("negative_occupancy", slot=rec.t)
        if rec.s < 0 or rec.s > rec.n:
            raise TraceValidationError(
                "s_le_n", slot=rec.t,
                message=f"s={rec.s} exceeds n={rec.n}")
        flow += rec.n
        switching += model.transition_cost(prev, rec.s)
        servers += rec.s
        prev = rec.s
    switching += model.transition_cost(prev, 0)  # c(0,0)=0 when already idle
    energy = model.theta * servers
    total = flow + model.alpha * switching + energy
    return CostBreakdown(flow, switching, energy, total, model.alpha, model.switching)


def validate_trace(instance: ArrivalInstance, trace: ScheduleTrace) -> ValidationResult:
    """Check every trace invariant against the instance.

    Returns the first violation found, scanning slots in order. Per slot the
    checks run in this order: work neutrality (realized service never ahead
    of arrived work, no service before arrival), s <= n, served-count = s,
    no service beyond a job's size. Global checks follow: every job finishes
    exactly, recorded departures match, and the n(t) column is consistent.
    """
    if not trace.complete_records:
        return ValidationResult(False, "incomplete_records",
                                message="trace was recorded without per-job service sets")
    jobs = instance.arrivals
    job_ids = range(len(jobs))
    work_by_slot = instance.work_by_slot()

    served_units = {j: 0 for j in job_ids}
    last_service: dict[int, int] = {}
    cum_work = 0
    cum_served = 0
    arrived = 0
    completed_before = 0  # jobs fully served by slot t-1
    next_job = 0

    expected_t = 1
    for rec in trace.slots:
        if rec.t != expected_t:
            return ValidationResult(False, "slot_indexing", slot=rec.t,
                                    message=f"expected slot {expected_t}, got {rec.t}")
        expected_t += 1
        t = rec.t
        while next_job < len(jobs) and jobs[next_job][0] <= t:
            arrived += 1
            next_job += 1
        cum_work += work_by_slot.get(t, 0)

        for j in rec.served:
            if j not in served_units:
                return ValidationResult(False, "unknown_job", slot=t, job_id=j,
                                        message=f"served id {j} is not an instance job")
        cum_served += len(rec.served)
        if cum_served > cum_work or any(jobs[j][0] > t for j in rec.served):
            return ValidationResult(False, "work_neutrality", slot=t,
                                    message="cumulative service exceeds arrived work")

        n_true = arrived - completed_before
        if rec.n != n_true:
            return ValidationResult(False, "occupancy_mismatch", slot=t,
                                    message=f"recorded n={rec.n}, actual {n_true}")
        if rec.s > rec.n or rec.s < 0:
            return ValidationResult(False, "s_le_n", slot=t,
                                    message=f"s={rec.s} with n={rec.n}")
        if len(rec.served) != rec.s:
            return ValidationResult(False, "served_count", slot=t,
                                    message=f"{len(rec.served)} jobs served with s={rec.s}")

        for j in rec.served:
            served_units[j] += 1
            if served_units[j] > jobs[j][1]:
                return ValidationResult(False, "overservice", slot=t, job_id=j,
                                        message="service beyond job size")
            last_service[j] = t
            if served_units[j] == jobs[j][1]:
                completed_before += 1

    for j in job_ids:
        if served_units[j] != jobs[j][1]:
            return ValidationResult(False, "incomplete_job", job_id=j,
                                    message=f"job {j} received {served_units[j]}/{jobs[j][1]} units")
        d = trace.departures.get(j)
        if d is None or d != last_service[j]:
            return ValidationResult(False, "departure_mismatch", job_id=j,
                                    message=f"recorded departure {d}, actual {last_service.get(j)}")
        if d < jobs[j][0]:
            return ValidationResult(False, "departure_before_arrival", job_id=j)
    if next_job < len(jobs):
        return ValidationResult(False, "truncated_trace",
                                message="trace ends before all arrivals")
    return _VALID
