"""Experiment harness: run policies on instances, compare against oracles,
and reproduce the numerical-study tables as CSV.

Exit codes: 0 success, 1 usage, 2 validation/input error, 3 oracle budget.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass

from .core import ArrivalInstance, CostModel, cost_of_trace
from .engine import simulate
from .instances import parse_instance_spec, random_slotted
from .oracle import (DpBudgetError, DpConfig, dp_opt, dual_lower_bound,
                     state_budget)
from .policies import (BalanceDelta, BalanceValue, FullParallel, GammaPolicy,
                       QuadAlg, QuadBalance, make_policy)
from .stochastic import (Alg3Params, alg1, alg2, alg3_analytic_cost,
                         analytic_cost, scaling_exponent, simulate_alg3,
                         simulate_ctmc)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_BUDGET = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise _UsageError(message)


def _load_instance(spec: str) -> ArrivalInstance:
    if os.path.exists(spec):
        return ArrivalInstance.from_file(spec)
    return parse_instance_spec(spec)


def _read_config(path: str) -> dict[str, list[str]]:
    """Declarative key = value lines; keys may repeat (policy)."""
    out: dict[str, list[str]] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, value = line.partition("=")
            if not eq:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            out.setdefault(key.strip(), []).append(value.strip())
    return out


def _with_seed(instance_spec: str, seed: int) -> str:
    """Override the seed parameter of a random instance spec."""
    if not instance_spec.startswith("random"):
        return instance_spec
    if "seed=" not in instance_spec:
        return f"{instance_spec},seed={seed}"
    head, _, tail = instance_spec.partition("seed=")
    rest = tail.partition(",")[2]
    return f"{head}seed={seed}" + (f",{rest}" if rest else "")


def _repeated_specs(instance_spec: str, reps: int) -> list[str]:
    """Expand a seeded random spec into reps variants with bumped seeds."""
    if reps <= 1:
        return [instance_spec]
    if not instance_spec.startswith("random") or "seed=" not in instance_spec:
        raise ValueError("reps > 1 needs a random:...,seed=... instance spec")
    base_seed = int(float(instance_spec.partition("seed=")[2].split(",", 1)[0]))
    return [_with_seed(instance_spec, base_seed + i) for i in range(reps)]


def _write(path: str | None, text: str):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_gen(args) -> int:
    instance = parse_instance_spec(args.spec)
    _write(args.output, instance.to_text())
    return EXIT_OK


@dataclass
class ExperimentConfig:
    """One run request: instance, policies, cost model, oracle toggles.

    Built by merging command-line flags over an optional declarative config
    file; flags win. At least one policy is required, and any policy alpha
    must agree with the cost model's (the simulator enforces it).
    """

    instance_spec: str
    policy_specs: list[str]
    model: CostModel
    oracles: set[str]
    seed: int | None = None
    reps: int = 1
    out_dir: str | None = None
    dp_s_cap: int | None = None
    dp_t_cap: int | None = None
    dual_beta: float = math.sqrt(3.0)

    @classmethod
    def from_args(cls, args) -> "ExperimentConfig":
        policy_specs = list(args.policy or [])
        instance_spec = args.instance
        model_spec = args.model
        oracles = set(args.oracle or [])
        seed, reps = args.seed, args.reps
        if args.config:
            cfg = _read_config(args.config)
            instance_spec = instance_spec or cfg.get("instance", [None])[0]
            model_spec = model_spec or cfg.get("model", [None])[0]
            policy_specs = policy_specs or cfg.get("policy", [])
            oracles |= set(cfg.get("oracle", []))
            if seed is None and "seed" in cfg:
                seed = int(cfg["seed"][0])
            if reps is None and "reps" in cfg:
                reps = int(cfg["reps"][0])
        if not instance_spec:
            raise _UsageError("an instance is required (flag or config)")
        if not policy_specs:
            raise _UsageError("at least one policy is required")
        if seed is not None:
            instance_spec = _with_seed(instance_spec, seed)
        return cls(instance_spec, policy_specs,
                   CostModel.parse(model_spec or "quad:alpha=1"), oracles,
                   seed, reps or 1, args.out_dir, args.s_cap, args.t_cap,
                   args.beta)


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.from_args(args)
    model = cfg.model
    instance_specs = _repeated_specs(cfg.instance_spec, cfg.reps)

    report: dict = {"instance": cfg.instance_spec, "model": model.label,
                    "reps": len(instance_specs), "policies": []}
    if cfg.seed is not None:
        report["seed"] = cfg.seed
    per_policy: dict[str, list[dict]] = {}
    dp_costs = []
    for rep_spec in instance_specs:
        instance = _load_instance(rep_spec)
        opt_cost = None
        if "dp" in cfg.oracles:
            opt_cost, opt_trace = dp_opt(
                instance, model, DpConfig(s_cap=cfg.dp_s_cap, t_cap=cfg.dp_t_cap))
            dp_costs.append(opt_cost)
            if cfg.out_dir:
                _write(os.path.join(cfg.out_dir, "dp_opt_trace.csv"),
                       opt_trace.to_csv())
        for spec in cfg.policy_specs:
            policy = make_policy(spec, default_alpha=model.alpha)
            trace = simulate(instance, policy, model)
            breakdown = cost_of_trace(trace, model)
            entry = {**breakdown.to_json_dict(), "jobs": instance.job_count}
            if opt_cost is not None:
                entry["ratio"] = 1.0 if opt_cost == 0 else \
                    breakdown.total / opt_cost
            if "dual" in cfg.oracles:
                beta = getattr(policy, "beta", cfg.dual_beta)
                cert = dual_lower_bound(instance, model.alpha, beta)
                entry["dual"] = cert.to_json_dict()
            per_policy.setdefault(policy.name, []).append(entry)
            if args.verbose:
                for rec in trace.slots:
                    print(json.dumps({"t": rec.t, "n": rec.n, "s": rec.s,
                                      "served": sorted(rec.served)}),
                          file=sys.stderr)
            if cfg.out_dir:
                safe = policy.name.replace("(", "_").replace(")", "") \
                    .replace(",", "_")
                _write(os.path.join(cfg.out_dir, f"trace_{safe}.csv"),
                       trace.to_csv())
    if dp_costs:
        report["dp_opt"] = dp_costs[0] if len(dp_costs) == 1 else {
            "mean": sum(dp_costs) / len(dp_costs), "values": dp_costs}
    for name, entries in per_policy.items():
        merged = dict(entries[0]) if len(entries) == 1 else {
            "mean_total": sum(e["total"] for e in entries) / len(entries),
            "runs": entries,
        }
        if len(entries) > 1 and all("ratio" in e for e in entries):
            merged["max_ratio"] = max(e["ratio"] for e in entries)
        report["policies"].append({"policy": name, **merged})
    print(json.dumps(report, indent=2))
    return EXIT_OK


def _cmd_opt(args) -> int:
    instance = _load_instance(args.instance)
    model = CostModel.parse(args.model)
    cost, trace = dp_opt(instance, model, DpConfig(s_cap=args.s_cap, t_cap=args.t_cap))
    print(json.dumps({"instance": instance.instance_id, "model": model.label,
                      "cost": cost}, indent=2))
    _write(args.output, trace.to_csv())
    return EXIT_OK


def _cmd_dual(args) -> int:
    instance = _load_instance(args.instance)
    cert = dual_lower_bound(instance, args.alpha, args.beta)
    print(json.dumps(cert.to_json_dict(), indent=2))
    return EXIT_OK


def _cmd_stochastic(args) -> int:
    if args.policy == "alg1":
        policy = alg1()
    elif args.policy == "alg2":
        policy = alg2(args.alpha)
    elif args.policy != "alg3":
        raise _UsageError(f"unknown stochastic policy {args.policy!r}")
    if args.policy == "alg3":
        params = Alg3Params.from_rates(args.lam, args.c1, args.c2,
                                       args.theta1, args.theta2)
        if args.mode == "analytic":
            estimate = alg3_analytic_cost(args.lam, args.alpha, params)
        else:
            estimate = simulate_alg3(args.lam, args.alpha, params,
                                     cycle_budget=args.cycles, seed=args.seed)
    elif args.mode == "analytic":
        estimate = analytic_cost(args.lam, args.alpha, policy)
    else:
        estimate = simulate_ctmc(args.lam, args.alpha, policy,
                                 event_budget=args.events, seed=args.seed)
    print(json.dumps(estimate.to_json_dict(), indent=2))
    return EXIT_OK


def _parse_grid(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _cmd_sweep(args) -> int:
    buf = io.StringIO()
    writer = csv.writer(buf)
    if args.kind == "gamma":
        gammas = _parse_grid(args.gammas or "")
        alphas = _parse_grid(args.alphas or "")
        cells = len(gammas) * len(alphas)
        if cells > args.max_cells:
            raise DpBudgetError(cells, args.max_cells)
        writer.writerow(["gamma", "alpha", "policy_cost", "dp_cost", "ratio"])
        instance = _load_instance(args.instance) if cells else None
        for gamma in gammas:
            for alpha in alphas:
                model = CostModel.linear(alpha)
                policy = GammaPolicy(alpha=alpha, gamma=gamma)
                total = cost_of_trace(simulate(instance, policy), model).total
                opt_cost, _ = dp_opt(instance, model,
                                     DpConfig(s_cap=args.s_cap, t_cap=args.t_cap))
                writer.writerow([f"{gamma:g}", f"{alpha:g}", f"{total:.6g}",
                                 f"{opt_cost:.6g}", f"{total / opt_cost:.6g}"])
    elif args.kind == "alg3":
        lams = _parse_grid(args.lambdas or "")
        if len(lams) > args.max_cells:
            raise DpBudgetError(len(lams), args.max_cells)
        writer.writerow(["lambda", "cost", "slope"])
        samples = []
        for lam in lams:
            params = Alg3Params.from_rates(lam, args.c1, args.c2,
                                           args.theta1, args.theta2)
            cost = alg3_analytic_cost(lam, args.alpha, params).total
            samples.append((lam, cost))
        slope = scaling_exponent(samples) if len(samples) >= 4 else ""
        for lam, cost in samples:
            writer.writerow([f"{lam:g}", f"{cost:.6g}",
                             f"{slope:.6g}" if slope != "" else ""])
    else:
        raise _UsageError(f"unknown sweep kind {args.kind!r}")
    _write(args.output, buf.getvalue())
    return EXIT_OK


FIGURE_IDS = ("linear_a1", "linear_a2", "linear_a4",
              "quad_a1", "quad_a2", "quad_extreme")


def figure_policies(figure_id: str, alpha: float):
    if figure_id == "linear_a1":
        return [("s=n", FullParallel()),
                ("balance_delta", BalanceDelta(alpha=1.0)),
                ("s=n/2", BalanceValue(alpha=2.0))]
    if figure_id in ("linear_a2", "linear_a4"):
        return [("balance_value", BalanceValue(alpha=alpha)),
                ("balance_delta", BalanceDelta(alpha=1.0)),
                ("proposed", GammaPolicy(alpha=alpha, gamma=0.25))]
    if figure_id in ("quad_a1", "quad_a2"):
        return [("beta=1", QuadAlg(alpha=alpha, beta=1.0)),
                ("beta=sqrt3", QuadAlg(alpha=alpha, beta=math.sqrt(3.0))),
                ("beta=2", QuadAlg(alpha=alpha, beta=2.0)),
                ("beta=4", QuadAlg(alpha=alpha, beta=4.0)),
                ("quad_balance", QuadBalance(alpha=alpha))]
    if figure_id == "quad_extreme":
        return [("beta=sqrt3", QuadAlg(alpha=alpha, beta=math.sqrt(3.0))),
                ("beta=2", QuadAlg(alpha=alpha, beta=2.0)),
                ("beta=4", QuadAlg(alpha=alpha, beta=4.0)),
                ("quad_balance", QuadBalance(alpha=alpha))]
    raise ValueError(f"unknown figure id {figure_id!r}")


def figure_setup(figure_id: str) -> tuple[CostModel, tuple[float, ...], int]:
    """(cost model, default rates, default horizon) for a figure."""
    if figure_id not in FIGURE_IDS:
        raise ValueError(f"unknown figure id {figure_id!r}")
    alpha = {"linear_a1": 1.0, "linear_a2": 2.0, "linear_a4": 4.0,
             "quad_a1": 1.0, "quad_a2": 2.0, "quad_extreme": 2.0}[figure_id]
    linear = figure_id.startswith("linear")
    model = CostModel.linear(alpha) if linear else CostModel.quadratic(alpha)
    if figure_id == "quad_extreme":
        # horizon 100 best matches the published bar values
        return model, (1000.0,), 100
    return model, (5.0, 10.0, 15.0, 20.0), 400


def reproduce_figure(figure_id: str, seeds=(1, 2, 3), horizon: int | None = None,
                     rates=None):
    """Per-(rate, policy) normalized cost rows plus the figure's ordering checks.

    Costs are (flow + alpha * switching) / horizon, averaged over seeds, with
    every policy run on the same seeded instances.
    """
    model, default_rates, default_t = figure_setup(figure_id)
    horizon = horizon or default_t
    rates = tuple(rates) if rates else default_rates
    policies = figure_policies(figure_id, model.alpha)
    rows = []
    means: dict[tuple[float, str], float] = {}
    for rate in rates:
        sums = {label: 0.0 for label, _ in policies}
        for seed in seeds:
            instance = random_slotted(rate, horizon, seed)
            for label, policy in policies:
                trace = simulate(instance, policy, record_served=False)
                breakdown = cost_of_trace(trace, model)
                cost = (breakdown.flow_time
                        + model.alpha * breakdown.switching_cost) / horizon
                sums[label] += cost
        for label, _ in policies:
            mean = sums[label] / len(seeds)
            means[(rate, label)] = mean
            rows.append({"figure": figure_id, "rate": rate, "policy": label,
                         "normalized_cost": mean, "seeds": len(seeds),
                         "horizon": horizon})

    checks = []
    if figure_id in ("linear_a2", "linear_a4"):
        for rate in rates:
            p = means[(rate, "proposed")]
            ok = p <= means[(rate, "balance_value")] and \
                p <= means[(rate, "balance_delta")]
            checks.append((f"proposed<=balances@rate={rate:g}", ok,
                           f"proposed={p:.4g} bal_value={means[(rate, 'balance_value')]:.4g} "
                           f"bal_delta={means[(rate, 'balance_delta')]:.4g}"))
    if figure_id == "linear_a1":
        for rate in rates:
            a, b = means[(rate, "s=n")], means[(rate, "balance_delta")]
            half = means[(rate, "s=n/2")]
            ok = abs(a - b) <= 0.05 * max(a, b) and a < half and b < half
            checks.append((f"full~balance<half@rate={rate:g}", ok,
                           f"s=n={a:.4g} balance_delta={b:.4g} s=n/2={half:.4g}"))
    if figure_id == "quad_extreme":
        for rate in rates:
            ratio = means[(rate, "beta=2")] / means[(rate, "quad_balance")]
            checks.append((f"beta2/balance<2@rate={rate:g}", ratio < 2.0,
                           f"ratio={ratio:.4g}"))
    return rows, checks


def _cmd_reproduce_figure(args) -> int:
    rates = _parse_grid(args.rates) if args.rates else None
    seeds = tuple(int(s) for s in args.seeds.split(","))
    rows, checks = reproduce_figure(args.figure, seeds=seeds,
                                    horizon=args.horizon, rates=rates)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    writer.writerows(rows)
    _write(args.output, buf.getvalue())
    for name, ok, detail in checks:
        print(f"check {name}: {'ok' if ok else 'VIOLATED'} ({detail})",
              file=sys.stderr)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="flowswitch",
                     description="Flow-time plus switching-cost scheduling lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="emit an instance file")
    p.add_argument("spec", help="e.g. batch:N=4 periodic:x=4,k=50 random:rate=5,T=100,seed=1")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("run", help="run policies on an instance")
    p.add_argument("--instance")
    p.add_argument("--policy", action="append")
    p.add_argument("--model")
    p.add_argument("--oracle", action="append", choices=["dp", "dual"])
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--beta", type=float, default=math.sqrt(3.0),
                   help="beta for the dual oracle when the policy has none")
    p.add_argument("--s-cap", type=int)
    p.add_argument("--t-cap", type=int)
    p.add_argument("--out-dir")
    p.add_argument("-v", "--verbose", action="store_true",
                   help="stream per-slot JSON events to stderr")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("opt", help="offline optimal cost and trace")
    p.add_argument("--instance", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--s-cap", type=int)
    p.add_argument("--t-cap", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_opt)

    p = sub.add_parser("dual", help="primal-dual lower-bound certificate")
    p.add_argument("--instance", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.set_defaults(func=_cmd_dual)

    p = sub.add_parser("stochastic", help="continuous-time model costs")
    p.add_argument("--policy", required=True, choices=["alg1", "alg2", "alg3"])
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--mode", choices=["analytic", "simulate"], default="analytic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--events", type=int, default=1_000_000)
    p.add_argument("--cycles", type=int, default=200)
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c2", type=float, default=1.0)
    p.add_argument("--theta1", type=float, default=2.0 / 3.0)
    p.add_argument("--theta2", type=float, default=1.0 / 3.0)
    p.set_defaults(func=_cmd_stochastic)

    p = sub.add_parser("sweep", help="grid experiments as CSV")
    p.add_argument("--kind", required=True, choices=["gamma", "alg3"])
    p.add_argument("--instance", help="instance spec for gamma sweeps")
    p.add_argument("--gammas")
    p.add_argument("--alphas")
    p.add_argument("--lambdas")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c2", type=float, default=1.0)
    p.add_argument("--theta1", type=float, default=2.0 / 3.0)
    p.add_argument("--theta2", type=float, default=1.0 / 3.0)
    p.add_argument("--s-cap", type=int)
    p.add_argument("--t-cap", type=int)
    p.add_argument("--max-cells", type=int, default=min(state_budget(), 10_000))
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("reproduce-figure", help="numerical-study tables as CSV")
    p.add_argument("--figure", required=True, choices=list(FIGURE_IDS))
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--rates")
    p.add_argument("--horizon", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_reproduce_figure)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DpBudgetError as exc:
        print(f"oracle budget error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
