import itertools
import math
import random

import pytest

from flowswitch import (ArrivalInstance, CostModel, DpBudgetError, DpConfig,
                        OracleSizeError, UnsupportedInstanceError,
                        convex_batch_solve, cost_of_trace, delta_flow, dp_opt,
                        dual_bound_from_flow, dual_lower_bound, exhaustive_opt,
                        simulate, validate_trace)
from flowswitch.instances import batch, sigma1
from flowswitch.policies import (BalanceDelta, FullParallel, QuadAlg,
                                 SqrtOnline, burst_objective)


def tiny_instances(max_jobs=4, max_slot=3, budget_slots=6):
    """Every sorted multiset of arrival slots fitting the exhaustive guard."""
    out = [ArrivalInstance(())]
    for n_jobs in range(1, max_jobs + 1):
        for slots in itertools.combinations_with_replacement(
                range(1, max_slot + 1), n_jobs):
            if slots[-1] + n_jobs <= budget_slots:
                out.append(ArrivalInstance(tuple((s, 1) for s in slots)))
    return out


class TestDpOpt:
    def test_single_job_quadratic(self):
        cost, trace = dp_opt(batch(1), CostModel.quadratic(1))
        assert cost == 3
        assert trace.server_counts() == (1,)

    def test_two_jobs_quadratic(self):
        cost, trace = dp_opt(batch(2), CostModel.quadratic(1))
        assert cost == 5
        assert trace.server_counts() == (1, 1)

    def test_two_jobs_linear(self):
        cost, _ = dp_opt(batch(2), CostModel.linear(1))
        assert cost == 5

    def test_trace_is_valid_and_consistent(self, small_corpus):
        for inst in small_corpus[:15]:
            for model in (CostModel.linear(1), CostModel.quadratic(0.5)):
                cost, trace = dp_opt(inst, model, DpConfig(s_cap=inst.job_count))
                assert validate_trace(inst, trace).ok
                assert cost_of_trace(trace, model).total == pytest.approx(cost)

    def test_non_unit_rejected(self):
        with pytest.raises(UnsupportedInstanceError):
            dp_opt(ArrivalInstance(((1, 2),)), CostModel.linear(1))

    def test_budget_error_carries_requirement(self):
        with pytest.raises(DpBudgetError) as err:
            dp_opt(batch(10), CostModel.linear(1), DpConfig(budget=10))
        assert err.value.required > 10

    def test_beats_every_policy(self, small_corpus):
        policies = [FullParallel(), QuadAlg(alpha=2.0, beta=1.0),
                    SqrtOnline(alpha=2.0), BalanceDelta(alpha=2.0)]
        for inst in small_corpus[:20]:
            for model in (CostModel.linear(2), CostModel.quadratic(2)):
                opt, _ = dp_opt(inst, model, DpConfig(s_cap=inst.job_count))
                for policy in policies:
                    total = cost_of_trace(simulate(inst, policy), model).total
                    assert opt <= total + 1e-9

    def test_dp_idles_when_waiting_is_cheaper(self):
        # high quadratic alpha: merging two spread singletons beats serving eagerly
        inst = ArrivalInstance(((1, 1), (10, 1)))
        model = CostModel.quadratic(8)
        cost, trace = dp_opt(inst, model)
        eager = cost_of_trace(simulate(inst, FullParallel()), model).total
        assert cost < eager
        assert trace.server_counts()[0] == 0


class TestExhaustive:
    def test_matches_dp_on_slice(self):
        insts = tiny_instances()[::5]
        for inst in insts:
            for model in (CostModel.linear(0.5), CostModel.quadratic(2)):
                exh = exhaustive_opt(inst, model)
                dp, _ = dp_opt(inst, model, DpConfig(s_cap=max(inst.job_count, 1)))
                assert exh == dp

    def test_single_job_half_alpha(self):
        assert exhaustive_opt(batch(1), CostModel.linear(0.5)) == 2.0

    def test_empty(self):
        assert exhaustive_opt(ArrivalInstance(()), CostModel.linear(1)) == 0.0

    def test_size_guard(self):
        with pytest.raises(OracleSizeError):
            exhaustive_opt(batch(7), CostModel.linear(1))
        with pytest.raises(OracleSizeError):
            exhaustive_opt(batch(2), CostModel.linear(1), t_cap=9)


class TestDeltaFlow:
    def test_single_job(self):
        assert delta_flow(batch(1), 0, 1.0, 1.0) == 1

    def test_last_job_of_batch_matches_its_flow(self):
        inst = batch(6)
        policy = QuadAlg(alpha=1.0, beta=1.0)
        trace = simulate(inst, policy)
        flow_last = trace.departures[5] - 1 + 1
        assert delta_flow(inst, 5, 1.0, 1.0) == flow_last

    def test_never_exceeds_own_flow(self):
        # increase is at most the job's flow in the truncated run; an arrival
        # can speed earlier jobs up, so equality is not guaranteed
        rng = random.Random(3)
        for _ in range(80):
            n_jobs = rng.randint(1, 9)
            slots = sorted(rng.randint(1, 9) for _ in range(n_jobs))
            inst = ArrivalInstance(tuple((s, 1) for s in slots))
            alpha = rng.choice([0.5, 1.0, 4.0])
            beta = rng.choice([1.0, 2.177])
            j = rng.randrange(n_jobs)
            prefix = ArrivalInstance(inst.arrivals[: j + 1])
            trace = simulate(prefix, QuadAlg(alpha=alpha, beta=beta))
            own_flow = trace.departures[j] - inst.arrivals[j][0] + 1
            assert delta_flow(inst, j, alpha, beta) <= own_flow

    def test_strictly_below_own_flow_when_peers_speed_up(self):
        # 5th job lifts the server count 2 -> 3, finishing job 3 a slot
        # earlier, so the net flow increase is below the job's own flow
        inst = batch(5)
        trace = simulate(inst, QuadAlg(alpha=1.0, beta=1.0))
        own_flow = trace.departures[4] - 1 + 1
        assert delta_flow(inst, 4, 1.0, 1.0) == 1
        assert own_flow == 2

    def test_increments_telescope_to_total_flow(self):
        inst = ArrivalInstance(((1, 1), (1, 1), (2, 1), (4, 1), (4, 1)))
        total = sum(delta_flow(inst, j, 1.0, 1.0) for j in range(5))
        flow = sum(rec.n for rec in simulate(inst, QuadAlg(alpha=1.0)).slots)
        assert total == flow

    def test_domain_checks(self):
        with pytest.raises(ValueError):
            delta_flow(batch(2), 5, 1.0, 1.0)
        with pytest.raises(UnsupportedInstanceError):
            delta_flow(ArrivalInstance(((1, 1), (1, 2))), 0, 1.0, 1.0)


class TestDualCertificate:
    def test_bound_formula(self):
        assert dual_bound_from_flow(40, math.sqrt(3.0)) == pytest.approx(10.0)

    def test_degenerate_beta_flagged(self):
        with pytest.warns(RuntimeWarning):
            cert = dual_lower_bound(batch(3), 1.0, 1.4)
        assert cert.degenerate
        assert cert.bound <= 0

    def test_weak_duality_small_batch(self):
        cert = dual_lower_bound(batch(4), 1.0, math.sqrt(3.0))
        opt, _ = dp_opt(batch(4), CostModel.quadratic(1.0))
        assert not cert.degenerate
        assert cert.bound <= opt

    def test_slack_never_positive(self, small_corpus):
        for inst in small_corpus[:25]:
            for beta in (math.sqrt(3.0), 2.177):
                cert = dual_lower_bound(inst, 2.0, beta)
                assert cert.per_pair_slack <= 1e-12

    def test_json_round_trip_fields(self):
        cert = dual_lower_bound(batch(2), 1.0, 2.177)
        payload = cert.to_json_dict()
        assert set(payload) == {"lambdas", "flow_alg", "alpha", "beta",
                                "bound", "per_pair_slack", "degenerate"}


class TestConvexBatchSolve:
    def test_zero_profile(self):
        sol = convex_batch_solve(0.0, 4)
        assert sol.profile == (0.0,) * 4

    def test_kkt_residual_contract(self):
        for n, h, alpha in ((4.0, 6, 1.0), (16.0, 12, 2.0), (1.0, 1, 1.0),
                            (7.5, 20, 0.5)):
            sol = convex_batch_solve(n, h, alpha)
            assert sol.kkt_residual <= 1e-8
            assert sum(sol.profile) == pytest.approx(n, abs=1e-8)
            assert min(sol.profile) >= -1e-12

    def test_single_slot_case(self):
        sol = convex_batch_solve(1.0, 1, 1.0)
        assert sol.profile == pytest.approx((1.0,))
        assert sol.objective == pytest.approx(2.0)  # flow term 0, two unit jumps

    def test_optimal_against_perturbations(self):
        rng = random.Random(5)
        sol = convex_batch_solve(4.0, 6, 1.0)
        base = list(sol.profile)
        for _ in range(300):
            delta = [rng.uniform(-1, 1) for _ in range(6)]
            mean = sum(delta) / 6
            cand = [max(0.0, v + 0.02 * (d - mean)) for v, d in zip(base, delta)]
            scale = 4.0 / sum(cand)
            cand = [v * scale for v in cand]
            assert burst_objective(cand, 4.0, 6) >= sol.objective - 1e-9

    def test_alpha_scales_smoothing(self):
        rough = convex_batch_solve(9.0, 8, 0.1).profile
        smooth = convex_batch_solve(9.0, 8, 50.0).profile
        assert max(rough) > max(smooth)  # heavy switching weight flattens

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            convex_batch_solve(-1.0, 3)
        with pytest.raises(ValueError):
            convex_batch_solve(1.0, 0)


class TestRatioEnvelope:
    def test_theoretical_ratio_constant(self):
        beta = 2.177
        ratio = (1 + 2 * beta ** 2) * 4 * beta ** 2 / (4 * beta ** 2 - 9)
        assert ratio == pytest.approx(19.95, abs=0.01)

    def test_sigma1_ratio_grows_without_sqrt_scaling(self):
        # gamma < 1/4 deteriorates as alpha grows (single-burst input)
        ratios = []
        for alpha in (16.0, 81.0, 256.0):
            model = CostModel.linear(alpha)
            inst = sigma1(12)
            total = cost_of_trace(simulate(inst, FullParallel()), model).total
            opt, _ = dp_opt(inst, model, DpConfig(s_cap=12))
            ratios.append(total / opt)
        assert ratios[0] < ratios[1] < ratios[2]

    def test_sigma2_ratio_grows_for_large_gamma(self):
        # gamma >= 1/4 deteriorates as alpha grows (sustained input): the
        # occupancy parks near (alpha^gamma - 1) N while the offline cost
        # stays near N per slot
        from flowswitch.instances import sigma2
        from flowswitch.policies import GammaPolicy

        # horizon must dominate alpha for the sustained-load effect to show
        inst = sigma2(4, 60)
        ratios = []
        for alpha in (4.0, 16.0, 64.0):
            model = CostModel.linear(alpha)
            policy = GammaPolicy(alpha=alpha, gamma=0.5)
            total = cost_of_trace(simulate(inst, policy), model).total
            opt, _ = dp_opt(inst, model)
            ratios.append(total / opt)
        assert ratios[0] < ratios[1] < ratios[2]
