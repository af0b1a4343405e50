import statistics

import pytest

from flowswitch import validate_trace, simulate
from flowswitch.instances import (batch, parse_instance_spec, periodic,
                                  random_slotted, sigma1, sigma2)
from flowswitch.policies import FullParallel


class TestGenerators:
    def test_batch(self):
        assert batch(1).arrivals == ((1, 1),)
        assert batch(100).job_count == 100
        assert batch(0).arrivals == ()
        assert batch(3, size=2).total_work == 6

    def test_periodic(self):
        inst = periodic(2, 1)
        assert inst.arrivals == ((2, 1), (2, 1))
        assert periodic(4, 3).job_count == 12
        assert periodic(4, 0).arrivals == ()
        with pytest.raises(ValueError):
            periodic(3, 2)

    def test_sigma_families(self):
        assert sigma1(5).arrivals == tuple((1, 1) for _ in range(5))
        assert sigma2(3, 4).job_count == 12
        assert sigma2(6, 1).arrivals == sigma1(6).arrivals

    def test_random_slotted_determinism(self):
        one = random_slotted(5.0, 50, seed=9)
        two = random_slotted(5.0, 50, seed=9)
        other = random_slotted(5.0, 50, seed=10)
        assert one.arrivals == two.arrivals
        assert one.arrivals != other.arrivals

    def test_random_slotted_mean_load(self):
        rate, horizon = 5.0, 1000
        means = [random_slotted(rate, horizon, seed).job_count / horizon
                 for seed in range(20)]
        assert abs(statistics.mean(means) - rate) < 0.5
        assert random_slotted(rate, 0, seed=1).arrivals == ()

    def test_generated_instances_simulate_cleanly(self):
        for inst in (batch(4), periodic(2, 3), sigma2(2, 3),
                     random_slotted(2.0, 10, seed=0)):
            trace = simulate(inst, FullParallel())
            assert validate_trace(inst, trace).ok


class TestParseSpec:
    def test_known_kinds(self):
        assert parse_instance_spec("batch:N=4").arrivals == batch(4).arrivals
        assert parse_instance_spec("periodic:x=4,k=2").job_count == 8
        assert parse_instance_spec("sigma2:N=3,T=2").job_count == 6
        assert parse_instance_spec("random:rate=2,T=5,seed=3").arrivals == \
            random_slotted(2.0, 5, 3).arrivals

    def test_errors(self):
        with pytest.raises(ValueError):
            parse_instance_spec("nope:N=1")
        with pytest.raises(ValueError):
            parse_instance_spec("batch")
        with pytest.raises(ValueError):
            parse_instance_spec("batch:N=1.5")

    def test_random_requires_seed(self):
        with pytest.raises(ValueError):
            parse_instance_spec("random:rate=2,T=5")

    def test_generator_spec_round_trip(self):
        from flowswitch.instances import GeneratorKind, GeneratorSpec
        spec = GeneratorSpec.parse("sigma2:N=3,T=2")
        assert spec.kind is GeneratorKind.SIGMA2
        assert spec.build().job_count == 6
        direct = GeneratorSpec(GeneratorKind.BATCH, {"n": 2})
        assert direct.build().arrivals == batch(2).arrivals
