import json
import math

import numpy as np
import pytest

from sncbounds import (
    InvalidParamsError,
    MarkovFluidSource,
    MmooParams,
    NonReversibleError,
    ReducibleChainError,
    Scenario,
    TrivialScenarioError,
    UnstableScenarioError,
    aggregate_generator,
    aggregate_source,
    mmoo_derived,
    packetize,
    sample_path,
    stationary_distribution,
)
from sncbounds.traffic import StatePath, packet_arrays, spawned_rng

BASE_SOURCE = MmooParams(0.5, 0.1, 1.0)


class TestMmooParams:
    def test_base_source_derived(self):
        d = mmoo_derived(BASE_SOURCE)
        assert d["p"] == pytest.approx(1 / 6, abs=1e-15)
        assert d["mean_rate"] == pytest.approx(1 / 6, abs=1e-15)

    def test_symmetric_rates_give_half(self):
        assert mmoo_derived(MmooParams(0.7, 0.7, 3.0))["p"] == pytest.approx(0.5)

    def test_direct_formula(self):
        d = mmoo_derived(MmooParams(0.3, 0.6, 2.0))
        assert d["p"] == pytest.approx(2 / 3, rel=1e-14)
        assert d["mean_rate"] == pytest.approx(4 / 3, rel=1e-14)

    @pytest.mark.parametrize("lam,mu,peak", [(0, 1, 1), (1, -2, 1), (1, 1, 0)])
    def test_invalid_rates_rejected(self, lam, mu, peak):
        with pytest.raises(InvalidParamsError):
            MmooParams(lam, mu, peak)

    def test_json_round_trip(self):
        d = BASE_SOURCE.to_json_dict()
        assert d == {"lambda": 0.5, "mu": 0.1, "peak": 1.0}
        assert MmooParams.from_json_dict(d) == BASE_SOURCE


class TestScenario:
    def test_derived_capacities(self):
        sc = Scenario.from_utilization(5, 5, 0.75, BASE_SOURCE)
        assert sc.per_flow_capacity == pytest.approx(2 / 9, rel=1e-14)
        assert sc.capacity == pytest.approx(20 / 9, rel=1e-14)
        assert sc.through_capacity == pytest.approx(10 / 9, rel=1e-14)
        assert sc.rho == pytest.approx(0.75, rel=1e-14)

    def test_unstable_rejected(self):
        with pytest.raises(UnstableScenarioError):
            Scenario(2, 2, 0.1, BASE_SOURCE)

    def test_trivial_rejected_unless_allowed(self):
        with pytest.raises(TrivialScenarioError):
            Scenario(1, 0, 2.0, BASE_SOURCE)
        sc = Scenario(1, 0, 2.0, BASE_SOURCE, allow_trivial=True)
        assert sc.rho < 1

    def test_bad_counts(self):
        with pytest.raises(InvalidParamsError):
            Scenario(0, 2, 0.5, BASE_SOURCE)

    def test_json_round_trip(self):
        sc = Scenario.from_utilization(5, 3, 0.75, BASE_SOURCE)
        again = Scenario.from_json_dict(json.loads(json.dumps(sc.to_json_dict())))
        assert again == sc
        via_rho = Scenario.from_json_dict(
            {"lambda": 0.5, "mu": 0.1, "peak": 1.0, "n1": 5, "n2": 3, "rho": 0.75})
        assert via_rho.per_flow_capacity == pytest.approx(sc.per_flow_capacity)


def lumped_pair_generator(params: MmooParams) -> np.ndarray:
    """Oracle for n=2: product chain of two sources lumped by On-count."""
    lam, mu = params.lam, params.mu
    single = np.array([[-mu, mu], [lam, -lam]])
    prod = np.kron(single, np.eye(2)) + np.kron(np.eye(2), single)
    count = np.array([0, 1, 1, 2])  # On-count of product states (a,b)
    lumped = np.zeros((3, 3))
    for i in range(4):
        for j in range(4):
            if i != j:
                lumped[count[i], count[j]] += prod[i, j] / 2 if count[i] == 1 else prod[i, j]
    np.fill_diagonal(lumped, 0.0)
    np.fill_diagonal(lumped, -lumped.sum(axis=1))
    return lumped


class TestAggregateGenerator:
    def test_single_source_is_two_state(self):
        q = aggregate_generator(1, BASE_SOURCE)
        assert np.allclose(q, [[-0.1, 0.1], [0.5, -0.5]])

    def test_two_source_rates(self):
        q = aggregate_generator(2, BASE_SOURCE)
        assert q[0, 1] == pytest.approx(0.2)
        assert q[1, 2] == pytest.approx(0.1)
        assert q[1, 0] == pytest.approx(0.5)
        assert q[2, 1] == pytest.approx(1.0)

    def test_two_source_matches_lumped_product_chain(self):
        q = aggregate_generator(2, MmooParams(0.4, 0.9, 1.5))
        oracle = lumped_pair_generator(MmooParams(0.4, 0.9, 1.5))
        assert np.allclose(q, oracle, atol=1e-12)

    @pytest.mark.parametrize("n", [1, 3, 7, 20])
    def test_rows_sum_to_zero(self, n):
        q = aggregate_generator(n, BASE_SOURCE)
        assert np.abs(q.sum(axis=1)).max() < 1e-12

    def test_n_zero_rejected(self):
        with pytest.raises(InvalidParamsError):
            aggregate_generator(0, BASE_SOURCE)


class TestStationaryDistribution:
    def test_binomial_up_to_twelve(self):
        p = BASE_SOURCE.on_probability
        for n in range(1, 13):
            pi = stationary_distribution(aggregate_generator(n, BASE_SOURCE))
            ref = np.array([math.comb(n, i) * p**i * (1 - p)**(n - i)
                            for i in range(n + 1)])
            assert np.abs(pi - ref).max() < 1e-10

    def test_two_state(self):
        pi = stationary_distribution(aggregate_generator(1, BASE_SOURCE))
        assert np.allclose(pi, [5 / 6, 1 / 6], atol=1e-14)

    def test_permutation_invariance(self):
        q = aggregate_generator(2, BASE_SOURCE)
        perm = [2, 0, 1]
        qp = q[np.ix_(perm, perm)]
        pi = stationary_distribution(q)
        pip = stationary_distribution(qp)
        assert np.allclose(pip, pi[perm], atol=1e-13)

    def test_reducible_rejected(self):
        with pytest.raises(ReducibleChainError):
            stationary_distribution(np.zeros((2, 2)))


class TestMarkovFluidSource:
    def test_aggregate_is_reversible(self):
        for n in (1, 4, 9):
            src = aggregate_source(n, BASE_SOURCE)
            assert src.n_states == n + 1
            assert src.mean_rate == pytest.approx(n * BASE_SOURCE.mean_rate, rel=1e-12)

    def test_non_reversible_rejected(self):
        q = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [1.0, 0.0, -1.0]])
        with pytest.raises(NonReversibleError):
            MarkovFluidSource(q, np.array([0.0, 1.0, 2.0]))

    def test_arrays_read_only(self):
        src = aggregate_source(2, BASE_SOURCE)
        with pytest.raises(ValueError):
            src.rates[0] = 5.0

    def test_json_round_trip(self):
        src = aggregate_source(2, BASE_SOURCE)
        again = MarkovFluidSource.from_json(src.to_json())
        assert np.allclose(again.generator, src.generator)
        assert np.allclose(again.rates, src.rates)

    def test_bad_generator_rejected(self):
        with pytest.raises(InvalidParamsError):
            MarkovFluidSource(np.array([[-1.0, 2.0], [1.0, -1.0]]), np.array([0.0, 1.0]))


class TestSamplePath:
    def test_zero_horizon_rejected(self):
        with pytest.raises(InvalidParamsError):
            sample_path(BASE_SOURCE.as_fluid_source(), 0.0, 1)

    def test_single_state_chain(self):
        src = MarkovFluidSource(np.zeros((1, 1)), np.array([2.0]))
        path = sample_path(src, 7.5, 1)
        assert path.segments == [(0, 7.5)]

    def test_invariants(self):
        path = sample_path(BASE_SOURCE.as_fluid_source(), 500.0, 42)
        assert (path.durations > 0).all()
        assert (np.diff(path.states) != 0).all()
        assert path.durations.sum() == pytest.approx(path.horizon, rel=1e-12)

    def test_long_run_on_fraction(self):
        horizon = 1e6
        path = sample_path(BASE_SOURCE.as_fluid_source(), horizon, 2024)
        p = BASE_SOURCE.on_probability
        lam, mu = BASE_SOURCE.lam, BASE_SOURCE.mu
        # asymptotic variance of the On-time fraction of a 2-state chain
        se = math.sqrt(2 * p * (1 - p) / ((lam + mu) * horizon))
        frac = path.time_in_state(1) / horizon
        assert abs(frac - p) < 3 * se

    def test_deterministic_given_seed(self):
        a = sample_path(BASE_SOURCE.as_fluid_source(), 100.0, (5, 1))
        b = sample_path(BASE_SOURCE.as_fluid_source(), 100.0, (5, 1))
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.durations, b.durations)


class TestPacketize:
    def test_half_packet_dwell(self):
        path = StatePath(np.array([1]), np.array([3.5]), 3.5)
        pkts = packetize(path, 1.0)
        assert [(p.time, p.size) for p in pkts] == [
            (1.0, 1.0), (2.0, 1.0), (3.0, 1.0), (3.5, 0.5)]

    def test_off_dwell_emits_nothing(self):
        path = StatePath(np.array([0]), np.array([4.0]), 4.0)
        assert packetize(path, 1.0) == []

    def test_integer_dwell_no_fraction(self):
        path = StatePath(np.array([1]), np.array([2.0]), 2.0)
        pkts = packetize(path, 1.0)
        assert [(p.time, p.size) for p in pkts] == [(1.0, 1.0), (2.0, 1.0)]

    def test_volume_conservation_and_ordering(self):
        src = MmooParams(0.7, 0.3, 1.7)
        path = sample_path(src.as_fluid_source(), 2000.0, 11)
        times, sizes = packet_arrays(path, src.peak)
        on_time = path.time_in_state(1)
        assert sizes.sum() == pytest.approx(src.peak * on_time, rel=1e-12)
        assert (np.diff(times) > 0).all()
        assert sizes.min() > 0 and sizes.max() <= 1.0

    def test_non_binary_path_rejected(self):
        path = StatePath(np.array([2]), np.array([1.0]), 1.0)
        with pytest.raises(InvalidParamsError):
            packetize(path, 1.0)

    def test_flow_labels(self):
        path = StatePath(np.array([1]), np.array([1.5]), 1.5)
        pkts = packetize(path, 1.0, flow="cross", subflow=3)
        assert all(p.flow == "cross" and p.subflow == 3 for p in pkts)


class TestRngContract:
    def test_spawn_keys_are_independent_streams(self):
        a = spawned_rng(9, 0).standard_normal(4)
        b = spawned_rng(9, 1).standard_normal(4)
        a2 = spawned_rng(9, 0).standard_normal(4)
        assert np.array_equal(a, a2)
        assert not np.array_equal(a, b)
