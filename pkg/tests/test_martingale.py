import math

import numpy as np
import pytest

from sncbounds import (
    GpsInfeasibleError,
    InvalidParamsError,
    MmooParams,
    Scenario,
    SchedulerSpec,
    TrivialScenarioError,
    UnstableScenarioError,
    gps_constants,
    martingale_constants,
    martingale_decay_rate,
    martingale_delay_bound,
    martingale_sample_path_bound,
)

BASE_SOURCE = MmooParams(0.5, 0.1, 1.0)


def scenario(rho=0.75, n1=5, n2=5):
    return Scenario.from_utilization(n1, n2, rho, BASE_SOURCE)


def constants_oracle(params: MmooParams, c: float):
    """Independent route to (K, gamma, theta): the stationary-sum identity
    K = e^{theta c/P} ((1-p) + p e^{-theta}) from the proof's deconditioning
    step, rather than the product closed form."""
    p = params.on_probability
    theta = math.log((params.mu / params.lam) * (params.peak - c) / c)
    gamma = (params.lam + params.mu) * (1 - params.mean_rate / c) / (params.peak - c)
    k = math.exp(theta * c / params.peak) * ((1 - p) + p * math.exp(-theta))
    return k, gamma, theta


class TestConstants:
    def test_rho_075(self):
        consts = martingale_constants(scenario(0.75))
        assert consts.gamma == pytest.approx(0.15 / (7 / 9), rel=1e-12)
        assert consts.theta == pytest.approx(math.log(0.7), rel=1e-12)
        k, g, t = constants_oracle(BASE_SOURCE, 2 / 9)
        assert consts.K == pytest.approx(k, rel=1e-12)
        assert consts.K == pytest.approx(0.9897843110997495, rel=1e-9)

    def test_rho_09(self):
        consts = martingale_constants(scenario(0.9))
        assert consts.gamma == pytest.approx(0.06 / (22 / 27), rel=1e-12)
        k, _, _ = constants_oracle(BASE_SOURCE, 5 / 27)
        assert consts.K == pytest.approx(k, rel=1e-12)
        assert consts.K == pytest.approx(0.9988007289771157, rel=1e-9)

    def test_limit_towards_full_load(self):
        gammas, ks = [], []
        for rho in (0.9, 0.99, 0.999, 0.9999):
            consts = martingale_constants(scenario(rho, 2, 2))
            gammas.append(consts.gamma)
            ks.append(consts.K)
        assert all(a > b for a, b in zip(gammas, gammas[1:]))
        assert gammas[-1] < 1e-3
        assert all(a < b for a, b in zip(ks, ks[1:]))
        assert ks[-1] > 1 - 1e-3

    def test_signs_over_random_sweep(self):
        rng = np.random.default_rng(31)
        for _ in range(200):
            params = MmooParams(rng.uniform(0.05, 3), rng.uniform(0.05, 3),
                                rng.uniform(0.5, 4))
            p = params.on_probability
            rho = rng.uniform(p + 1e-3, 1 - 1e-3)
            sc = Scenario.from_utilization(1, 1, rho, params)
            consts = martingale_constants(sc)
            assert 0 < consts.K < 1
            assert consts.gamma > 0
            assert consts.theta < 0

    def test_unstable_and_trivial_guards(self):
        with pytest.raises(UnstableScenarioError):
            Scenario.from_utilization(2, 2, 1.0, BASE_SOURCE)
        sc = Scenario(1, 0, 1.5, BASE_SOURCE, allow_trivial=True)
        with pytest.raises(TrivialScenarioError):
            martingale_constants(sc)


class TestSamplePathBound:
    def test_zero_exponent_gives_prefactor(self):
        sc = scenario()
        consts = martingale_constants(sc)
        assert martingale_sample_path_bound(sc, 0.0, 0.0) == pytest.approx(
            consts.K ** 10, rel=1e-14)

    def test_matches_fifo_instantiation(self):
        sc = scenario()
        spb = martingale_sample_path_bound(sc, 0.0, sc.capacity * 5.0)
        fifo = martingale_delay_bound(sc, SchedulerSpec.fifo(), 5.0).value
        assert spb == pytest.approx(fifo, rel=1e-14)
        assert spb == pytest.approx(0.1059, abs=5e-5)

    def test_large_sigma_vanishes(self):
        assert martingale_sample_path_bound(scenario(), 0.0, 1e6) == 0.0

    def test_negative_u_rejected(self):
        with pytest.raises(InvalidParamsError):
            martingale_sample_path_bound(scenario(), -1.0, 0.0)


class TestDelayBounds:
    def test_fifo_value_at_five(self):
        got = martingale_delay_bound(scenario(), SchedulerSpec.fifo(), 5.0)
        k, g, _ = constants_oracle(BASE_SOURCE, 2 / 9)
        assert got.value == pytest.approx(k**10 * math.exp(-g * (20 / 9) * 5), rel=1e-12)
        assert got.value == pytest.approx(0.10587041692838958, rel=1e-10)

    def test_sp_value_at_five(self):
        got = martingale_delay_bound(scenario(), SchedulerSpec.sp(), 5.0)
        k, g, _ = constants_oracle(BASE_SOURCE, 2 / 9)
        assert got.value == pytest.approx(k**10 * math.exp(-g * (10 / 9) * 5), rel=1e-12)
        assert got.value == pytest.approx(0.3090936903302149, rel=1e-10)

    def test_sp_without_cross_flow_is_fifo(self):
        for rho in (0.6, 0.75, 0.9):
            sc = Scenario.from_utilization(4, 0, rho, BASE_SOURCE)
            for d in (0.0, 0.5, 3.0, 12.0):
                fifo = martingale_delay_bound(sc, SchedulerSpec.fifo(), d).value
                sp = martingale_delay_bound(sc, SchedulerSpec.sp(), d).value
                assert sp == pytest.approx(fifo, abs=1e-12, rel=1e-12)

    def test_edf_equal_deadlines_is_fifo(self):
        for rho in (0.6, 0.75, 0.9):
            sc = scenario(rho)
            for d in (0.0, 0.5, 3.0, 12.0):
                for dl in (0.0, 1.0, 7.5):
                    fifo = martingale_delay_bound(sc, SchedulerSpec.fifo(), d).value
                    edf = martingale_delay_bound(sc, SchedulerSpec.edf(dl, dl), d).value
                    assert edf == pytest.approx(fifo, abs=1e-12, rel=1e-12)

    def test_edf_case1_matches_sp_below_gap(self):
        sc = scenario()
        sched = SchedulerSpec.edf(6.0, 2.0)  # y = 4
        for d in (0.0, 1.0, 2.5, 4.0):
            edf = martingale_delay_bound(sc, sched, d).value
            sp = martingale_delay_bound(sc, SchedulerSpec.sp(), d).value
            assert edf == pytest.approx(sp, rel=1e-12)
        assert martingale_delay_bound(sc, sched, 5.0).value < \
            martingale_delay_bound(sc, SchedulerSpec.sp(), 5.0).value

    def test_ordering_fifo_edf_sp(self):
        sc = scenario()
        for y in (0.0, 1.0, 4.0, 30.0):
            for d in np.linspace(0, 25, 40):
                fifo = martingale_delay_bound(sc, SchedulerSpec.fifo(), d).value
                edf = martingale_delay_bound(sc, SchedulerSpec.edf(y + 1, 1.0), d).value
                sp = martingale_delay_bound(sc, SchedulerSpec.sp(), d).value
                assert fifo <= edf * (1 + 1e-12)
                assert edf <= sp * (1 + 1e-12)

    def test_edf_case2_terms(self):
        sc = scenario()
        got = martingale_delay_bound(sc, SchedulerSpec.edf(1.0, 10.0), 5.0)
        k, g, _ = constants_oracle(BASE_SOURCE, 2 / 9)
        cap, c2 = sc.capacity, sc.cross_capacity
        term1 = k**10 * math.exp(g * c2 * (-9.0)) * math.exp(-g * cap * 5.0)
        # rescaled constants: c' = 2c, rho' = rho/2
        kp, gp, _ = constants_oracle(BASE_SOURCE, 4 / 9)
        assert kp == pytest.approx(0.8100448041692296, rel=1e-12)
        assert gp == pytest.approx(0.675, rel=1e-12)
        term2 = kp**10 * math.exp(-gp * cap * 5.0)
        assert got.value == pytest.approx(term1 + term2, rel=1e-12)
        assert len(got.terms) == 2

    def test_edf_case2_trivial_second_term(self):
        # n1=1 of 10 flows: c' = 10c exceeds the peak, so the through flow
        # alone can never backlog the server
        sc = Scenario.from_utilization(1, 9, 0.75, BASE_SOURCE)
        got = martingale_delay_bound(sc, SchedulerSpec.edf(0.0, 5.0), 2.0)
        assert got.terms[1][0] == 0.0
        k, g, _ = constants_oracle(BASE_SOURCE, 2 / 9)
        expect = k**10 * math.exp(g * sc.cross_capacity * -5.0) * math.exp(-g * sc.capacity * 2.0)
        assert got.value == pytest.approx(expect, rel=1e-12)

    def test_monotone_decreasing_in_d(self):
        sc = scenario()
        for sched in (SchedulerSpec.fifo(), SchedulerSpec.sp(),
                      SchedulerSpec.edf(10.0, 1.0), SchedulerSpec.edf(1.0, 10.0),
                      SchedulerSpec.gps(0.5)):
            ds = np.linspace(0, 20, 41)
            vals = [martingale_delay_bound(sc, sched, d).value for d in ds]
            assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_d_zero_prefactor_at_most_one(self):
        sc = scenario()
        for sched in (SchedulerSpec.fifo(), SchedulerSpec.sp(), SchedulerSpec.gps(0.5)):
            got = martingale_delay_bound(sc, sched, 0.0)
            assert got.value == pytest.approx(got.prefactor, rel=1e-14)
            assert got.value <= 1.0

    def test_single_term_value_identity(self):
        sc = scenario()
        for sched in (SchedulerSpec.fifo(), SchedulerSpec.sp(),
                      SchedulerSpec.edf(7.0, 2.0), SchedulerSpec.gps(0.4)):
            for d in (0.0, 2.0, 9.0):
                got = martingale_delay_bound(sc, sched, d)
                assert got.value == pytest.approx(
                    got.prefactor * math.exp(-got.decay_rate * d), rel=1e-12)

    def test_raw_values_not_clamped(self):
        # two-term EDF at d=0 sums two near-1 prefactors
        sc = scenario(0.9, 10, 10)
        got = martingale_delay_bound(sc, SchedulerSpec.edf(0.0, 0.05), 0.0)
        assert got.value > 1.0

    def test_negative_d_rejected(self):
        with pytest.raises(InvalidParamsError):
            martingale_delay_bound(scenario(), SchedulerSpec.fifo(), -0.1)


class TestGps:
    def test_gps_closed_form(self):
        sc = scenario()
        consts = gps_constants(sc, 0.5)
        # n1=n2 and phi1=1/2 reduce the GPS system to the same utilization
        assert consts.gamma == pytest.approx(martingale_constants(sc).gamma, rel=1e-12)
        got = martingale_delay_bound(sc, SchedulerSpec.gps(0.5), 5.0)
        expect = consts.K**10 * math.exp(-consts.gamma * 0.5 * sc.capacity * 5.0)
        assert got.value == pytest.approx(expect, rel=1e-12)

    def test_exponent_switch(self):
        sc = scenario()
        total = martingale_delay_bound(sc, SchedulerSpec.gps(0.5), 3.0, gps_exponent="total")
        through = martingale_delay_bound(sc, SchedulerSpec.gps(0.5), 3.0, gps_exponent="through")
        consts = gps_constants(sc, 0.5)
        assert through.value == pytest.approx(total.value / consts.K**5, rel=1e-12)

    def test_unstable_weight_rejected(self):
        sc = scenario(0.9)
        with pytest.raises(GpsInfeasibleError):
            martingale_delay_bound(sc, SchedulerSpec.gps(0.05), 1.0)

    def test_trivial_weight_rejected(self):
        sc = Scenario.from_utilization(1, 9, 0.75, BASE_SOURCE)
        with pytest.raises(TrivialScenarioError):
            martingale_delay_bound(sc, SchedulerSpec.gps(0.9), 1.0)

    def test_weight_validation(self):
        with pytest.raises(InvalidParamsError):
            SchedulerSpec.gps(1.0)


class TestDecayRates:
    def test_table_of_rates(self):
        sc = scenario()
        g = martingale_constants(sc).gamma
        assert martingale_decay_rate(sc, SchedulerSpec.fifo()) == pytest.approx(
            3 / 7, rel=1e-12)
        assert martingale_decay_rate(sc, SchedulerSpec.sp()) == pytest.approx(
            3 / 14, rel=1e-12)
        for deadlines in ((10.0, 1.0), (1.0, 10.0), (2.0, 2.0)):
            assert martingale_decay_rate(sc, SchedulerSpec.edf(*deadlines)) == \
                pytest.approx(g * sc.capacity, rel=1e-14)

    def test_gps_rate(self):
        sc = scenario()
        consts = gps_constants(sc, 0.45)
        assert martingale_decay_rate(sc, SchedulerSpec.gps(0.45)) == pytest.approx(
            consts.gamma * 0.45 * sc.capacity, rel=1e-14)
