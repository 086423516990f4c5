import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twostage.analysis import (InterimDecision, InterimRule, adaptive_randomization_test,
                               crossover_estimate, fixed_effect_combine, interim_decide,
                               meta_combine, nof1_effect, nof1_series_test, parallel_test)
from twostage.errors import ConfigError, InsufficientDataError
from twostage.population import Arm
from twostage.urn import UrnState

from oracles import dersimonian_laird, exact_urn_pvalue, ols_crossover, welch

E, C = Arm.EXPERIMENTAL, Arm.CONTROL

CROSSOVER_ROWS = [
    ("AB", 7.422, 3.121), ("BA", 4.225, 1.223), ("AB", 0.804, 5.269), ("BA", 2.669, 5.557),
    ("AB", 8.696, 3.77), ("BA", 2.747, 4.788), ("AB", 6.523, 3.476), ("BA", 5.035, 6.671),
    ("AB", 7.531, 5.42), ("BA", 3.267, 3.893), ("AB", 6.206, 3.576), ("BA", 3.78, 2.469),
]
# ols_crossover(CROSSOVER_ROWS)
CROSSOVER_POINT = 1.2856666666666683
CROSSOVER_SE = 0.8268018538655771

DL_EFFECTS = [0.868, 0.828, 1.049, 2.646, 0.699]
DL_VARIANCES = [0.221, 0.127, 0.104, 0.261, 0.303]
# dersimonian_laird(DL_EFFECTS, DL_VARIANCES)
DL_POOLED = 1.1861619796204772
DL_SE = 0.310958086481479
DL_TAU2 = 0.2923823352687735

WELCH_A = [2.974, 1.099, 1.538, 1.663, 2.056, 0.762, 0.39, 0.94, 0.739]
WELCH_B = [1.581, 0.379, 0.479, 0.29, 2.457, -1.085, -0.957]
# welch(WELCH_A, WELCH_B)
WELCH_POINT = 0.9020793650793654
WELCH_SE = 0.5493157236374394
WELCH_DF = 9.604073890610406

# exact_urn_pvalue on n=6 sequences
EXACT_CASES = [
    ([1, 0, 1, 1, 0, 1], "ECEECC", UrnState(1, 1, 1), "two-sided", 0.27142857142857146),
    ([1, 0, 1, 1, 0, 1], "ECEECC", UrnState(1, 1, 1), "greater", 0.1357142857142857),
    ([1, 1, 0, 1, 0, 0], "EECECC", UrnState(1, 1, 1), "two-sided", 0.003174603174603174),
    ([1, 1, 0, 1, 0, 0], "EECECC", UrnState(2, 1, 2), "two-sided", 0.0017168017168017167),
]


class TestCrossover:
    def test_matches_normal_equations_oracle(self):
        est = crossover_estimate(CROSSOVER_ROWS)
        assert abs(est.point - CROSSOVER_POINT) <= 1e-8
        assert abs(est.standard_error - CROSSOVER_SE) <= 1e-8
        assert est.n_used == 12

    def test_frozen_values_still_reproduce(self):
        point, se = ols_crossover(CROSSOVER_ROWS)
        assert point == pytest.approx(CROSSOVER_POINT, abs=1e-12)
        assert se == pytest.approx(CROSSOVER_SE, abs=1e-12)

    def test_all_zero(self):
        est = crossover_estimate([("AB", 0, 0), ("AB", 0, 0), ("BA", 0, 0), ("BA", 0, 0)])
        assert est.point == 0.0
        assert est.p_value == 1.0

    def test_period_effect_cancels(self):
        # delta 3, period-2 effect +7, no noise
        rows = [("AB", 3.0, 7.0)] * 3 + [("BA", 0.0, 10.0)] * 3
        assert crossover_estimate(rows).point == 3.0

    @given(st.floats(-50, 50, allow_nan=False))
    def test_period_two_shift_invariance(self, shift):
        base = crossover_estimate(CROSSOVER_ROWS)
        shifted = crossover_estimate([(s, a, b + shift) for s, a, b in CROSSOVER_ROWS])
        assert abs(shifted.point - base.point) <= 1e-12 * max(1.0, abs(shift))
        assert abs(shifted.standard_error - base.standard_error) <= 1e-9

    def test_small_group_rejected(self):
        with pytest.raises(InsufficientDataError):
            crossover_estimate([("AB", 1, 0), ("BA", 0, 1), ("BA", 0, 1)])

    def test_one_sided(self):
        two = crossover_estimate(CROSSOVER_ROWS)
        up = crossover_estimate(CROSSOVER_ROWS, "greater")
        down = crossover_estimate(CROSSOVER_ROWS, "less")
        assert up.p_value == pytest.approx(two.p_value / 2)
        assert up.p_value + down.p_value == pytest.approx(1.0)


class TestNOf1:
    def test_identical_differences(self):
        assert nof1_effect([(3, 1), (4, 2), (2, 0)]) == (2.0, 0.0)

    def test_two_cycles(self):
        assert nof1_effect([(1, 0), (3, 0)]) == (2.0, 1.0)

    def test_five_cycles_direct_formula(self):
        cycles = [(2.3, 0.1), (1.1, 0.9), (0.4, -0.6), (3.3, 1.0), (1.7, 1.9)]
        d = [a - b for a, b in cycles]
        mean = sum(d) / 5
        var = sum((x - mean) ** 2 for x in d) / 4 / 5
        est, v = nof1_effect(cycles)
        assert est == pytest.approx(mean, abs=1e-14)
        assert v == pytest.approx(var, abs=1e-14)

    def test_single_cycle(self):
        with pytest.raises(InsufficientDataError):
            nof1_effect([(1, 0)])


class TestMeta:
    def test_matches_direct_formula(self):
        res = meta_combine(list(zip(DL_EFFECTS, DL_VARIANCES)))
        assert abs(res.pooled_effect - DL_POOLED) <= 1e-10
        assert abs(res.pooled_se - DL_SE) <= 1e-10
        assert abs(res.tau_squared - DL_TAU2) <= 1e-10

    def test_frozen_values_still_reproduce(self):
        pooled, se, tau2 = dersimonian_laird(DL_EFFECTS, DL_VARIANCES)
        assert (pooled, se, tau2) == pytest.approx((DL_POOLED, DL_SE, DL_TAU2), abs=1e-14)

    def test_equal_inputs(self):
        res = meta_combine([(2.0, 0.5)] * 3)
        assert res.pooled_effect == pytest.approx(2.0)
        assert res.tau_squared == 0.0

    def test_symmetric_pair(self):
        assert meta_combine([(1.0, 0.4), (3.0, 0.4)]).pooled_effect == pytest.approx(2.0)

    def test_zero_variance_floored_with_warning(self):
        with pytest.warns(RuntimeWarning):
            res = meta_combine([(2.0, 0.0), (2.0, 0.0), (2.0, 0.0)])
        assert res.pooled_effect == pytest.approx(2.0)
        assert res.tau_squared == 0.0

    def test_single_patient(self):
        with pytest.raises(InsufficientDataError):
            meta_combine([(1.0, 1.0)])

    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0.05, 3)), min_size=2, max_size=8))
    def test_reduces_to_fixed_effect_without_heterogeneity(self, per_patient):
        res = meta_combine(per_patient)
        if res.tau_squared == 0.0:
            pooled, se = fixed_effect_combine(per_patient)
            assert res.pooled_effect == pytest.approx(pooled, abs=1e-12)
            assert res.pooled_se == pytest.approx(se, abs=1e-12)
            assert res.pooled_se <= max(math.sqrt(v) for _, v in per_patient) + 1e-12
        assert res.tau_squared >= 0.0


class TestNOf1Series:
    def test_pooled_estimate_and_t_reference(self):
        series = [[(1.0, 0.0), (2.0, 0.5)], [(0.3, 0.1), (1.1, 0.2)], [(2.0, 1.0), (1.5, 0.0)]]
        est, meta = nof1_series_test(series, "greater")
        assert est.method == "nof1-dl-hk"
        assert est.n_used == 3
        assert est.point == pytest.approx(meta.pooled_effect)
        assert 0.0 <= est.p_value <= 0.5

    def test_needs_two_patients(self):
        with pytest.raises(InsufficientDataError):
            nof1_series_test([[(1, 0), (2, 0)]])


class TestRandomizationTest:
    @pytest.mark.parametrize("successes,arms,urn,alternative,exact", EXACT_CASES)
    def test_matches_exhaustive_enumeration(self, successes, arms, urn, alternative, exact):
        arm_seq = [E if a == "E" else C for a in arms]
        est = adaptive_randomization_test(successes, arm_seq, urn, 5000,
                                          np.random.default_rng(11), alternative)
        assert abs(est.p_value - exact) <= 0.02

    @pytest.mark.parametrize("successes,arms,urn,alternative,exact", EXACT_CASES)
    def test_frozen_values_still_reproduce(self, successes, arms, urn, alternative, exact):
        got = exact_urn_pvalue(successes, arms, urn.balls_experimental, urn.balls_control, urn.beta,
                               alternative)
        assert got == pytest.approx(exact, abs=1e-15)

    def test_identical_responses_give_p_one(self):
        est = adaptive_randomization_test([True] * 6, [E, C, E, C, E, C], UrnState(), 1000,
                                          np.random.default_rng(0))
        assert est.p_value == 1.0

    def test_add_one_floor(self):
        # strongly separated and improbable under the urn: nothing is as extreme
        s = [True] * 10 + [False] * 10
        arms = [E] * 10 + [C] * 10
        est = adaptive_randomization_test(s, arms, UrnState(), 1000, np.random.default_rng(1), "greater")
        assert est.p_value >= 1 / 1001
        assert est.p_value < 0.01

    def test_needs_two_per_arm(self):
        with pytest.raises(InsufficientDataError):
            adaptive_randomization_test([True, False, True], [E, C, C], UrnState(), 1000,
                                        np.random.default_rng(0))

    def test_no_standard_error(self):
        est = adaptive_randomization_test([1, 0, 1, 0], [E, E, C, C], UrnState(), 1000,
                                          np.random.default_rng(0))
        assert est.standard_error is None
        assert est.point == 0.0


class TestParallel:
    def test_matches_textbook_welch(self):
        est = parallel_test(WELCH_A, WELCH_B)
        assert abs(est.point - WELCH_POINT) <= 1e-10
        assert abs(est.standard_error - WELCH_SE) <= 1e-10
        from scipy import stats
        p = 2 * stats.t.sf(WELCH_POINT / WELCH_SE, WELCH_DF)
        assert abs(est.p_value - p) <= 1e-10

    def test_frozen_values_still_reproduce(self):
        assert welch(WELCH_A, WELCH_B) == pytest.approx((WELCH_POINT, WELCH_SE, WELCH_DF), abs=1e-14)

    def test_identical_arms(self):
        assert parallel_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]).point == 0.0

    def test_sign_convention(self):
        est = parallel_test([1.0, 1.001, 0.999], [0.0, 0.001, -0.001])
        assert est.point == pytest.approx(1.0)

    def test_insufficient(self):
        with pytest.raises(InsufficientDataError):
            parallel_test([1.0], [0.0, 1.0])


class TestInterim:
    rule = InterimRule(0.5, 0.005, 0.6, 0.048)

    def test_efficacy(self):
        assert interim_decide(0.001, True, self.rule) is InterimDecision.STOP_EFFICACY

    def test_futility(self):
        assert interim_decide(0.7, True, self.rule) is InterimDecision.STOP_FUTILITY

    def test_continue(self):
        assert interim_decide(0.10, True, self.rule) is InterimDecision.CONTINUE

    def test_unfavorable_small_p_continues(self):
        assert interim_decide(0.001, False, self.rule) is InterimDecision.CONTINUE

    def test_p_out_of_range(self):
        with pytest.raises(ValueError):
            interim_decide(1.5, True, self.rule)

    @pytest.mark.parametrize("kwargs", [dict(information_fraction=1.0),
                                        dict(efficacy_alpha_interim=0.05),
                                        dict(futility_p_threshold=0.0)])
    def test_rule_validation(self, kwargs):
        with pytest.raises(ConfigError):
            InterimRule(**kwargs).validate()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=4, max_size=12),
       st.lists(st.floats(-10, 10), min_size=4, max_size=12),
       st.sampled_from(["two-sided", "greater", "less"]))
def test_p_values_in_unit_interval(a, b, alternative):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for est in (parallel_test(a, b, alternative),
                    crossover_estimate([("AB", x, y) for x, y in zip(a[:2], b[:2])]
                                       + [("BA", x, y) for x, y in zip(a[2:4], b[2:4])], alternative)):
            assert 0.0 <= est.p_value <= 1.0
