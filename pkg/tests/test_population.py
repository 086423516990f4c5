import dataclasses
import pickle

import numpy as np
import pytest

from twostage.config import PopulationBlock, ScenarioConfig
from twostage.errors import ConfigError
from twostage.population import (Arm, CovariateSpec, OutcomeModel, PatientProfile, Period,
                                 draw_patients, generate_population, mean_outcomes,
                                 simulate_outcomes)

E, C = Arm.EXPERIMENTAL, Arm.CONTROL
QUIET = 1e-12


def _scenario(n=50, intercept=0.0, covariates=()):
    return ScenarioConfig(population=PopulationBlock(n, intercept, tuple(covariates)))


def test_same_seed_same_population():
    cfg = _scenario(covariates=(CovariateSpec("age", "normal", (40, 10), 0.1, 0.2),
                                CovariateSpec("site", "categorical", (0.2, 0.3, 0.5))))
    a = generate_population(cfg, 42)
    b = generate_population(cfg, 42)
    assert pickle.dumps(a) == pickle.dumps(b)
    assert generate_population(cfg, 43) != a


def test_responder_rate_at_zero_logit():
    pop = generate_population(_scenario(n=100_000), 1)
    rate = sum(p.latent_responder for p in pop) / len(pop)
    assert abs(rate - 0.5) <= 0.005


def test_binary_covariate_raises_response_in_exposed_stratum():
    cov = CovariateSpec("marker", "bernoulli", (0.5,), response_logit_coef=3.0)
    pop = generate_population(_scenario(n=4000, intercept=-1.0, covariates=(cov,)), 8)
    exposed = [p.latent_responder for p in pop if p.covariates[0] == 1.0]
    unexposed = [p.latent_responder for p in pop if p.covariates[0] == 0.0]
    assert np.mean(exposed) > np.mean(unexposed)


def test_ids_unique_and_offset():
    pop = draw_patients(20, (), 0.0, OutcomeModel(), np.random.default_rng(0), first_id=100)
    assert [p.id for p in pop] == list(range(100, 120))


@pytest.mark.parametrize("spec,fragment", [
    (CovariateSpec("p", "bernoulli", (1.5,)), "'p'"),
    (CovariateSpec("s", "normal", (0.0, 0.0)), "'s'"),
    (CovariateSpec("k", "categorical", (0.5, 0.6)), "'k'"),
    (CovariateSpec("w", "weibull", (1.0,)), "'w'"),
])
def test_bad_covariate_named_in_error(spec, fragment):
    with pytest.raises(ConfigError, match=fragment):
        generate_population(_scenario(covariates=(spec,)).validate(), 0)


def test_categorical_sum_tolerance():
    CovariateSpec("k", "categorical", (0.2, 0.3, 0.5 + 5e-10)).validate()


def test_latent_fields_hidden_from_repr():
    p = PatientProfile(1, (0.0,), True, 2.5, 0.0)
    assert "latent" not in repr(p) and "2.5" not in repr(p)


class TestOutcomes:
    def test_noise_free_null(self):
        model = OutcomeModel(baseline_mean=3.0, residual_sd=QUIET)
        p = PatientProfile(0, (), False, 0.0, 3.0)
        ys = simulate_outcomes(p, [Period(E, 10), Period(C, 10, 5)], model, np.random.default_rng(0))
        assert ys == pytest.approx([3.0, 3.0], abs=1e-9)

    def test_full_washout_reverses(self):
        model = OutcomeModel(responder_effect=5.0, residual_sd=QUIET, carryover=0.5, washout_full=7)
        p = PatientProfile(0, (), True, 5.0, 1.0)
        assert mean_outcomes(p, [Period(E, 10), Period(C, 10, 7)], model) == [6.0, 1.0]

    def test_short_washout_carries_over(self):
        model = OutcomeModel(responder_effect=4.0, carryover=0.25, washout_full=7)
        p = PatientProfile(0, (), True, 4.0, 0.0)
        assert mean_outcomes(p, [Period(E, 10), Period(C, 10, 3)], model) == [4.0, 1.0]

    def test_non_reversible_ratchet(self):
        model = OutcomeModel(responder_effect=5.0, reversible=False, residual_sd=QUIET)
        p = PatientProfile(0, (), True, 5.0, 2.0)
        ys = simulate_outcomes(p, [Period(E, 10), Period(E, 10)], model, np.random.default_rng(0))
        assert ys[1] == pytest.approx(ys[0], abs=1e-9)
        assert mean_outcomes(p, [Period(E, 10), Period(C, 10, 30)], model) == [7.0, 7.0]

    def test_ratchet_already_applied_after_stage1(self):
        model = OutcomeModel(reversible=False)
        p = PatientProfile(0, (), True, 3.0, 0.0)
        assert mean_outcomes(p, [Period(C, 10), Period(E, 10)], model, previous_arm=E) == [3.0, 3.0]

    def test_period_effects_and_direction(self):
        model = OutcomeModel(period_effects=(0.0, 7.0), improvement_direction="decrease")
        p = PatientProfile(0, (), True, 2.0, 10.0)
        assert mean_outcomes(p, [Period(E, 5), Period(C, 5, 5)], model) == [8.0, 17.0]

    def test_empty_schedule(self):
        with pytest.raises(ValueError):
            mean_outcomes(PatientProfile(0, (), False, 0.0), [], OutcomeModel())

    def test_control_after_full_washout_matches_naive_control(self):
        model = OutcomeModel(responder_effect=3.0, carryover=0.8, washout_full=7, residual_sd=1.0)
        p = PatientProfile(0, (), True, 3.0, 0.0)
        rng = np.random.default_rng(12)
        after = np.array([simulate_outcomes(p, [Period(E, 5), Period(C, 5, 7)], model, rng)[1]
                          for _ in range(10_000)])
        naive = np.array([simulate_outcomes(p, [Period(C, 5)], model, rng)[0] for _ in range(10_000)])
        se = np.sqrt(after.var(ddof=1) / len(after) + naive.var(ddof=1) / len(naive))
        assert abs(after.mean() - naive.mean()) <= 3 * se


def test_outcome_model_validation():
    for bad in (dict(residual_sd=0.0), dict(carryover=1.5), dict(improvement_direction="up"),
                dict(tau_het=-1.0), dict(washout_full=-1)):
        with pytest.raises(ConfigError):
            dataclasses.replace(OutcomeModel(), **bad).validate()
