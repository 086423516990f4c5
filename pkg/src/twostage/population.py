"""Synthetic patient populations and longitudinal outcome generation.

A patient carries observable covariates and two latent quantities that only
the simulator may read: whether they truly respond to the experimental
treatment and the size of their individual effect. Outcomes are Gaussian
around a patient-specific baseline; effects are applied in the configured
improvement direction, so a positive ``responder_effect`` always means
"better".
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import ConfigError

DISTRIBUTIONS = ("bernoulli", "normal", "categorical")


class Arm(str, enum.Enum):
    EXPERIMENTAL = "E"
    CONTROL = "C"

    @property
    def other(self) -> "Arm":
        return Arm.CONTROL if self is Arm.EXPERIMENTAL else Arm.EXPERIMENTAL


@dataclass(frozen=True)
class CovariateSpec:
    """One baseline characteristic and its generative role.

    ``params`` is ``(p,)`` for bernoulli, ``(mean, sd)`` for normal and the
    level probabilities for categorical. Categorical values are level
    indices; a scalar coefficient on a categorical covariate multiplies the
    level index, a sequence gives one contribution per level.
    """

    name: str
    distribution: str
    params: tuple[float, ...]
    response_logit_coef: float | tuple[float, ...] = 0.0
    outcome_coef: float | tuple[float, ...] = 0.0

    def validate(self) -> None:
        where = f"covariate {self.name!r}"
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError(f"{where}: unknown distribution {self.distribution!r}")
        p = tuple(float(x) for x in self.params)
        if not all(math.isfinite(x) for x in p):
            raise ConfigError(f"{where}: parameters must be finite")
        if self.distribution == "bernoulli":
            if len(p) != 1 or not 0.0 <= p[0] <= 1.0:
                raise ConfigError(f"{where}: bernoulli needs one probability in [0, 1]")
        elif self.distribution == "normal":
            if len(p) != 2 or p[1] <= 0:
                raise ConfigError(f"{where}: normal needs (mean, sd) with sd > 0")
        else:
            if len(p) < 2 or any(x < 0 or x > 1 for x in p):
                raise ConfigError(f"{where}: categorical needs >= 2 level probabilities in [0, 1]")
            if abs(sum(p) - 1.0) > 1e-9:
                raise ConfigError(f"{where}: categorical probabilities sum to {sum(p)!r}, not 1")
        for label, coef in (("response_logit_coef", self.response_logit_coef),
                            ("outcome_coef", self.outcome_coef)):
            if isinstance(coef, tuple):
                if self.distribution != "categorical" or len(coef) != len(p):
                    raise ConfigError(f"{where}: {label} sequence needs one value per categorical level")

    @property
    def n_levels(self) -> int:
        return len(self.params) if self.distribution == "categorical" else 0

    @property
    def n_columns(self) -> int:
        """Columns this covariate occupies in a logistic design matrix."""
        return self.n_levels - 1 if self.distribution == "categorical" else 1

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.distribution == "bernoulli":
            return (rng.random(n) < self.params[0]).astype(float)
        if self.distribution == "normal":
            return rng.normal(self.params[0], self.params[1], n)
        return rng.choice(len(self.params), size=n, p=np.asarray(self.params)).astype(float)

    def contribution(self, values: np.ndarray, coef: float | tuple[float, ...]) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if isinstance(coef, tuple):
            return np.asarray(coef, dtype=float)[values.astype(int)]
        return float(coef) * values

    def design_columns(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.distribution == "categorical":
            levels = values.astype(int)
            return np.stack([(levels == k).astype(float) for k in range(1, self.n_levels)], axis=-1)
        return values[..., None]


@dataclass(frozen=True)
class OutcomeModel:
    """Generative model for a continuous outcome.

    ``period_effects[t]`` shifts period ``t`` of a schedule (missing indices
    contribute 0). Carryover of ``carryover`` times the individual effect
    leaks into a period that follows an Experimental period when the washout
    between them is shorter than ``washout_full`` days. ``baseline_sd`` is
    the between-patient spread of baseline levels and ``tau_het`` the
    spread of effects among true responders.
    """

    baseline_mean: float = 0.0
    responder_effect: float = 0.0
    nonresponder_effect: float = 0.0
    period_effects: tuple[float, ...] = ()
    carryover: float = 0.0
    residual_sd: float = 1.0
    improvement_direction: str = "increase"
    reversible: bool = True
    tau_het: float = 0.0
    baseline_sd: float = 0.0
    baseline_measurement_sd: float = 0.0
    washout_full: int = 0

    def validate(self) -> None:
        if not self.residual_sd > 0:
            raise ConfigError("outcome: residual_sd must be > 0")
        if not 0.0 <= self.carryover <= 1.0:
            raise ConfigError("outcome: carryover must lie in [0, 1]")
        if self.improvement_direction not in ("increase", "decrease"):
            raise ConfigError("outcome: improvement_direction must be 'increase' or 'decrease'")
        for label in ("tau_het", "baseline_sd", "baseline_measurement_sd"):
            if getattr(self, label) < 0:
                raise ConfigError(f"outcome: {label} must be >= 0")
        if self.washout_full < 0:
            raise ConfigError("outcome: washout_full must be >= 0")

    @property
    def sign(self) -> float:
        return 1.0 if self.improvement_direction == "increase" else -1.0

    def period_effect(self, t: int) -> float:
        return self.period_effects[t] if t < len(self.period_effects) else 0.0


@dataclass(frozen=True)
class PatientProfile:
    id: int
    covariates: tuple[float, ...]
    latent_responder: bool = field(repr=False)
    individual_effect: float = field(repr=False)
    baseline_level: float = 0.0


@dataclass(frozen=True)
class Period:
    arm: Arm
    length: int
    preceding_washout: int = 0

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("period length must be > 0")
        if self.preceding_washout < 0:
            raise ValueError("washout must be >= 0")


TreatmentSchedule = Sequence[Period]


def validate_covariates(covariates: Sequence[CovariateSpec]) -> None:
    seen = set()
    for spec in covariates:
        spec.validate()
        if spec.name in seen:
            raise ConfigError(f"covariate {spec.name!r} defined twice")
        seen.add(spec.name)


def responder_probability(covariates: Sequence[CovariateSpec], intercept: float,
                          values: np.ndarray) -> np.ndarray:
    """Population responder propensity for an (n, n_covariates) value array."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    eta = np.full(values.shape[0], float(intercept))
    for j, spec in enumerate(covariates):
        eta += spec.contribution(values[:, j], spec.response_logit_coef)
    return expit(eta)


def draw_patients(n: int, covariates: Sequence[CovariateSpec], response_intercept: float,
                        model: OutcomeModel, rng: np.random.Generator,
                        first_id: int = 0) -> list[PatientProfile]:
    """Draw ``n`` patients with covariates, latent responder status and baselines.

    Draw order is fixed (covariates in declaration order, then responder
    flags, effect heterogeneity and baseline spread), so a given generator
    state always yields the same population.
    """
    if n < 1:
        raise ConfigError("population: need at least one patient")
    validate_covariates(covariates)
    columns = [spec.sample(rng, n) for spec in covariates]
    values = np.column_stack(columns) if columns else np.empty((n, 0))
    prob = responder_probability(covariates, response_intercept, values)
    latent = rng.random(n) < prob
    het = rng.normal(0.0, model.tau_het, n) if model.tau_het > 0 else np.zeros(n)
    effect = np.where(latent, model.responder_effect + het, model.nonresponder_effect)
    baseline = np.full(n, model.baseline_mean)
    for j, spec in enumerate(covariates):
        baseline += spec.contribution(values[:, j], spec.outcome_coef)
    if model.baseline_sd > 0:
        baseline += rng.normal(0.0, model.baseline_sd, n)
    rows = values.tolist()
    return [
        PatientProfile(first_id + i, tuple(rows[i]), bool(latent[i]), float(effect[i]), float(baseline[i]))
        for i in range(n)
    ]


def generate_population(config, seed: int) -> list[PatientProfile]:
    """Stage-1 cohort for a validated scenario, reproducible from ``seed``."""
    from .rng import Stream, stream

    pop = config.population
    return draw_patients(pop.n_stage1, pop.covariates, pop.response_intercept, config.outcome,
                         stream(seed, Stream.POPULATION))


def measure_baseline(profile: PatientProfile, model: OutcomeModel, rng: np.random.Generator) -> float:
    """Pre-treatment assessment of a patient's outcome level."""
    if model.baseline_measurement_sd > 0:
        return profile.baseline_level + float(rng.normal(0.0, model.baseline_measurement_sd))
    return profile.baseline_level


def mean_outcomes(profile: PatientProfile, schedule: TreatmentSchedule, model: OutcomeModel,
                  previous_arm: Arm | None = None) -> list[float]:
    """Noise-free outcome means for each period of ``schedule``.

    ``previous_arm`` is the arm of the period immediately before the
    schedule (Experimental for Stage-1 patients entering Stage 2). For a
    non-reversible outcome a previous Experimental period means the
    baseline has already been raised.
    """
    if not schedule:
        raise ValueError("schedule must contain at least one period")
    effect = model.sign * profile.individual_effect
    baseline = profile.baseline_level
    ratcheted = False
    if not model.reversible and previous_arm is Arm.EXPERIMENTAL:
        baseline += effect
        ratcheted = True
    prev = previous_arm
    means = []
    for t, period in enumerate(schedule):
        mu = baseline + model.period_effect(t)
        if period.arm is Arm.EXPERIMENTAL:
            if model.reversible:
                mu += effect
            elif not ratcheted:
                baseline += effect
                ratcheted = True
                mu += effect
        if (model.reversible and prev is Arm.EXPERIMENTAL
                and period.preceding_washout < model.washout_full):
            mu += model.carryover * effect
        means.append(mu)
        prev = period.arm
    return means


def simulate_outcomes(profile: PatientProfile, schedule: TreatmentSchedule, model: OutcomeModel,
                      rng: np.random.Generator, previous_arm: Arm | None = None) -> list[float]:
    means = mean_outcomes(profile, schedule, model, previous_arm)
    noise = rng.normal(0.0, model.residual_sd, len(means))
    return [m + float(e) for m, e in zip(means, noise)]
