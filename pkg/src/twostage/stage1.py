"""Enrichment stage: everyone gets the experimental treatment, then responders
are classified, the futility gate is applied and the covariate-response
association is fitted (exploratory).
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import RuleUnavailableError, SingularDesignError
from .population import (Arm, CovariateSpec, OutcomeModel, PatientProfile, Period,
                         measure_baseline, simulate_outcomes)

log = logging.getLogger(__name__)

SEPARATION_BOUND = 15.0


class Gate(str, enum.Enum):
    PROCEED = "Proceed"
    STOP_FUTILITY = "StopFutility"


@dataclass(frozen=True)
class ResponderCriteria:
    improvement_threshold: float
    require_patient_report: bool = False
    patient_report_sensitivity: float = 1.0
    patient_report_specificity: float = 1.0

    def validate(self) -> None:
        from .errors import ConfigError

        for label in ("patient_report_sensitivity", "patient_report_specificity"):
            if not 0.0 <= getattr(self, label) <= 1.0:
                raise ConfigError(f"stage1: {label} must lie in [0, 1]")


@dataclass(frozen=True)
class Stage1Record:
    """Observable Stage-1 data for one patient. Holds no latent truth."""

    id: int
    covariates: tuple[float, ...]
    pre: float
    post: float
    improvement: float
    self_report: bool
    responder: bool


@dataclass(frozen=True)
class Stage1Result:
    records: tuple[Stage1Record, ...]
    gate: Gate
    responder_proportion: float

    @property
    def responder_ids(self) -> list[int]:
        return [r.id for r in self.records if r.responder]


@dataclass(frozen=True)
class LogisticFit:
    coefficients: np.ndarray
    standard_errors: np.ndarray
    converged: bool
    iterations: int
    separation_detected: bool
    exploratory: bool = True

    def predict(self, design_matrix: np.ndarray) -> np.ndarray:
        return expit(np.asarray(design_matrix, dtype=float) @ self.coefficients)


def improvement(pre: float, post: float, direction: str) -> float:
    return post - pre if direction == "increase" else pre - post


def classify_responder(pre: float, post: float, direction: str, criteria: ResponderCriteria,
                       self_report: bool) -> bool:
    """Responder iff the improvement reaches the threshold (ties count) and,
    when required, the patient also reports a benefit."""
    gain = improvement(pre, post, direction)
    return gain >= criteria.improvement_threshold and (
        self_report or not criteria.require_patient_report)


def gate_decision(n_responders: int, n_total: int, p_min: float) -> Gate:
    if n_total < 1 or not 0 <= n_responders <= n_total:
        raise ValueError("need 0 <= n_responders <= n_total and n_total >= 1")
    # 0.3 * 20 evaluates to 6.000000000000001; ties must still proceed
    return Gate.PROCEED if n_responders >= p_min * n_total - 1e-12 * n_total else Gate.STOP_FUTILITY


def classify_stage1(observations: Sequence[tuple[int, tuple[float, ...], float, float, bool]],
                    direction: str, criteria: ResponderCriteria, p_min: float) -> Stage1Result:
    """Classify from observables only: ``(id, covariates, pre, post, self_report)`` rows."""
    records = []
    for pid, cov, pre, post, report in observations:
        records.append(Stage1Record(
            pid, cov, pre, post, improvement(pre, post, direction), report,
            classify_responder(pre, post, direction, criteria, report)))
    n_resp = sum(r.responder for r in records)
    return Stage1Result(tuple(records), gate_decision(n_resp, len(records), p_min),
                        n_resp / len(records))


def simulate_self_report(latent_responder: bool, criteria: ResponderCriteria,
                         rng: np.random.Generator) -> bool:
    u = rng.random()
    if latent_responder:
        return bool(u < criteria.patient_report_sensitivity)
    return bool(u >= criteria.patient_report_specificity)


def run_stage1(population: Sequence[PatientProfile], model: OutcomeModel, criteria: ResponderCriteria,
               p_min: float, rng: np.random.Generator, period_days: int = 1) -> Stage1Result:
    if not population:
        raise ValueError("Stage 1 needs at least one patient")
    schedule = (Period(Arm.EXPERIMENTAL, period_days, 0),)
    observations = []
    for patient in population:
        pre = measure_baseline(patient, model, rng)
        (post,) = simulate_outcomes(patient, schedule, model, rng)
        report = simulate_self_report(patient.latent_responder, criteria, rng)
        observations.append((patient.id, patient.covariates, pre, post, report))
    return classify_stage1(observations, model.improvement_direction, criteria, p_min)


def classification_accuracy(result: Stage1Result, population: Sequence[PatientProfile]):
    """(true positives, latent responders, true negatives, latent non-responders)."""
    truth = {p.id: p.latent_responder for p in population}
    tp = sum(r.responder and truth[r.id] for r in result.records)
    tn = sum(not r.responder and not truth[r.id] for r in result.records)
    pos = sum(truth[r.id] for r in result.records)
    return tp, pos, tn, len(result.records) - pos


def _loglik(eta: np.ndarray, y: np.ndarray) -> float:
    # log(1 + e^eta) computed stably
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def fit_logistic(design_matrix, labels, max_iter: int = 50, tol: float = 1e-8) -> LogisticFit:
    """Maximum-likelihood logistic regression by iteratively reweighted least squares.

    Parameters
    ----------
    design_matrix : (n, k+1) array
        Must include the intercept column.
    labels : (n,) array of bool
    max_iter, tol
        Iteration stops when the largest absolute score component or the
        Newton step norm falls below ``tol``.

    Returns
    -------
    LogisticFit
        ``separation_detected`` is set, and iteration abandoned, once any
        coefficient exceeds 15 in absolute value on the log-odds scale.

    Raises
    ------
    SingularDesignError
        If the design has fewer than k+2 rows or is not of full column rank.
    """
    X = np.asarray(design_matrix, dtype=float)
    y = np.asarray(labels, dtype=float)
    n, p = X.shape
    if n < p + 1 or np.linalg.matrix_rank(X) < p:
        raise SingularDesignError(f"design matrix {n}x{p} is rank deficient or too small")

    beta = np.zeros(p)
    eta = X @ beta
    ll = _loglik(eta, y)
    converged = separated = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(eta)
        score = X.T @ (y - mu)
        if np.max(np.abs(score)) < tol:
            converged = True
            it -= 1
            break
        w = mu * (1.0 - mu)
        info = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            separated = True
            break
        t = 1.0
        while True:
            cand = beta + t * step
            cand_eta = X @ cand
            cand_ll = _loglik(cand_eta, y)
            if cand_ll >= ll - 1e-12 or t < 1e-10:
                break
            t *= 0.5
        beta, eta, ll = cand, cand_eta, cand_ll
        if np.max(np.abs(beta)) > SEPARATION_BOUND:
            separated = True
            break
        if np.linalg.norm(t * step) < tol:
            converged = True
            break

    mu = expit(eta)
    w = mu * (1.0 - mu)
    info = X.T @ (X * w[:, None])
    try:
        se = np.sqrt(np.diag(np.linalg.inv(info)))
    except np.linalg.LinAlgError:
        se = np.full(p, np.inf)
    return LogisticFit(beta, se, converged and not separated, it, separated)


def design_matrix(covariate_specs: Sequence[CovariateSpec], values) -> np.ndarray:
    """Intercept plus one column per covariate (dummy-coded categoricals)."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    cols = [np.ones((values.shape[0], 1))]
    for j, spec in enumerate(covariate_specs):
        cols.append(spec.design_columns(values[:, j]))
    return np.hstack(cols)


def fit_stage1_association(result: Stage1Result, covariate_specs: Sequence[CovariateSpec],
                           max_iter: int = 50, tol: float = 1e-8) -> LogisticFit:
    X = design_matrix(covariate_specs, [r.covariates for r in result.records])
    y = np.array([r.responder for r in result.records])
    return fit_logistic(X, y, max_iter, tol)


def derive_exclusion_rule(fit: LogisticFit, covariate_specs: Sequence[CovariateSpec],
                          prob_cutoff: float) -> Callable[[Sequence[float]], bool]:
    """Predicate that is True for covariate vectors to *exclude*.

    A patient is excluded when their predicted response probability falls
    below ``prob_cutoff``.
    """
    if not fit.converged or fit.separation_detected:
        raise RuleUnavailableError("association fit did not converge cleanly")
    if not 0.0 < prob_cutoff < 1.0:
        raise ValueError("prob_cutoff must lie in (0, 1)")
    specs = tuple(covariate_specs)

    def excluded(covariates: Sequence[float]) -> bool:
        prob = fit.predict(design_matrix(specs, [covariates]))[0]
        return bool(prob < prob_cutoff)

    return excluded
