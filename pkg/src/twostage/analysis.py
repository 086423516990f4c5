"""Treatment-effect estimators for Stage 2 and the interim stopping rule.

All point estimates are Experimental minus Control in outcome units, except
the adaptive randomization test whose statistic is a difference in success
proportions. ``alternative`` is one of ``"two-sided"``, ``"greater"`` or
``"less"`` and always refers to that Experimental-minus-Control difference.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from . import kernels
from .errors import ConfigError, InsufficientDataError
from .population import Arm
from .urn import UrnState

VARIANCE_FLOOR = 1e-12
ALTERNATIVES = ("two-sided", "greater", "less")


@dataclass(frozen=True)
class EffectEstimate:
    point: float
    standard_error: float | None
    p_value: float
    method: str
    n_used: int
    alternative: str = "two-sided"

    def to_dict(self) -> dict:
        return {"method": self.method, "point": self.point, "se": self.standard_error,
                "p": self.p_value, "n_used": self.n_used, "alternative": self.alternative}


@dataclass(frozen=True)
class MetaResult:
    pooled_effect: float
    pooled_se: float
    tau_squared: float
    per_patient_effects: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class InterimRule:
    information_fraction: float = 0.5
    efficacy_alpha_interim: float = 0.005
    futility_p_threshold: float = 0.6
    final_alpha: float = 0.048

    def validate(self) -> None:
        if not 0.0 < self.information_fraction < 1.0:
            raise ConfigError("interim: information_fraction must lie in (0, 1)")
        if not 0.0 < self.efficacy_alpha_interim < self.final_alpha < 1.0:
            raise ConfigError("interim: need 0 < efficacy_alpha_interim < final_alpha < 1")
        if not 0.0 < self.futility_p_threshold <= 1.0:
            raise ConfigError("interim: futility_p_threshold must lie in (0, 1]")


class InterimDecision(str, enum.Enum):
    CONTINUE = "Continue"
    STOP_EFFICACY = "StopEfficacy"
    STOP_FUTILITY = "StopFutility"


def _check_alternative(alternative: str) -> None:
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")


def _t_pvalue(point: float, se: float, df: float, alternative: str) -> float:
    if se == 0 or not math.isfinite(df):
        # noise-free data: no evidence unless the difference is non-zero
        if point == 0:
            return 1.0
        if alternative == "two-sided":
            return 0.0
        return 0.0 if (point > 0) == (alternative == "greater") else 1.0
    t = point / se
    if alternative == "two-sided":
        p = 2.0 * stats.t.sf(abs(t), df)
    elif alternative == "greater":
        p = stats.t.sf(t, df)
    else:
        p = stats.t.cdf(t, df)
    return float(min(1.0, max(0.0, p)))


def crossover_estimate(data: Sequence[tuple[str, float, float]],
                       alternative: str = "two-sided") -> EffectEstimate:
    """2x2 crossover estimator from ``(sequence, period1, period2)`` rows.

    ``sequence`` is ``"AB"`` (Experimental first) or ``"BA"``. Half the
    difference between the sequence-group means of the period differences
    cancels any period effect; the standard error and p-value come from the
    pooled two-sample t on those differences.
    """
    _check_alternative(alternative)
    ab = np.array([y1 - y2 for seq, y1, y2 in data if seq == "AB"], dtype=float)
    ba = np.array([y1 - y2 for seq, y1, y2 in data if seq == "BA"], dtype=float)
    if len(ab) + len(ba) != len(data):
        raise ValueError("sequence labels must be 'AB' or 'BA'")
    if len(ab) < 2 or len(ba) < 2:
        raise InsufficientDataError("crossover needs at least 2 patients per sequence")
    n1, n2 = len(ab), len(ba)
    point = (ab.mean() - ba.mean()) / 2.0
    pooled = ((n1 - 1) * ab.var(ddof=1) + (n2 - 1) * ba.var(ddof=1)) / (n1 + n2 - 2)
    se = math.sqrt(pooled * (1.0 / n1 + 1.0 / n2)) / 2.0
    p = _t_pvalue(point, se, n1 + n2 - 2, alternative)
    return EffectEstimate(float(point), se, p, "crossover-t", n1 + n2, alternative)


def nof1_effect(cycles: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Mean within-cycle difference and its variance for one patient."""
    d = np.array([e - c for e, c in cycles], dtype=float)
    if len(d) < 2:
        raise InsufficientDataError("an n-of-1 trial needs at least 2 cycles")
    return float(d.mean()), float(d.var(ddof=1) / len(d))


def _floor_variances(variances: np.ndarray) -> np.ndarray:
    if np.any(variances <= 0):
        warnings.warn("zero per-patient variance floored at 1e-12", RuntimeWarning, stacklevel=3)
        variances = np.maximum(variances, VARIANCE_FLOOR)
    return variances


def fixed_effect_combine(per_patient: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Inverse-variance pooled effect and its standard error."""
    e = np.array([x for x, _ in per_patient], dtype=float)
    w = 1.0 / _floor_variances(np.array([v for _, v in per_patient], dtype=float))
    return float(np.sum(w * e) / np.sum(w)), float(np.sum(w) ** -0.5)


def meta_combine(per_patient: Sequence[tuple[float, float]]) -> MetaResult:
    """DerSimonian-Laird random-effects pooling of per-patient estimates."""
    if len(per_patient) < 2:
        raise InsufficientDataError("meta-analysis needs at least 2 patients")
    e = np.array([x for x, _ in per_patient], dtype=float)
    v = _floor_variances(np.array([v for _, v in per_patient], dtype=float))
    m = len(e)
    w = 1.0 / v
    sw = w.sum()
    fixed = np.sum(w * e) / sw
    q = float(np.sum(w * (e - fixed) ** 2))
    c = sw - np.sum(w * w) / sw
    tau2 = max(0.0, (q - (m - 1)) / c) if c > 0 else 0.0
    ws = 1.0 / (v + tau2)
    pooled = float(np.sum(ws * e) / np.sum(ws))
    return MetaResult(pooled, float(np.sum(ws) ** -0.5), tau2,
                      tuple((float(a), float(b)) for a, b in zip(e, v)))


def nof1_series_test(patients: Sequence[Sequence[tuple[float, float]]], alternative: str = "two-sided",
                     pool_within_variance: bool = True) -> tuple[EffectEstimate, MetaResult]:
    """Population effect from a series of n-of-1 trials.

    Each patient contributes their mean cycle difference. With
    ``pool_within_variance`` the within-patient variance of the cycle
    differences is pooled across patients before weighting, because a
    variance estimated from two or three cycles makes inverse-variance
    weights erratic. The DerSimonian-Laird pooled effect is then tested
    against a t distribution with m-1 degrees of freedom using the
    Hartung-Knapp standard error.
    """
    _check_alternative(alternative)
    if len(patients) < 2:
        raise InsufficientDataError("n-of-1 series needs at least 2 patients")
    per_patient = [nof1_effect(c) for c in patients]
    if pool_within_variance:
        diffs = [np.array([e - c for e, c in cyc]) for cyc in patients]
        ss = sum(float(np.sum((d - d.mean()) ** 2)) for d in diffs)
        dof = sum(len(d) - 1 for d in diffs)
        s2 = ss / dof
        per_patient = [(est, s2 / len(d)) for (est, _), d in zip(per_patient, diffs)]
    meta = meta_combine(per_patient)
    e = np.array([x for x, _ in meta.per_patient_effects])
    ws = 1.0 / (np.array([v for _, v in meta.per_patient_effects]) + meta.tau_squared)
    m = len(e)
    hk = float(np.sum(ws * (e - meta.pooled_effect) ** 2) / ((m - 1) * np.sum(ws)))
    se = math.sqrt(hk)
    p = _t_pvalue(meta.pooled_effect, se, m - 1, alternative)
    return EffectEstimate(meta.pooled_effect, se, p, "nof1-dl-hk", m, alternative), meta


def adaptive_randomization_test(successes: Sequence[bool], arms: Sequence[Arm], urn: UrnState,
                                n_resamples: int, rng: np.random.Generator,
                                alternative: str = "two-sided") -> EffectEstimate:
    """Randomization test for a randomized play-the-winner trial.

    The statistic is the Experimental minus Control success proportion.
    Its reference distribution re-runs the urn ``n_resamples`` times from
    ``urn`` over the patients in enrollment order with each patient's
    response held fixed, which is the allocation distribution under the
    null of no arm difference. p = (1 + #extreme) / (n_resamples + 1),
    where "extreme" is ``|stat| >= |observed|`` for a two-sided test.
    """
    _check_alternative(alternative)
    s = np.asarray(successes, dtype=bool)
    is_e = np.array([a is Arm.EXPERIMENTAL for a in arms], dtype=bool)
    if len(s) != len(is_e):
        raise ValueError("successes and arms must have equal length")
    n_e, n_c = int(is_e.sum()), int((~is_e).sum())
    if n_e < 2 or n_c < 2:
        raise InsufficientDataError("randomization test needs at least 2 patients per arm")
    observed = float(s[is_e].sum()) / n_e - float(s[~is_e].sum()) / n_c
    uniforms = rng.random((n_resamples, len(s)))
    ref = kernels.urn_null_statistics(np.ascontiguousarray(s, dtype=np.uint8), uniforms,
                                      urn.balls_experimental, urn.balls_control, urn.beta)
    eps = 1e-12
    if alternative == "two-sided":
        extreme = np.abs(ref) >= abs(observed) - eps
    elif alternative == "greater":
        extreme = ref >= observed - eps
    else:
        extreme = ref <= observed + eps
    p = (1.0 + float(np.count_nonzero(extreme))) / (n_resamples + 1.0)
    return EffectEstimate(observed, None, p, "rpw-randomization", len(s), alternative)


def parallel_test(experimental: Sequence[float], control: Sequence[float],
                  alternative: str = "two-sided") -> EffectEstimate:
    """Welch two-sample t test, Experimental minus Control."""
    _check_alternative(alternative)
    a = np.asarray(experimental, dtype=float)
    b = np.asarray(control, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise InsufficientDataError("parallel comparison needs at least 2 patients per arm")
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    se = math.sqrt(va + vb)
    point = float(a.mean() - b.mean())
    if se > 0:
        df = (va + vb) ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    else:
        df = math.inf
    p = _t_pvalue(point, se, df, alternative)
    return EffectEstimate(point, se, p, "welch-t", len(a) + len(b), alternative)


def interim_decide(interim_p: float, direction_favorable: bool, rule: InterimRule) -> InterimDecision:
    if not 0.0 <= interim_p <= 1.0:
        raise ValueError("interim p-value must lie in [0, 1]")
    if direction_favorable and interim_p < rule.efficacy_alpha_interim:
        return InterimDecision.STOP_EFFICACY
    if interim_p > rule.futility_p_threshold:
        return InterimDecision.STOP_FUTILITY
    return InterimDecision.CONTINUE
