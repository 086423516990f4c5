"""One replication of the two-stage protocol, run as a phase state machine.

    Enrolling -> Stage1 -> Gate -> Stopped(Stage1Futility)
                                -> Washout -> Stage2 -> Stopped(reason)
                                                     -> Completed

In reversible mode the Stage-2 cohort is the Stage-1 responders. With fresh
recruitment (non-reversible outcomes, or the efficiency variant) new patients
are drawn from the same population and screened with the exclusion rule
fitted on Stage-1 data.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any


from .analysis import EffectEstimate, InterimDecision
from .config import ScenarioConfig
from .errors import (DesignInfeasibleError, IllegalTransitionError, InsufficientDataError,
                     RuleUnavailableError, SingularDesignError)
from .events import EventLog
from .population import Arm, PatientProfile, draw_patients, generate_population, measure_baseline
from .rng import Stream, stream
from .stage1 import (LogisticFit, Stage1Result, classification_accuracy, derive_exclusion_rule,
                     fit_stage1_association, run_stage1, Gate)
from .stage2 import (ResponseAdaptive, Stage2Data, Stage2Patient, Stage2Settings, analyze,
                     run_stage2)


class Phase(str, enum.Enum):
    ENROLLING = "Enrolling"
    STAGE1 = "Stage1"
    GATE = "Gate"
    WASHOUT = "Washout"
    STAGE2 = "Stage2"
    STOPPED = "Stopped"
    COMPLETED = "Completed"


class StopReason(str, enum.Enum):
    STAGE1_FUTILITY = "Stage1Futility"
    INTERIM_FUTILITY = "InterimFutility"
    INTERIM_EFFICACY = "InterimEfficacy"
    FINAL_ANALYSIS = "FinalAnalysis"
    DESIGN_INFEASIBLE = "DesignInfeasible"
    INSUFFICIENT_DATA = "InsufficientData"


class Decision(str, enum.Enum):
    EFFECTIVE = "EffectiveForResponders"
    INEFFECTIVE = "Ineffective"
    STOPPED_EARLY = "StoppedEarly"


ALLOWED_TRANSITIONS = {
    Phase.ENROLLING: {Phase.STAGE1},
    Phase.STAGE1: {Phase.GATE},
    Phase.GATE: {Phase.STOPPED, Phase.WASHOUT},
    Phase.WASHOUT: {Phase.STAGE2},
    Phase.STAGE2: {Phase.STOPPED, Phase.COMPLETED},
    Phase.STOPPED: set(),
    Phase.COMPLETED: set(),
}


class TrialStateMachine:
    def __init__(self, events: EventLog):
        self.phase = Phase.ENROLLING
        self.reason: StopReason | None = None
        self.history: list[tuple[Phase, Phase]] = []
        self._events = events
        self._visited = {Phase.ENROLLING}

    def advance(self, to: Phase, reason: StopReason | None = None) -> None:
        if to not in ALLOWED_TRANSITIONS[self.phase] or to in self._visited:
            raise IllegalTransitionError(f"{self.phase.value} -> {to.value}")
        self._events.emit("transition", source=self.phase.value, target=to.value,
                          reason=reason.value if reason else None)
        self.history.append((self.phase, to))
        self._visited.add(to)
        self.phase = to
        self.reason = reason


@dataclass(frozen=True)
class TrialMetrics:
    total_enrolled: int
    total_duration_days: int
    access_proportion: float
    stage2_n: int
    stage2_access_proportion: float
    stage2_experimental_fraction: float


@dataclass
class TrialAudit:
    """What :func:`compute_metrics` needs to know about a finished replication."""

    n_stage1: int
    stage1_days: int
    fresh_recruits: bool
    first_washout: int = 0
    stage2: Stage2Data | None = None


@dataclass
class TrialResult:
    seed: int
    design: str
    decision: Decision
    stop_reason: StopReason | None
    effect: EffectEstimate | None
    stage1: Stage1Result
    logistic: LogisticFit | None
    metrics: TrialMetrics
    classification: tuple[int, int, int, int]
    stage2: Stage2Data | None = None
    events: EventLog = field(default_factory=EventLog)
    transitions: list[tuple[Phase, Phase]] = field(default_factory=list)
    deviations: list[str] = field(default_factory=list)

    @property
    def rejected(self) -> bool:
        """The trial declared the treatment effective (finally or at the interim)."""
        return self.decision is Decision.EFFECTIVE or self.stop_reason is StopReason.INTERIM_EFFICACY

    def summary(self) -> dict[str, Any]:
        out = {"seed": self.seed, "design": self.design, "decision": self.decision.value,
               "stop_reason": self.stop_reason.value if self.stop_reason else None,
               "rejected": self.rejected,
               "effect": self.effect.to_dict() if self.effect else None,
               "interim": (self.stage2.interim_decision.value
                           if self.stage2 is not None and self.stage2.interim_decision else None),
               "stage1": {"gate": self.stage1.gate.value,
                          "responder_proportion": self.stage1.responder_proportion},
               "association": None, "metrics": self.metrics.__dict__, "deviations": self.deviations}
        if self.logistic is not None:
            out["association"] = {"exploratory": True,
                                  "coefficients": self.logistic.coefficients.tolist(),
                                  "standard_errors": self.logistic.standard_errors.tolist(),
                                  "converged": self.logistic.converged,
                                  "separation_detected": self.logistic.separation_detected}
        return out


def compute_metrics(audit: TrialAudit) -> TrialMetrics:
    """Enrollment, critical-path duration and treatment access for one trial.

    Every Stage-1 patient received the experimental treatment. Fresh Stage-2
    recruits count as enrolled and as having access only if they were
    observed on the Experimental arm at least once.
    """
    data = audit.stage2
    if data is None:
        return TrialMetrics(audit.n_stage1, audit.stage1_days, 1.0, 0, math.nan, math.nan)
    exposure = data.experimental_exposure()
    n2 = len(data.enrolled)
    exposed2 = sum(exposure.values())
    total = audit.n_stage1 + (n2 if audit.fresh_recruits else 0)
    accessed = audit.n_stage1 + (exposed2 if audit.fresh_recruits else 0)
    duration = audit.stage1_days + (audit.first_washout + sum(data.cohort_lengths) if n2 else 0)
    return TrialMetrics(total, duration, accessed / total, n2,
                        exposed2 / n2 if n2 else math.nan,
                        data.experimental_fraction() if n2 else math.nan)


def _recruit(scenario: ScenarioConfig, excluded, seed: int, first_id: int,
             deviations: list[str]) -> list[Stage2Patient]:
    pop, s2 = scenario.population, scenario.stage2
    rng = stream(seed, Stream.RECRUITMENT)
    wanted = s2.n_stage2
    limit = wanted * s2.max_screen_factor
    screened = 0
    chosen: list[PatientProfile] = []
    while len(chosen) < wanted and screened < limit:
        batch = draw_patients(min(wanted, limit - screened), pop.covariates, pop.response_intercept,
                              scenario.outcome, rng, first_id + screened)
        screened += len(batch)
        for profile in batch:
            if excluded is None or not excluded(profile.covariates):
                chosen.append(profile)
                if len(chosen) == wanted:
                    break
    if len(chosen) < wanted:
        deviations.append(f"recruited {len(chosen)} of {wanted} after screening {screened}")
    return [Stage2Patient(p, measure_baseline(p, scenario.outcome, rng), None) for p in chosen]


def run_trial(scenario: ScenarioConfig, seed: int) -> TrialResult:
    """Run one full replication; deterministic in ``(scenario, seed)``."""
    events = EventLog()
    sm = TrialStateMachine(events)
    model = scenario.outcome
    s1cfg, s2cfg = scenario.stage1, scenario.stage2
    design = s2cfg.design
    deviations: list[str] = []

    population = generate_population(scenario, seed)
    events.emit("enrolled", n=len(population))
    sm.advance(Phase.STAGE1)
    s1 = run_stage1(population, model, s1cfg.criteria, s1cfg.p_min, stream(seed, Stream.STAGE1),
                    period_days=s1cfg.stage1_days)
    classification = classification_accuracy(s1, population)
    try:
        fit = fit_stage1_association(s1, scenario.population.covariates)
    except SingularDesignError:
        fit = None
    sm.advance(Phase.GATE)
    events.emit("gate", decision=s1.gate.value, responder_proportion=s1.responder_proportion)
    audit = TrialAudit(len(population), s1cfg.stage1_days, scenario.fresh_recruits)

    def finish(decision, reason, effect=None, stage2=None):
        return TrialResult(seed, design.name, decision, reason, effect, s1, fit, compute_metrics(audit),
                           classification, stage2, events, list(sm.history), deviations)

    if s1.gate is Gate.STOP_FUTILITY:
        sm.advance(Phase.STOPPED, StopReason.STAGE1_FUTILITY)
        return finish(Decision.STOPPED_EARLY, StopReason.STAGE1_FUTILITY)

    sm.advance(Phase.WASHOUT)
    if scenario.fresh_recruits:
        try:
            excluded = derive_exclusion_rule(fit, scenario.population.covariates, s2cfg.prob_cutoff) \
                if fit is not None else None
            if excluded is None:
                raise RuleUnavailableError("no association fit")
        except RuleUnavailableError:
            excluded = None
            deviations.append("exclusion rule unavailable; recruiting on Stage-1 inclusion criteria")
        patients = _recruit(scenario, excluded, seed, len(population), deviations)
        first_washout = 0
    else:
        by_id = {p.id: p for p in population}
        patients = [Stage2Patient(by_id[r.id], r.pre, Arm.EXPERIMENTAL)
                    for r in s1.records if r.responder]
        first_washout = s2cfg.washout_days
    for d in deviations:
        events.emit("deviation", detail=d)
    audit.first_washout = first_washout

    threshold = design.success_threshold if isinstance(design, ResponseAdaptive) else None
    settings = Stage2Settings(
        period_days=s2cfg.period_days, washout_days=s2cfg.washout_days, first_washout=first_washout,
        dropout_prob=s2cfg.dropout_prob, n_resamples=s2cfg.n_resamples,
        success_threshold=s1cfg.criteria.improvement_threshold if threshold is None else threshold,
        direction=model.improvement_direction)

    sm.advance(Phase.STAGE2)
    analysis_rng = stream(seed, Stream.ANALYSIS)
    try:
        data = run_stage2(design, patients, model, s2cfg.interim, stream(seed, Stream.STAGE2), settings,
                          events=events, token_rng=stream(seed, Stream.TOKENS), analysis_rng=analysis_rng)
    except DesignInfeasibleError as exc:
        events.emit("infeasible", detail=str(exc))
        sm.advance(Phase.STOPPED, StopReason.DESIGN_INFEASIBLE)
        return finish(Decision.STOPPED_EARLY, StopReason.DESIGN_INFEASIBLE)
    audit.stage2 = data

    if data.interim_decision is InterimDecision.STOP_EFFICACY:
        sm.advance(Phase.STOPPED, StopReason.INTERIM_EFFICACY)
        return finish(Decision.STOPPED_EARLY, StopReason.INTERIM_EFFICACY, data.interim_estimate, data)
    if data.interim_decision is InterimDecision.STOP_FUTILITY:
        sm.advance(Phase.STOPPED, StopReason.INTERIM_FUTILITY)
        return finish(Decision.STOPPED_EARLY, StopReason.INTERIM_FUTILITY, data.interim_estimate, data)

    try:
        estimate = analyze(data, settings, analysis_rng)
    except InsufficientDataError as exc:
        events.emit("analysis", error=str(exc))
        sm.advance(Phase.STOPPED, StopReason.INSUFFICIENT_DATA)
        return finish(Decision.STOPPED_EARLY, StopReason.INSUFFICIENT_DATA, None, data)
    events.emit("analysis", **estimate.to_dict())
    sm.advance(Phase.COMPLETED, StopReason.FINAL_ANALYSIS)
    decision = Decision.EFFECTIVE if estimate.p_value < scenario.mc.alpha_final else Decision.INEFFECTIVE
    return finish(decision, StopReason.FINAL_ANALYSIS, estimate, data)
