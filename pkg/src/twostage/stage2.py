"""Comparative stage: planning, execution and interim look for the four designs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import analysis
from .analysis import EffectEstimate, InterimDecision, InterimRule
from .errors import ConfigError, DesignInfeasibleError, InsufficientDataError
from .events import EventLog
from .population import Arm, OutcomeModel, PatientProfile, Period, simulate_outcomes
from .stage1 import improvement
from .urn import UrnState, urn_draw, urn_update

E, C = Arm.EXPERIMENTAL, Arm.CONTROL


@dataclass(frozen=True)
class Crossover:
    name = "crossover"


@dataclass(frozen=True)
class NOf1:
    cycles: int = 3
    name = "nof1"

    def __post_init__(self):
        if self.cycles < 2:
            raise ConfigError("nof1: cycles must be >= 2")


@dataclass(frozen=True)
class ResponseAdaptive:
    urn: UrnState = UrnState()
    success_threshold: float | None = None
    name = "adaptive"


@dataclass(frozen=True)
class ParallelGroup:
    name = "parallel"


DesignChoice = Union[Crossover, NOf1, ResponseAdaptive, ParallelGroup]
DESIGN_NAMES = ("crossover", "nof1", "adaptive", "parallel")


def make_design(name: str, cycles: int = 3, urn: UrnState | None = None,
                success_threshold: float | None = None) -> DesignChoice:
    if name == "crossover":
        return Crossover()
    if name == "nof1":
        return NOf1(cycles)
    if name == "adaptive":
        return ResponseAdaptive(urn or UrnState(), success_threshold)
    if name == "parallel":
        return ParallelGroup()
    raise ConfigError(f"unknown design {name!r}; expected one of {', '.join(DESIGN_NAMES)}")


@dataclass(frozen=True)
class Stage2Patient:
    """A patient entering Stage 2 with their observed baseline assessment."""

    profile: PatientProfile
    pre: float
    previous_arm: Arm | None = None


@dataclass(frozen=True)
class Stage2Settings:
    period_days: int = 14
    washout_days: int = 7
    first_washout: int = 7
    dropout_prob: float = 0.0
    n_resamples: int = 2000
    success_threshold: float = 0.0
    direction: str = "increase"


@dataclass(frozen=True)
class AllocationRecord:
    patient_id: int
    periods: tuple[tuple[int, Arm, str], ...]
    urn_snapshot: tuple[int, int] | None = None


@dataclass(frozen=True)
class Observation:
    patient_id: int
    period: int
    arm: Arm
    outcome: float
    urn_e: int | None = None
    urn_c: int | None = None


@dataclass
class Stage2Data:
    design: DesignChoice
    n_planned: int
    enrolled: list[int] = field(default_factory=list)
    allocations: dict[int, AllocationRecord] = field(default_factory=dict)
    observations: list[Observation] = field(default_factory=list)
    pre: dict[int, float] = field(default_factory=dict)
    covariates: dict[int, tuple[float, ...]] = field(default_factory=dict)
    successes: dict[int, bool] = field(default_factory=dict)
    cohort_lengths: list[int] = field(default_factory=list)
    interim_decision: InterimDecision | None = None
    interim_estimate: EffectEstimate | None = None
    interim_skipped: str | None = None

    def outcomes_by_patient(self) -> dict[int, dict[int, Observation]]:
        out: dict[int, dict[int, Observation]] = {}
        for obs in self.observations:
            out.setdefault(obs.patient_id, {})[obs.period] = obs
        return out

    def experimental_exposure(self) -> dict[int, bool]:
        """Whether each enrolled patient was observed on Experimental at least once."""
        exposed = {pid: False for pid in self.enrolled}
        for obs in self.observations:
            if obs.arm is E:
                exposed[obs.patient_id] = True
        return exposed

    def experimental_fraction(self) -> float:
        if not self.observations:
            return float("nan")
        return sum(o.arm is E for o in self.observations) / len(self.observations)


def plan_crossover(patient_ids: Sequence[int], rng: np.random.Generator) -> list[str]:
    """AB/BA sequences from permuted blocks of two."""
    n = len(patient_ids)
    if n < 2:
        raise DesignInfeasibleError("crossover needs at least 2 patients")
    seqs: list[str] = []
    for _ in range(math.ceil(n / 2)):
        seqs.extend(("AB", "BA") if rng.random() < 0.5 else ("BA", "AB"))
    return seqs[:n]


def plan_nof1(k_cycles: int, rng: np.random.Generator) -> list[Arm]:
    """2k arms; each cycle is an independently randomized (E, C) or (C, E) pair."""
    if k_cycles < 2:
        raise ConfigError("n-of-1 plan needs at least 2 cycles")
    arms: list[Arm] = []
    for _ in range(k_cycles):
        arms.extend((E, C) if rng.random() < 0.5 else (C, E))
    return arms


def plan_parallel(patient_ids: Sequence[int], rng: np.random.Generator) -> list[Arm]:
    """1:1 allocation from permuted blocks of four."""
    n = len(patient_ids)
    arms: list[Arm] = []
    block = np.array([0, 0, 1, 1])
    for _ in range(math.ceil(n / 4)):
        arms.extend(E if b == 0 else C for b in rng.permutation(block))
    return arms[:n]


def _schedule(arms: Sequence[Arm], settings: Stage2Settings, first_washout: int) -> list[Period]:
    return [Period(a, settings.period_days, first_washout if t == 0 else settings.washout_days)
            for t, a in enumerate(arms)]


def _cohort_length(schedules: Sequence[Sequence[Period]]) -> int:
    # first washout is counted once for the whole stage by the caller
    return max(sum(p.length for p in s) + sum(p.preceding_washout for p in s[1:]) for s in schedules)


def _alternative(settings: Stage2Settings) -> str:
    return "greater" if settings.direction == "increase" else "less"


def analyze(data: Stage2Data, settings: Stage2Settings, rng: np.random.Generator,
            patient_ids: Sequence[int] | None = None) -> EffectEstimate:
    """Run the design's analysis on the enrolled patients (or a subset).

    Continuous designs use the one-sided alternative pointing in the
    improvement direction; the adaptive test is one-sided on the success
    proportion difference.
    """
    ids = list(data.enrolled if patient_ids is None else patient_ids)
    by_patient = data.outcomes_by_patient()
    design = data.design
    alt = _alternative(settings)
    if isinstance(design, Crossover):
        rows = []
        for pid in ids:
            obs = by_patient.get(pid, {})
            if 0 in obs and 1 in obs:
                seq = "AB" if obs[0].arm is E else "BA"
                rows.append((seq, obs[0].outcome, obs[1].outcome))
        return analysis.crossover_estimate(rows, alt)
    if isinstance(design, NOf1):
        series = []
        for pid in ids:
            obs = by_patient.get(pid, {})
            cycles = []
            for j in range(design.cycles):
                a, b = obs.get(2 * j), obs.get(2 * j + 1)
                if a is not None and b is not None:
                    ye, yc = (a.outcome, b.outcome) if a.arm is E else (b.outcome, a.outcome)
                    cycles.append((ye, yc))
            if len(cycles) >= 2:
                series.append(cycles)
        est, _ = analysis.nof1_series_test(series, alt)
        return est
    if isinstance(design, ResponseAdaptive):
        ids = [pid for pid in ids if pid in data.successes]
        successes = [data.successes[pid] for pid in ids]
        arms = [by_patient[pid][0].arm for pid in ids]
        return analysis.adaptive_randomization_test(successes, arms, design.urn,
                                                     settings.n_resamples, rng, "greater")
    exp = [by_patient[pid][0].outcome for pid in ids if 0 in by_patient.get(pid, {}) and by_patient[pid][0].arm is E]
    ctl = [by_patient[pid][0].outcome for pid in ids if 0 in by_patient.get(pid, {}) and by_patient[pid][0].arm is C]
    return analysis.parallel_test(exp, ctl, alt)


def favorable(estimate: EffectEstimate, design: DesignChoice, direction: str) -> bool:
    if isinstance(design, ResponseAdaptive) or direction == "increase":
        return estimate.point > 0
    return estimate.point < 0


def cohort_split(n: int, interim: InterimRule | None) -> list[int]:
    """Cohort sizes: one cohort, or two split at the interim information fraction."""
    if interim is None:
        return [n]
    m = math.ceil(interim.information_fraction * n)
    if m < 2 or m >= n:
        return [n]
    return [m, n - m]


def run_stage2(design: DesignChoice, patients: Sequence[Stage2Patient], model: OutcomeModel,
               interim: InterimRule | None, rng: np.random.Generator,
               settings: Stage2Settings = Stage2Settings(), *, events: EventLog | None = None,
               token_rng: np.random.Generator | None = None,
               analysis_rng: np.random.Generator | None = None) -> Stage2Data:
    """Enroll ``patients`` in order, in one cohort or two around an interim look.

    Randomization lists for the fixed designs are drawn up front; the
    adaptive design draws from the urn as each patient arrives and feeds
    back their dichotomized outcome before the next draw. Every assignment
    is logged before any outcome of that patient.
    """
    events = events if events is not None else EventLog()
    token_rng = token_rng if token_rng is not None else rng
    analysis_rng = analysis_rng if analysis_rng is not None else rng
    n = len(patients)
    ids = [p.profile.id for p in patients]
    data = Stage2Data(design, n)

    if isinstance(design, Crossover):
        plan = plan_crossover(ids, rng)
        arm_plan = [[E, C] if s == "AB" else [C, E] for s in plan]
    elif isinstance(design, NOf1):
        if n < 1:
            raise DesignInfeasibleError("n-of-1 series needs at least 1 patient")
        arm_plan = [plan_nof1(design.cycles, rng) for _ in ids]
    elif isinstance(design, ParallelGroup):
        if n < 2:
            raise DesignInfeasibleError("parallel design needs at least 2 patients")
        arm_plan = [[a] for a in plan_parallel(ids, rng)]
    elif isinstance(design, ResponseAdaptive):
        if n < 2:
            raise DesignInfeasibleError("adaptive design needs at least 2 patients")
        arm_plan = None
    else:
        raise ConfigError(f"unknown design {design!r}")

    urn = design.urn if isinstance(design, ResponseAdaptive) else None
    sizes = cohort_split(n, interim)
    start = 0
    first_washout = settings.first_washout
    for cohort_index, size in enumerate(sizes):
        members = range(start, start + size)
        schedules = []
        for i in members:
            patient = patients[i]
            pid = ids[i]
            data.enrolled.append(pid)
            data.pre[pid] = patient.pre
            data.covariates[pid] = patient.profile.covariates
            events.emit("enroll", patient=pid, cohort=cohort_index)
            if arm_plan is not None:
                sched = _schedule(arm_plan[i], settings, first_washout)
                raw = token_rng.integers(0, 1 << 62, size=len(sched)).tolist()
                tokens = tuple((t, p.arm, f"{raw[t]:016x}") for t, p in enumerate(sched))
                data.allocations[pid] = AllocationRecord(pid, tokens)
                for t, arm, tok in tokens:
                    events.emit("assign", patient=pid, period=t, arm=arm.value, token=tok)
                schedules.append(sched)
                n_obs = len(sched)
                for t in range(1, len(sched)):
                    if settings.dropout_prob > 0 and rng.random() < settings.dropout_prob:
                        n_obs = t
                        events.emit("dropout", patient=pid, before_period=t)
                        break
                ys = simulate_outcomes(patient.profile, sched[:n_obs], model, rng, patient.previous_arm)
                for t, y in enumerate(ys):
                    data.observations.append(Observation(pid, t, sched[t].arm, y))
                    events.emit("outcome", patient=pid, period=t, arm=sched[t].arm.value, value=y)
            else:
                snapshot = (urn.balls_experimental, urn.balls_control)
                arm = urn_draw(urn, rng)
                tok = f"{int(token_rng.integers(0, 1 << 62)):016x}"
                data.allocations[pid] = AllocationRecord(pid, ((0, arm, tok),), snapshot)
                events.emit("assign", patient=pid, period=0, arm=arm.value, token=tok,
                            urn_e=snapshot[0], urn_c=snapshot[1])
                sched = _schedule([arm], settings, first_washout)
                schedules.append(sched)
                (y,) = simulate_outcomes(patient.profile, sched, model, rng, patient.previous_arm)
                success = improvement(patient.pre, y, settings.direction) >= settings.success_threshold
                data.observations.append(Observation(pid, 0, arm, y, *snapshot))
                data.successes[pid] = bool(success)
                events.emit("outcome", patient=pid, period=0, arm=arm.value, value=y, success=bool(success))
                urn = urn_update(urn, arm, bool(success))
        length = _cohort_length(schedules)
        data.cohort_lengths.append(length)
        start += size
        first_washout += length

        if cohort_index == 0 and len(sizes) > 1:
            try:
                est = analyze(data, settings, analysis_rng)
            except InsufficientDataError as exc:
                data.interim_skipped = str(exc)
                events.emit("interim", decision="Skipped", reason=str(exc))
                continue
            decision = analysis.interim_decide(est.p_value, favorable(est, design, settings.direction), interim)
            data.interim_estimate = est
            data.interim_decision = decision
            events.emit("interim", decision=decision.value, p=est.p_value, point=est.point, n_used=est.n_used)
            if decision is not InterimDecision.CONTINUE:
                break
    return data
