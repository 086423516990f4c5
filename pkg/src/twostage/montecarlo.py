"""Monte Carlo replication harness and design comparison.

Replication ``i`` always runs with ``replication_seed(master_seed, i)``, and
per-replication records are merged in index order, so aggregates are
bit-identical whatever the number of worker processes.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

from .config import ScenarioConfig
from .engine import StopReason, run_trial
from .errors import TwoStageError
from .rng import replication_seed
from .stage2 import DesignChoice


class ReplicationError(TwoStageError):
    def __init__(self, index: int, seed: int, cause: BaseException):
        super().__init__(f"replication {index} (seed {seed}) failed: {cause!r}")
        self.index = index
        self.seed = seed


@dataclass(frozen=True)
class ReplicationRecord:
    index: int
    seed: int
    rejected: bool
    stage1_stop: bool
    interim_efficacy: bool
    interim_futility: bool
    infeasible: bool
    total_n: int
    duration_days: int
    access_proportion: float
    stage2_n: int
    stage2_access: float
    stage2_experimental_fraction: float
    point: float
    p_value: float
    tp: int
    positives: int
    tn: int
    negatives: int


def _replicate(scenario: ScenarioConfig, index: int, seed: int) -> ReplicationRecord:
    try:
        r = run_trial(scenario, seed)
    except Exception as exc:  # reported with the seed so the failure can be replayed
        raise ReplicationError(index, seed, exc) from exc
    m = r.metrics
    tp, pos, tn, neg = r.classification
    return ReplicationRecord(
        index, seed, r.rejected, r.stop_reason is StopReason.STAGE1_FUTILITY,
        r.stop_reason is StopReason.INTERIM_EFFICACY, r.stop_reason is StopReason.INTERIM_FUTILITY,
        r.stop_reason in (StopReason.DESIGN_INFEASIBLE, StopReason.INSUFFICIENT_DATA),
        m.total_enrolled, m.total_duration_days, m.access_proportion, m.stage2_n,
        m.stage2_access_proportion, m.stage2_experimental_fraction,
        r.effect.point if r.effect else math.nan, r.effect.p_value if r.effect else math.nan,
        tp, pos, tn, neg)


def _run_chunk(args) -> list[ReplicationRecord]:
    scenario, master_seed, indices = args
    return [_replicate(scenario, i, replication_seed(master_seed, i)) for i in indices]


def simulate_records(scenario: ScenarioConfig, replications: int | None = None,
                     master_seed: int | None = None, workers: int = 1) -> list[ReplicationRecord]:
    """Per-replication records, in replication-index order."""
    scenario.validate()
    R = scenario.mc.replications if replications is None else replications
    seed = scenario.mc.master_seed if master_seed is None else master_seed
    if R < 1:
        raise ValueError("need at least one replication")
    if workers <= 1:
        return _run_chunk((scenario, seed, range(R)))
    n_chunks = min(R, workers * 4)
    chunks = [range(k, R, n_chunks) for k in range(n_chunks)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, [(scenario, seed, c) for c in chunks]))
    records = [rec for part in parts for rec in part]
    records.sort(key=lambda rec: rec.index)
    return records


class _Mean:
    """Sum and sum-of-squares accumulator that skips NaNs."""

    def __init__(self):
        self.n = 0
        self.total = 0.0
        self.total_sq = 0.0

    def add(self, x: float) -> None:
        if not math.isnan(x):
            self.n += 1
            self.total += x
            self.total_sq += x * x

    @property
    def mean(self) -> float:
        return self.total / self.n if self.n else math.nan

    @property
    def se(self) -> float:
        if self.n < 2:
            return math.nan if self.n == 0 else 0.0
        var = max(0.0, (self.total_sq - self.total * self.total / self.n) / (self.n - 1))
        return math.sqrt(var / self.n)


def _rate_se(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n) if n else math.nan


@dataclass(frozen=True)
class OperatingCharacteristics:
    """Aggregates over replications; every ``*_se`` is a Monte Carlo standard error.

    Rate SEs are sqrt(p(1-p)/n). Stage-2 means are taken over replications
    that reached Stage 2; classification sensitivity and specificity pool
    patients across replications.
    """

    replications: int
    rejection_rate: float
    rejection_rate_se: float
    stage1_stop_rate: float
    stage1_stop_rate_se: float
    interim_efficacy_rate: float
    interim_futility_rate: float
    infeasible_rate: float
    mean_total_n: float
    mean_total_n_se: float
    mean_duration_days: float
    mean_duration_days_se: float
    mean_access_proportion: float
    mean_access_proportion_se: float
    mean_stage2_n: float
    mean_stage2_access: float
    mean_stage2_access_se: float
    mean_stage2_experimental_fraction: float
    mean_stage2_experimental_fraction_se: float
    mean_point_estimate: float
    mean_point_estimate_se: float
    responder_classification_sensitivity: float
    responder_classification_sensitivity_se: float
    responder_classification_specificity: float
    responder_classification_specificity_se: float

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in self.field_names()}


def aggregate(records: Iterable[ReplicationRecord]) -> OperatingCharacteristics:
    records = sorted(records, key=lambda rec: rec.index)
    R = len(records)
    if R == 0:
        raise ValueError("nothing to aggregate")
    counts = {"rejected": 0, "stage1_stop": 0, "interim_efficacy": 0, "interim_futility": 0,
              "infeasible": 0}
    means = {k: _Mean() for k in ("total_n", "duration_days", "access_proportion", "stage2_n",
                                  "stage2_access", "stage2_experimental_fraction", "point")}
    tp = pos = tn = neg = 0
    for rec in records:
        for k in counts:
            counts[k] += bool(getattr(rec, k))
        for k, acc in means.items():
            acc.add(float(getattr(rec, k)))
        tp += rec.tp
        pos += rec.positives
        tn += rec.tn
        neg += rec.negatives
    rate = {k: v / R for k, v in counts.items()}
    sens = tp / pos if pos else math.nan
    spec = tn / neg if neg else math.nan
    return OperatingCharacteristics(
        R, rate["rejected"], _rate_se(rate["rejected"], R),
        rate["stage1_stop"], _rate_se(rate["stage1_stop"], R),
        rate["interim_efficacy"], rate["interim_futility"], rate["infeasible"],
        means["total_n"].mean, means["total_n"].se,
        means["duration_days"].mean, means["duration_days"].se,
        means["access_proportion"].mean, means["access_proportion"].se,
        means["stage2_n"].mean,
        means["stage2_access"].mean, means["stage2_access"].se,
        means["stage2_experimental_fraction"].mean, means["stage2_experimental_fraction"].se,
        means["point"].mean, means["point"].se,
        sens, _rate_se(sens, pos) if pos else math.nan,
        spec, _rate_se(spec, neg) if neg else math.nan)


def run_replications(scenario: ScenarioConfig, replications: int | None = None,
                     master_seed: int | None = None, workers: int = 1) -> OperatingCharacteristics:
    return aggregate(simulate_records(scenario, replications, master_seed, workers))


def compare_designs(scenario: ScenarioConfig, designs: Sequence[DesignChoice],
                    replications: int | None = None, master_seed: int | None = None,
                    workers: int = 1) -> list[tuple[str, OperatingCharacteristics]]:
    """One row per design, all run on the same replication seeds.

    Because the population and Stage-1 streams depend only on the
    replication seed, every design sees the same patients and the same
    Stage-1 outcomes (common random numbers).
    """
    if len(designs) < 2:
        raise ValueError("compare_designs needs at least two designs")
    return [(d.name, run_replications(scenario.with_design(d), replications, master_seed, workers))
            for d in designs]


def power_curve(scenario: ScenarioConfig, effects: Sequence[float], replications: int | None = None,
                master_seed: int | None = None,
                workers: int = 1) -> list[tuple[float, OperatingCharacteristics]]:
    """Operating characteristics over a grid of responder effects."""
    if not effects:
        raise ValueError("power_curve needs at least one effect size")
    return [(float(d), run_replications(scenario.with_effect(d), replications, master_seed, workers))
            for d in effects]
