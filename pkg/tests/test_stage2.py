import numpy as np
import pytest

from twostage.analysis import InterimDecision, InterimRule
from twostage.errors import ConfigError, DesignInfeasibleError
from twostage.events import EventLog, concealment_violations
from twostage.population import Arm, OutcomeModel, PatientProfile
from twostage.stage2 import (Crossover, NOf1, ParallelGroup, ResponseAdaptive, Stage2Patient,
                             Stage2Settings, cohort_split, make_design, plan_crossover, plan_nof1,
                             plan_parallel, run_stage2)
from twostage.urn import UrnState

E, C = Arm.EXPERIMENTAL, Arm.CONTROL


def _cohort(n, effect=0.0, responder=True):
    return [Stage2Patient(PatientProfile(i, (), responder, effect, 0.0), 0.0, E) for i in range(n)]


class TestPlanners:
    def test_crossover_even(self):
        seqs = plan_crossover(range(10), np.random.default_rng(0))
        assert seqs.count("AB") == 5 and seqs.count("BA") == 5

    def test_crossover_odd(self):
        seqs = plan_crossover(range(11), np.random.default_rng(0))
        assert abs(seqs.count("AB") - seqs.count("BA")) == 1

    def test_crossover_deterministic(self):
        assert plan_crossover(range(9), np.random.default_rng(4)) == \
            plan_crossover(range(9), np.random.default_rng(4))

    def test_crossover_needs_two(self):
        with pytest.raises(DesignInfeasibleError):
            plan_crossover([0], np.random.default_rng(0))

    def test_nof1_cycles(self):
        arms = plan_nof1(2, np.random.default_rng(0))
        assert len(arms) == 4 and arms.count(E) == 2
        for j in range(2):
            assert {arms[2 * j], arms[2 * j + 1]} == {E, C}

    def test_nof1_reproducible(self):
        assert plan_nof1(3, np.random.default_rng(8)) == plan_nof1(3, np.random.default_rng(8))

    def test_nof1_fair_cycle_coin(self):
        rng = np.random.default_rng(31)
        starts = [plan_nof1(2, rng)[0] is E for _ in range(10_000)]
        assert abs(np.mean(starts) - 0.5) <= 0.015

    def test_nof1_minimum_cycles(self):
        with pytest.raises(ConfigError):
            NOf1(1)

    @pytest.mark.parametrize("n", [4, 7, 13])
    def test_parallel_blocks(self, n):
        arms = plan_parallel(range(n), np.random.default_rng(n))
        assert abs(arms.count(E) - arms.count(C)) <= 2

    def test_make_design(self):
        assert isinstance(make_design("adaptive"), ResponseAdaptive)
        with pytest.raises(ConfigError):
            make_design("factorial")


def test_cohort_split():
    rule = InterimRule()
    assert cohort_split(10, rule) == [5, 5]
    assert cohort_split(7, rule) == [4, 3]
    assert cohort_split(3, rule) == [2, 1]
    assert cohort_split(2, rule) == [2]
    assert cohort_split(10, None) == [10]


class TestRunStage2:
    quiet = OutcomeModel(residual_sd=1e-12, period_effects=(0.0, 4.0))

    def test_crossover_noise_free_null(self):
        data = run_stage2(Crossover(), _cohort(8), self.quiet, None, np.random.default_rng(0))
        by = data.outcomes_by_patient()
        for pid, obs in by.items():
            e = [o.outcome - self.quiet.period_effect(t) for t, o in obs.items() if o.arm is E]
            c = [o.outcome - self.quiet.period_effect(t) for t, o in obs.items() if o.arm is C]
            assert e[0] - c[0] == pytest.approx(0.0, abs=1e-9)

    def test_nof1_single_patient_records(self):
        data = run_stage2(NOf1(2), _cohort(1), OutcomeModel(), None, np.random.default_rng(0))
        assert len(data.observations) == 4

    def test_adaptive_favours_superior_arm(self):
        model = OutcomeModel(residual_sd=1.0)
        shares = []
        for seed in range(300):
            data = run_stage2(ResponseAdaptive(UrnState()), _cohort(20, 3.0), model, None,
                              np.random.default_rng(seed), Stage2Settings(success_threshold=1.5))
            shares.append(data.experimental_fraction())
        shares = np.array(shares)
        assert shares.mean() - 3 * shares.std(ddof=1) / np.sqrt(len(shares)) > 0.5

    def test_adaptive_snapshots(self):
        data = run_stage2(ResponseAdaptive(UrnState()), _cohort(6, 1.0), OutcomeModel(), None,
                          np.random.default_rng(3), Stage2Settings(success_threshold=0.5))
        total = [o.urn_e + o.urn_c for o in data.observations]
        assert total == [2, 3, 4, 5, 6, 7]

    @pytest.mark.parametrize("design", [Crossover(), NOf1(2), ParallelGroup(), ResponseAdaptive()])
    def test_assignment_precedes_outcome(self, design):
        log = EventLog()
        run_stage2(design, _cohort(12, 1.0), OutcomeModel(), InterimRule(), np.random.default_rng(1),
                   events=log)
        assert concealment_violations(log) == []
        assert log.of_kind("assign")

    def test_concealment_checker_catches_violation(self):
        log = EventLog()
        log.emit("outcome", patient=1, period=0)
        log.emit("assign", patient=1, period=0)
        assert concealment_violations(log) == [1]

    @pytest.mark.parametrize("design", [Crossover(), NOf1(3)])
    def test_within_patient_designs_expose_everyone(self, design):
        data = run_stage2(design, _cohort(9), OutcomeModel(), None, np.random.default_rng(2))
        assert all(data.experimental_exposure().values())

    def test_parallel_exposes_about_half(self):
        data = run_stage2(ParallelGroup(), _cohort(40), OutcomeModel(), None, np.random.default_rng(2))
        assert sum(data.experimental_exposure().values()) == 20

    def test_interim_efficacy_stops_second_cohort(self):
        model = OutcomeModel(residual_sd=0.5)
        data = run_stage2(Crossover(), _cohort(20, 5.0), model, InterimRule(), np.random.default_rng(0))
        assert data.interim_decision is InterimDecision.STOP_EFFICACY
        assert len(data.enrolled) == 10
        assert len(data.cohort_lengths) == 1

    def test_interim_skipped_when_too_few(self):
        data = run_stage2(Crossover(), _cohort(5), OutcomeModel(), InterimRule(), np.random.default_rng(0))
        assert data.interim_skipped is not None
        assert len(data.enrolled) == 5

    def test_dropout_truncates(self):
        settings = Stage2Settings(dropout_prob=0.5)
        data = run_stage2(NOf1(3), _cohort(30), OutcomeModel(), None, np.random.default_rng(5), settings)
        counts = [len(v) for v in data.outcomes_by_patient().values()]
        assert min(counts) >= 1 and max(counts) <= 6 and min(counts) < 6

    def test_cohort_length(self):
        settings = Stage2Settings(period_days=10, washout_days=5, first_washout=5)
        data = run_stage2(Crossover(), _cohort(4), OutcomeModel(), None, np.random.default_rng(0), settings)
        assert data.cohort_lengths == [25]

    @pytest.mark.parametrize("design", [ParallelGroup(), ResponseAdaptive()])
    def test_infeasible_single_patient(self, design):
        with pytest.raises(DesignInfeasibleError):
            run_stage2(design, _cohort(1), OutcomeModel(), None, np.random.default_rng(0))
