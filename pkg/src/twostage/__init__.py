"""Simulation engine for two-stage enrichment trials in rare diseases.

Stage 1 gives every enrolled patient the experimental treatment, classifies
responders and stops for futility when too few respond. Stage 2 compares
Experimental and Control among responders with a crossover, a series of
n-of-1 trials, a randomized play-the-winner design or (as a comparator) a
parallel-group design.
"""
from .config import ScenarioConfig, load_config, parse_config
from .engine import TrialResult, run_trial
from .kernels import BACKEND
from .montecarlo import OperatingCharacteristics, compare_designs, run_replications

__all__ = ["BACKEND", "OperatingCharacteristics", "ScenarioConfig", "TrialResult", "compare_designs",
           "load_config", "parse_config", "run_replications", "run_trial"]
__version__ = "0.1.0"
