"""Scenario configuration and its INI file format.

A scenario file has fixed sections; each covariate gets its own
``[covariate.NAME]`` section, in the order they should be drawn::

    [population]
    n_stage1 = 30
    response_intercept = 0.4

    [covariate.biomarker]
    distribution = bernoulli
    params = 0.4
    response_logit_coef = 1.5

    [outcome]
    responder_effect = 2.0
    residual_sd = 1.0

    [stage1]
    improvement_threshold = 1.0
    p_min = 0.3

    [stage2]
    design = crossover

    [interim]
    enabled = true

    [mc]
    replications = 1000
    master_seed = 12345

Unknown sections or keys raise :class:`ConfigError`. docs/formats.md lists
every key with its default.
"""
from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .analysis import InterimRule
from .errors import ConfigError
from .population import CovariateSpec, OutcomeModel, validate_covariates
from .stage1 import ResponderCriteria
from .stage2 import DESIGN_NAMES, Crossover, DesignChoice, NOf1, ResponseAdaptive, make_design
from .urn import UrnState


@dataclass(frozen=True)
class PopulationBlock:
    n_stage1: int = 30
    response_intercept: float = 0.0
    covariates: tuple[CovariateSpec, ...] = ()


@dataclass(frozen=True)
class Stage1Block:
    criteria: ResponderCriteria = ResponderCriteria(1.0)
    p_min: float = 0.3
    stage1_days: int = 28


@dataclass(frozen=True)
class Stage2Block:
    design: DesignChoice = Crossover()
    period_days: int = 14
    washout_days: int = 7
    n_stage2: int = 20
    non_reversible_mode: bool | None = None
    prob_cutoff: float = 0.3
    dropout_prob: float = 0.0
    n_resamples: int = 2000
    max_screen_factor: int = 20
    interim: InterimRule | None = InterimRule()


@dataclass(frozen=True)
class MCBlock:
    replications: int = 1000
    master_seed: int = 12345
    alpha_final: float = 0.048


@dataclass(frozen=True)
class ScenarioConfig:
    population: PopulationBlock = PopulationBlock()
    outcome: OutcomeModel = OutcomeModel()
    stage1: Stage1Block = Stage1Block()
    stage2: Stage2Block = Stage2Block()
    mc: MCBlock = MCBlock()

    @property
    def fresh_recruits(self) -> bool:
        """Stage 2 recruits new patients instead of Stage-1 responders."""
        flag = self.stage2.non_reversible_mode
        return (not self.outcome.reversible) if flag is None else flag

    def validate(self) -> "ScenarioConfig":
        pop, s1, s2, mc = self.population, self.stage1, self.stage2, self.mc
        if pop.n_stage1 < 1:
            raise ConfigError("population: n_stage1 must be >= 1")
        if not math.isfinite(pop.response_intercept):
            raise ConfigError("population: response_intercept must be finite")
        validate_covariates(pop.covariates)
        self.outcome.validate()
        s1.criteria.validate()
        if not 0.0 <= s1.p_min <= 1.0:
            raise ConfigError("stage1: p_min must lie in [0, 1]")
        if s1.stage1_days <= 0:
            raise ConfigError("stage1: stage1_days must be > 0")
        if s2.period_days <= 0 or s2.washout_days < 0:
            raise ConfigError("stage2: period_days must be > 0 and washout_days >= 0")
        if s2.n_stage2 < 1:
            raise ConfigError("stage2: n_stage2 must be >= 1")
        if not 0.0 < s2.prob_cutoff < 1.0:
            raise ConfigError("stage2: prob_cutoff must lie in (0, 1)")
        if not 0.0 <= s2.dropout_prob < 1.0:
            raise ConfigError("stage2: dropout_prob must lie in [0, 1)")
        if s2.n_resamples < 1000:
            raise ConfigError("stage2: n_resamples must be >= 1000")
        if s2.max_screen_factor < 1:
            raise ConfigError("stage2: max_screen_factor must be >= 1")
        if s2.interim is not None:
            s2.interim.validate()
            if s2.interim.final_alpha != mc.alpha_final:
                raise ConfigError("interim: final_alpha must equal mc.alpha_final")
        if mc.replications < 1:
            raise ConfigError("mc: replications must be >= 1")
        if not 0.0 < mc.alpha_final < 1.0:
            raise ConfigError("mc: alpha_final must lie in (0, 1)")
        return self

    def with_design(self, design: DesignChoice) -> "ScenarioConfig":
        return dataclasses.replace(self, stage2=dataclasses.replace(self.stage2, design=design))

    def with_effect(self, responder_effect: float) -> "ScenarioConfig":
        return dataclasses.replace(
            self, outcome=dataclasses.replace(self.outcome, responder_effect=responder_effect))

    def with_mc(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, mc=dataclasses.replace(self.mc, **changes))


# ---------------------------------------------------------------------------
# INI reading


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(x) for x in text.replace(";", ",").split(","))


def _coef(text: str) -> float | tuple[float, ...]:
    vals = _floats(text)
    if "," in text or ";" in text:
        return vals
    return vals[0]


def _int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _opt_bool(text: str) -> bool | None:
    return None if text.strip().lower() in ("", "none", "auto") else _bool(text)


_SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    "population": {"n_stage1": _int, "response_intercept": float},
    "covariate": {"distribution": str.strip, "params": _floats,
                  "response_logit_coef": _coef, "outcome_coef": _coef},
    "outcome": {"baseline_mean": float, "responder_effect": float, "nonresponder_effect": float,
                "period_effects": _floats, "carryover": float, "residual_sd": float,
                "improvement_direction": str.strip, "reversible": _bool, "tau_het": float,
                "baseline_sd": float, "baseline_measurement_sd": float, "washout_full": _int},
    "stage1": {"improvement_threshold": float, "p_min": float, "require_patient_report": _bool,
               "patient_report_sensitivity": float, "patient_report_specificity": float,
               "stage1_days": _int},
    "stage2": {"design": str.strip, "cycles": _int, "urn_experimental": _int, "urn_control": _int,
               "urn_beta": _int, "success_threshold": _opt_float, "period_days": _int,
               "washout_days": _int, "n_stage2": _int, "non_reversible_mode": _opt_bool,
               "prob_cutoff": float, "dropout_prob": float, "n_resamples": _int,
               "max_screen_factor": _int},
    "interim": {"enabled": _bool, "information_fraction": float, "efficacy_alpha_interim": float,
                "futility_p_threshold": float},
    "mc": {"replications": _int, "master_seed": _int, "alpha_final": float},
}


def _read_section(parser: configparser.ConfigParser, section: str, kind: str) -> dict[str, Any]:
    schema = _SCHEMA[kind]
    out = {}
    for key, raw in parser.items(section):
        if key not in schema:
            raise ConfigError(f"[{section}]: unknown key {key!r}")
        try:
            out[key] = schema[key](raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None
    return out


def parse_config(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__",
                                       inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case sensitive
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    blocks: dict[str, dict[str, Any]] = {k: {} for k in _SCHEMA if k != "covariate"}
    covariates = []
    for section in parser.sections():
        if section.startswith("covariate."):
            name = section[len("covariate."):].strip()
            values = _read_section(parser, section, "covariate")
            if "distribution" not in values or "params" not in values:
                raise ConfigError(f"[{section}]: distribution and params are required")
            covariates.append(CovariateSpec(
                name, values["distribution"], values["params"],
                values.get("response_logit_coef", 0.0), values.get("outcome_coef", 0.0)))
        elif section in blocks:
            blocks[section] = _read_section(parser, section, section)
        else:
            raise ConfigError(f"unknown section [{section}]")
    return build_config(blocks, covariates)


def build_config(blocks: dict[str, dict[str, Any]], covariates=()) -> ScenarioConfig:
    pop = PopulationBlock(covariates=tuple(covariates), **blocks.get("population", {}))
    outcome = OutcomeModel(**blocks.get("outcome", {}))

    s1 = dict(blocks.get("stage1", {}))
    criteria = ResponderCriteria(
        s1.pop("improvement_threshold", 1.0), s1.pop("require_patient_report", False),
        s1.pop("patient_report_sensitivity", 1.0), s1.pop("patient_report_specificity", 1.0))
    stage1 = Stage1Block(criteria=criteria, **s1)

    mc = MCBlock(**blocks.get("mc", {}))

    s2 = dict(blocks.get("stage2", {}))
    design_name = s2.pop("design", "crossover")
    if design_name not in DESIGN_NAMES:
        raise ConfigError(f"[stage2] design: expected one of {', '.join(DESIGN_NAMES)}")
    counts = (s2.pop("urn_experimental", 1), s2.pop("urn_control", 1), s2.pop("urn_beta", 1))
    if min(counts) < 1:
        raise ConfigError("[stage2] urn ball counts and urn_beta must be >= 1")
    urn = UrnState(*counts)
    try:
        design = make_design(design_name, s2.pop("cycles", 3), urn, s2.pop("success_threshold", None))
    except ConfigError as exc:
        raise ConfigError(f"[stage2] {exc}") from None

    interim_vals = dict(blocks.get("interim", {}))
    enabled = interim_vals.pop("enabled", True)
    interim = InterimRule(final_alpha=mc.alpha_final, **interim_vals) if enabled else None
    stage2 = Stage2Block(design=design, interim=interim, **s2)
    return ScenarioConfig(pop, outcome, stage1, stage2, mc).validate()


def load_config(path: str | Path) -> ScenarioConfig:
    return parse_config(Path(path).read_text())


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_ini(config: ScenarioConfig) -> str:
    """Serialize a scenario in the format :func:`parse_config` reads."""
    lines = ["[population]", f"n_stage1 = {config.population.n_stage1}",
             f"response_intercept = {_fmt(config.population.response_intercept)}", ""]
    for cov in config.population.covariates:
        lines += [f"[covariate.{cov.name}]", f"distribution = {cov.distribution}",
                  f"params = {_fmt(tuple(cov.params))}",
                  f"response_logit_coef = {_fmt(cov.response_logit_coef)}",
                  f"outcome_coef = {_fmt(cov.outcome_coef)}", ""]
    lines.append("[outcome]")
    for f in dataclasses.fields(OutcomeModel):
        value = getattr(config.outcome, f.name)
        if f.name == "period_effects" and not value:
            continue
        lines.append(f"{f.name} = {_fmt(value)}")
    c = config.stage1.criteria
    lines += ["", "[stage1]", f"improvement_threshold = {_fmt(c.improvement_threshold)}",
              f"require_patient_report = {_fmt(c.require_patient_report)}",
              f"patient_report_sensitivity = {_fmt(c.patient_report_sensitivity)}",
              f"patient_report_specificity = {_fmt(c.patient_report_specificity)}",
              f"p_min = {_fmt(config.stage1.p_min)}", f"stage1_days = {config.stage1.stage1_days}",
              "", "[stage2]"]
    s2 = config.stage2
    d = s2.design
    lines.append(f"design = {d.name}")
    if isinstance(d, NOf1):
        lines.append(f"cycles = {d.cycles}")
    if isinstance(d, ResponseAdaptive):
        lines += [f"urn_experimental = {d.urn.balls_experimental}", f"urn_control = {d.urn.balls_control}",
                  f"urn_beta = {d.urn.beta}"]
        if d.success_threshold is not None:
            lines.append(f"success_threshold = {_fmt(d.success_threshold)}")
    for key in ("period_days", "washout_days", "n_stage2", "prob_cutoff", "dropout_prob",
                "n_resamples", "max_screen_factor"):
        lines.append(f"{key} = {_fmt(getattr(s2, key))}")
    if s2.non_reversible_mode is not None:
        lines.append(f"non_reversible_mode = {_fmt(s2.non_reversible_mode)}")
    lines += ["", "[interim]"]
    if s2.interim is None:
        lines.append("enabled = false")
    else:
        lines += ["enabled = true", f"information_fraction = {_fmt(s2.interim.information_fraction)}",
                  f"efficacy_alpha_interim = {_fmt(s2.interim.efficacy_alpha_interim)}",
                  f"futility_p_threshold = {_fmt(s2.interim.futility_p_threshold)}"]
    lines += ["", "[mc]", f"replications = {config.mc.replications}",
              f"master_seed = {config.mc.master_seed}", f"alpha_final = {_fmt(config.mc.alpha_final)}", ""]
    return "\n".join(lines)
