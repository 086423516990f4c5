"""Randomized play-the-winner urn."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .population import Arm


@dataclass(frozen=True)
class UrnState:
    balls_experimental: int = 1
    balls_control: int = 1
    beta: int = 1

    def __post_init__(self):
        if min(self.balls_experimental, self.balls_control, self.beta) < 1:
            raise ValueError("urn ball counts and beta must be positive integers")

    @property
    def total(self) -> int:
        return self.balls_experimental + self.balls_control

    @property
    def p_experimental(self) -> float:
        return self.balls_experimental / self.total


def picks_experimental(u: float, balls_e: int, balls_c: int) -> bool:
    # same expression as the compiled kernel so both agree bit for bit
    return u * (balls_e + balls_c) < balls_e


def urn_draw(urn: UrnState, rng: np.random.Generator) -> Arm:
    """Draw an arm with P(Experimental) = E / (E + C); the urn is not modified."""
    u = rng.random()
    return Arm.EXPERIMENTAL if picks_experimental(u, urn.balls_experimental, urn.balls_control) else Arm.CONTROL


def urn_update(urn: UrnState, drawn: Arm, success: bool) -> UrnState:
    """Success rewards the drawn arm, failure rewards the other arm."""
    target = drawn if success else drawn.other
    if target is Arm.EXPERIMENTAL:
        return UrnState(urn.balls_experimental + urn.beta, urn.balls_control, urn.beta)
    return UrnState(urn.balls_experimental, urn.balls_control + urn.beta, urn.beta)


def rpw_limit_fraction(p_success_experimental: float, p_success_control: float) -> float:
    """Long-run share of patients allocated to Experimental under RPW."""
    q_e = 1.0 - p_success_experimental
    q_c = 1.0 - p_success_control
    if q_e + q_c == 0:
        return 0.5
    return q_c / (q_e + q_c)
