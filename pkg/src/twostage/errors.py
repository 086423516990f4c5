"""Exception hierarchy shared by every stage of the simulator."""


class TwoStageError(Exception):
    """Base class for all simulator errors."""


class ConfigError(TwoStageError, ValueError):
    """A scenario or one of its blocks violates a documented constraint."""


class SingularDesignError(TwoStageError, ValueError):
    """Design matrix is rank deficient or too small for the requested fit."""


class RuleUnavailableError(TwoStageError):
    """An exclusion rule was requested from a fit that did not converge cleanly."""


class DesignInfeasibleError(TwoStageError):
    """The Stage-2 design cannot be run with the patients available."""


class InsufficientDataError(TwoStageError):
    """An analysis was asked to run on too few observations."""


class IllegalTransitionError(TwoStageError):
    """A trial tried to move between phases outside the allowed graph."""
