"""Exception hierarchy shared by the solver stages and the CLI."""


class SteeringError(Exception):
    """Base class for failures of the moment steering pipeline."""

    exit_code = 1


class ConfigError(SteeringError, ValueError):
    exit_code = 2


class NoFeasibleWait(SteeringError):
    """No wait step inside the horizon makes the remaining error positive."""

    exit_code = 3


class ControlOutsideCone(SteeringError):
    """Every weight schedule tried produced a control with a non-PD Hankel."""

    exit_code = 4


class RealizationError(SteeringError):
    exit_code = 5


class IterationLimit(RealizationError):
    pass


class LinesearchStall(RealizationError):
    pass


class NotInLPlus(ValueError):
    """The polynomial G(u)^T Lambda G(u) is not strictly positive on the real line."""


class SimulationFailed(SteeringError):
    exit_code = 6
