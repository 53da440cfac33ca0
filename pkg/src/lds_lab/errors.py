"""Exception hierarchy. The CLI maps each family to an exit code."""


class LdsLabError(Exception):
    exit_code = 1


class ValidationError(LdsLabError, ValueError):
    """Bad dimensions, parameters, or configuration."""

    exit_code = 1


class NumericalError(LdsLabError, ArithmeticError):
    """Overflow, non-convergence, or a singular system."""

    exit_code = 2


class SimulationOverflowError(NumericalError, OverflowError):
    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ConvergenceError(NumericalError):
    pass


class RankDeficiencyError(NumericalError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class OutputError(LdsLabError, OSError):
    exit_code = 3


class InexactRepresentationWarning(UserWarning):
    """The time-invariant Kalman representation does not hold exactly."""
