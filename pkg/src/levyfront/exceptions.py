"""Exception hierarchy for levyfront."""


class LevyFrontError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(LevyFrontError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ResolutionError(LevyFrontError):
    """The grid is too coarse for the requested accuracy."""

    def __init__(self, message, suggested_n=None):
        super().__init__(message)
        self.suggested_n = suggested_n


class PositivityError(LevyFrontError):
    """A quantity that must stay strictly positive lost positivity."""


class ConvergenceError(LevyFrontError):
    """An iteration did not converge within its budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class RegimeError(LevyFrontError):
    """The problem is outside the invasion regime (principal eigenvalue >= 0)."""


class DiscretizationError(LevyFrontError):
    """A discrete property guaranteed by the continuous theory was violated."""


class StepSizeError(LevyFrontError):
    """The explicit time step exceeds the positivity-preserving bound."""

    def __init__(self, message, admissible=None):
        super().__init__(message)
        self.admissible = admissible


class SchemeError(LevyFrontError):
    """The time integrator produced a genuinely negative density."""


class TruncationError(LevyFrontError):
    """The front came too close to the edge of the computational window."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class RangeError(LevyFrontError):
    """A requested window leaves the simulated (x, t) domain."""


class FitQualityError(LevyFrontError):
    """A regression fit did not reach the required goodness of fit."""

    def __init__(self, message, fit=None):
        super().__init__(message)
        self.fit = fit


class InitialDataError(LevyFrontError):
    """Initial data do not admit the requested barrier constants."""


class ReportError(LevyFrontError):
    """A report could not be produced because artifacts are missing."""


class StageError(LevyFrontError):
    """A pipeline stage failed."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
