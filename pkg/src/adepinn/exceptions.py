"""Exception types raised across the package."""


class InvalidArchitectureError(ValueError):
    """Layer sizes that cannot describe a fully connected network."""


class InvalidInputError(ValueError):
    """Input arrays with the wrong shape, grid, or content."""


class NumericOverflowError(FloatingPointError):
    """A forward evaluation produced a non-finite value."""


class UnsupportedExpressionError(TypeError):
    """An expression on traced values cannot be differentiated."""


class FactorizationError(RuntimeError):
    """Covariance matrix is not positive definite even after jitter."""


class SolverFailureError(RuntimeError):
    """A linear solve did not reach the requested residual."""


class StabilityError(RuntimeError):
    """Explicit time stepping would need an unusably small step."""


class InvalidPlanError(ValueError):
    """A sample plan or measurement set is inconsistent with the loss weights."""


class InvalidCountError(ValueError):
    """Requested number of points exceeds what is available."""


class UndefinedMetricError(ValueError):
    """A metric was requested for a degenerate reference."""


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


class MissingDependencyError(FileNotFoundError):
    """An experiment needs output from another subcommand that is missing."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss.

    Attributes
    ----------
    last_good : numpy.ndarray or None
        Last parameter vector with a finite loss.
    """

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good
