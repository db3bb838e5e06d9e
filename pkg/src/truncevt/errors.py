"""Exception hierarchy shared by all modules."""


class TruncEVTError(Exception):
    """Base class for toolkit errors."""


class ParameterDomainError(TruncEVTError, ValueError):
    """A parameter or argument lies outside its admissible domain."""


class EndpointError(ParameterDomainError):
    """Evaluation at or beyond the finite upper endpoint of a distribution."""


class InconsistencyError(TruncEVTError, ValueError):
    """An observation violates the inclusion rule of its sampling window."""


class DegenerateWindowError(TruncEVTError, ValueError):
    """The sampling window carries zero probability under the model."""


class ConvergenceError(TruncEVTError, RuntimeError):
    """The optimizer exhausted its budget; ``best`` holds the best point found."""

    def __init__(self, message, best=None, loglik=None):
        super().__init__(message)
        self.best = best
        self.loglik = loglik


class GroupFitError(TruncEVTError, RuntimeError):
    """Fitting one labeled group inside a test failed."""

    def __init__(self, group, cause):
        super().__init__(f"fit failed for group {group!r}: {cause}")
        self.group = group
        self.cause = cause


class UnusableFitError(TruncEVTError, ValueError):
    """A fit lacks the standard errors a test needs."""


class InfeasibleForecastError(TruncEVTError, ValueError):
    """An identity-link intensity is nonpositive inside the forecast window."""


class BudgetError(TruncEVTError, RuntimeError):
    """A simulation could not reach its target within the draw budget."""


class SchemaError(TruncEVTError, ValueError):
    """An input file does not follow the documented schema."""


class UnsplittableError(TruncEVTError, ValueError):
    """Observations cannot be divided into two halves by death date."""
