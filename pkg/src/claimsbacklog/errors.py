"""Exception and warning types shared across the package."""


class ParameterError(ValueError):
    """A distribution or model parameter is outside its valid range."""


class InputError(ValueError):
    """Malformed or inconsistent inputs (length mismatch, short tables, ...)."""


class DomainError(ValueError):
    """A closed-form quantity was requested outside its domain (e.g. rho >= 1)."""


class InstabilityError(RuntimeError):
    """The backlog process has no stationary regime for the requested setting."""


class EstimationError(RuntimeError):
    """A statistical estimate is undefined for the drawn sample."""


class TrainingError(RuntimeError):
    """Network training diverged."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class OptimizationError(RuntimeError):
    """A cost evaluation returned a non-finite value."""

    def __init__(self, message, eta):
        super().__init__(message)
        self.eta = eta


class TruncationWarning(UserWarning):
    """An infinite delay sum could not be truncated within the available table."""


class DomainWarning(UserWarning):
    """A network was evaluated outside the input range it was trained on."""
