"""Exception and warning types shared across the package."""


class MestimError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MestimError):
    """Invalid configuration value or argument combination."""


class SchemaError(MestimError):
    """A required column is missing or has the wrong type."""


class ContractViolationError(MestimError):
    """An estimating function broke its contract (wrong shape, bad theta)."""


class LayoutError(MestimError):
    """A stacking layout is overlapping, gapped, or inconsistent."""


class DerivativeError(MestimError):
    """A numerical derivative could not be formed from any probe point."""


class SingularMatrixError(MestimError):
    """A matrix that must be inverted is singular or near-singular."""


class NonConvergenceError(MestimError):
    """Root search exhausted its budget. Carries the best iterate found."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class CorrectionError(MestimError):
    """A covariance correction produced an invalid value."""


class IngestError(MestimError):
    """A data file could not be parsed. Carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EstimationWarning(UserWarning):
    """Diagnostic warning: reduced accuracy or a numerically fragile value."""
