class EpiFilterError(Exception):
    """Base class for all package errors."""


class ParameterError(EpiFilterError, ValueError):
    pass


class InvalidStateError(EpiFilterError, ValueError):
    pass


class ConfigError(EpiFilterError, ValueError):
    pass


class DataError(EpiFilterError, ValueError):
    """Malformed or invalid observation data."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AlignmentError(EpiFilterError, ValueError):
    """An observation time does not fall on the computational grid."""


class NumericalError(EpiFilterError, ArithmeticError):
    """Numerical failure (non-finite propagation, degenerate updates, ...)."""


class DivergenceError(NumericalError):
    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"{message} (grid index {step})"
        super().__init__(message)


class DegenerateUpdateError(NumericalError):
    pass


class DegeneratePosteriorError(NumericalError):
    def __init__(self, message, stages=None):
        self.stages = stages or []
        super().__init__(message)


class WorkflowError(EpiFilterError):
    pass
