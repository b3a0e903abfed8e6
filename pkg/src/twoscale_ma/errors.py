"""Exception hierarchy shared by all modules."""


class TwoScaleError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(TwoScaleError, ValueError):
    pass


class InvalidDataError(TwoScaleError, ValueError):
    pass


class OutOfDomainError(TwoScaleError, ValueError):
    pass


class MeshError(TwoScaleError):
    pass


class ModelError(TwoScaleError):
    pass


class UnsupportedError(TwoScaleError):
    pass


class BarrierOverflowError(TwoScaleError, OverflowError):
    pass


class LinearSolverError(TwoScaleError):
    pass


class SubsolutionError(TwoScaleError):
    """No barrier exponent up to ``lambda_max`` produced a subsolution."""

    def __init__(self, message, worst_node=None, worst_residual=None):
        super().__init__(message)
        self.worst_node = worst_node
        self.worst_residual = worst_residual


class BracketError(TwoScaleError):
    pass


class NonConvergenceError(TwoScaleError):
    """Sweeps exhausted; ``field`` and ``report`` hold the partial result."""

    def __init__(self, message, field=None, report=None):
        super().__init__(message)
        self.field = field
        self.report = report


class PositivityError(TwoScaleError):
    def __init__(self, message, worst_point=None, margin=None):
        super().__init__(message)
        self.worst_point = worst_point
        self.margin = margin


class ExpressionError(TwoScaleError, ValueError):
    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (at offset {offset})")
        self.offset = offset


class ConfigError(TwoScaleError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
