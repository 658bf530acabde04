"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class GeometryError(ValueError):
    """Degenerate or physically invalid geometry."""


class DimensionError(ValueError):
    """Matrix shapes are incompatible."""


class NumericError(ArithmeticError):
    """A numerical routine failed (e.g. Cholesky breakdown)."""


class ValidationError(ValueError):
    """A structural invariant of an input object is violated."""


class ConfigError(ValueError):
    """Scenario configuration is malformed.

    The offending field path is kept in ``path``.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class IncompleteScheduleError(RuntimeError):
    """Estimates for one or more scheduled blocks are missing."""
