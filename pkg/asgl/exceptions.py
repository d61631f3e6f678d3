"""Error hierarchy shared by the library and the CLI.

Every error carries the process exit code the CLI reports for it:
0 success, 1 usage, 2 data error, 3 budget-infeasible.
"""
from typing import Any, Optional

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BUDGET = 3


class AsglError(Exception):
    """Base class for all errors raised by asgl."""

    exit_code: int = EXIT_USAGE


class UsageError(AsglError):
    exit_code = EXIT_USAGE


class InvalidConfigError(UsageError):
    """A configuration value violates a documented invariant."""


class DomainError(AsglError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""

    exit_code = EXIT_USAGE


class DataError(AsglError):
    exit_code = EXIT_DATA


class GraphParseError(DataError):
    """A line of an edge list could not be parsed."""

    def __init__(self, line_no: int, line: str, reason: str):
        self.line_no = line_no
        self.line = line
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}: {line.strip()!r}")


class RejectedEdgeError(GraphParseError):
    """An edge was syntactically valid but cannot be assigned a sign."""


class EmptyGraphError(DataError):
    pass


class SplitError(DataError):
    pass


class MissingArtifactError(DataError):
    pass


class BudgetInfeasibleError(AsglError):
    """Not even one discriminator update fits in the privacy budget."""

    exit_code = EXIT_BUDGET


class NonFiniteGradientError(AsglError):
    """A gradient contained NaN or infinite entries; the update was rejected."""

    exit_code = EXIT_DATA

    def __init__(self, message: str, snapshot: Optional[dict[str, Any]] = None):
        self.snapshot = snapshot or {}
        super().__init__(message)


class TrainingDivergedError(NonFiniteGradientError):
    """A loss became non-finite during training."""
