"""Exception hierarchy.

Two families: ValidationError for bad inputs and malformed files (CLI exit
code 1), NumericalFailure for runs that became numerically meaningless
despite valid inputs (CLI exit code 2).
"""


class ValidationError(ValueError):
    """Invalid input: bad dimensions, broken invariants, malformed files."""


class DimensionMismatch(ValidationError):
    pass


class NonCommutingGenerators(ValidationError):
    """Generators fail to commute (with each other or their adjoints)."""

    def __init__(self, message: str, max_commutator_norm: float):
        super().__init__(f"{message} (max commutator norm {max_commutator_norm:.3e})")
        self.max_commutator_norm = max_commutator_norm


class NondemolitionViolation(ValidationError):
    """Conditioned operator does not commute with the observation algebra."""


class TruncationRadiusExceeded(ValidationError):
    """Requested amplitude would push significant mass past the Fock cutoff."""


class CausalityViolation(ValidationError):
    """A control law was offered record entries at or after the current time."""


class RecordFormatError(ValidationError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class NumericalFailure(RuntimeError):
    """A run broke down numerically (exit code 2 in the CLI)."""


class FilterCollapse(NumericalFailure):
    """Filter trace vanished; the step size is too large for this record."""


class ZeroJumpRate(NumericalFailure):
    """A jump was requested while the model assigns it zero rate."""


class PositivityBreach(NumericalFailure):
    """A filter eigenvalue fell below the monitoring threshold."""
