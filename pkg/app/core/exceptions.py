"""
Error hierarchy for the factorization system.
Each error also inherits the builtin it refines, so callers may catch either.
"""

from typing import Optional


class BMFError(Exception):
    """Base class for all factorization errors."""


class DimensionMismatchError(BMFError, ValueError):
    """Matrices that must share a shape do not."""


class EmptyMaskError(BMFError, ValueError):
    """An operation needs at least one observed entry and got none."""


class NumericalDomainError(BMFError, ArithmeticError):
    """A probability collapsed to 0/1 and produced a nonfinite value."""


class HoldoutError(BMFError, ValueError):
    """A holdout split would leave the train or heldout partition empty."""


class MatrixFormatError(BMFError, ValueError):
    """Malformed matrix or ratings file."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class DuplicateCellError(MatrixFormatError):
    """The same (row, col) cell appears twice."""
