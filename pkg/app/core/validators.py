"""
Input validation for matrices arriving from outside (CLI, API).
Ensures only well-formed observations enter the engine.
"""

from typing import Optional, Sequence

import numpy as np

from app.core.exceptions import EmptyMaskError
from app.core.matrices import ObservedMatrix


class MatrixValidator:
    """Validates and converts raw matrix input."""

    @staticmethod
    def from_rows(rows: Sequence[Sequence[Optional[int]]]) -> ObservedMatrix:
        """
        Build an observed matrix from rows of 0, 1 or None (missing).

        Raises:
            ValueError: If rows are empty, ragged or hold non-binary values
        """
        if not rows or not rows[0]:
            raise ValueError("Matrix cannot be empty")

        n_cols = len(rows[0])
        if any(len(row) != n_cols for row in rows):
            raise ValueError("All rows must have the same length")

        values = np.zeros((len(rows), n_cols), dtype=np.uint8)
        mask = np.zeros((len(rows), n_cols), dtype=bool)
        for i, row in enumerate(rows):
            for j, cell in enumerate(row):
                if cell is None:
                    continue
                if cell not in (0, 1):
                    raise ValueError(f"Cell ({i}, {j}) is not binary: {cell!r}")
                values[i, j] = cell
                mask[i, j] = True

        return ObservedMatrix(values=values, mask=mask)

    @staticmethod
    def validate_for_fit(x: ObservedMatrix, rank: int) -> ObservedMatrix:
        """
        Check a matrix can be factorized at the given rank.

        Raises:
            ValueError: If rank < 1
            EmptyMaskError: If no entry is observed
        """
        if rank < 1:
            raise ValueError(f"Rank must be at least 1, got {rank}")
        if x.n_observed == 0:
            raise EmptyMaskError("Matrix has no observed entries")
        return x

    @staticmethod
    def to_rows(x: ObservedMatrix) -> list[list[Optional[int]]]:
        """Inverse of from_rows."""
        return [
            [int(x.values[i, j]) if x.mask[i, j] else None for j in range(x.n_cols)]
            for i in range(x.n_rows)
        ]
