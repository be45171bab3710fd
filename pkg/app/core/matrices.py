"""
Dense binary matrices with an observation mask.
Immutable after construction; safe to share read-only.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.typing as npt

from app.core.exceptions import DimensionMismatchError, EmptyMaskError

RealMatrix = npt.NDArray[np.float64]
BinaryMatrix = npt.NDArray[np.uint8]
Mask = npt.NDArray[np.bool_]


@dataclass(frozen=True, eq=False)
class ObservedMatrix:
    """
    N x M binary observations with a per-entry observation mask.

    Missing entries store 0 in ``values`` and are never read.
    """

    values: BinaryMatrix
    mask: Mask

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        mask = np.asarray(self.mask, dtype=bool)

        if values.ndim != 2:
            raise ValueError(f"Observed matrix must be 2-D, got {values.ndim}-D")
        if values.shape != mask.shape:
            raise DimensionMismatchError(
                f"Values shape {values.shape} does not match mask shape {mask.shape}"
            )
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"Observed matrix needs n_rows, n_cols >= 1, got {values.shape}")

        observed = values[mask]
        if not np.all((observed == 0) | (observed == 1)):
            raise ValueError("Observed entries must be exactly 0 or 1")

        clean = np.where(mask, values, 0).astype(np.uint8)
        clean.setflags(write=False)
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "values", clean)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_dense(cls, values: npt.ArrayLike, mask: Optional[npt.ArrayLike] = None) -> "ObservedMatrix":
        """Build from a dense 0/1 array; no mask means fully observed."""
        array = np.asarray(values)
        if mask is None:
            mask = np.ones(array.shape, dtype=bool)
        return cls(values=array, mask=np.asarray(mask, dtype=bool))

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.values.shape[0]), int(self.values.shape[1]))

    @property
    def n_rows(self) -> int:
        return self.shape[0]

    @property
    def n_cols(self) -> int:
        return self.shape[1]

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    @property
    def is_fully_observed(self) -> bool:
        return bool(self.mask.all())

    def with_mask(self, mask: npt.ArrayLike) -> "ObservedMatrix":
        """Same values under a different mask (cells outside the old mask read as 0)."""
        return ObservedMatrix(values=self.values, mask=np.asarray(mask, dtype=bool))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ObservedMatrix):
            return NotImplemented
        return bool(
            np.array_equal(self.mask, other.mask) and np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        return f"ObservedMatrix(shape={self.shape}, observed={self.n_observed})"


def full_mask(shape: tuple[int, int]) -> Mask:
    """Mask with every entry observed."""
    return np.ones(shape, dtype=bool)


def hamming_fraction(a: npt.ArrayLike, b: npt.ArrayLike, mask: npt.ArrayLike) -> float:
    """
    Fraction of observed entries on which two binary matrices disagree.

    Raises:
        DimensionMismatchError: If shapes differ
        EmptyMaskError: If the mask selects nothing
    """
    a_arr = np.asarray(a)
    b_arr = np.asarray(b)
    mask_arr = np.asarray(mask, dtype=bool)

    if not (a_arr.shape == b_arr.shape == mask_arr.shape):
        raise DimensionMismatchError(
            f"Shapes differ: {a_arr.shape}, {b_arr.shape}, mask {mask_arr.shape}"
        )

    n_observed = int(mask_arr.sum())
    if n_observed == 0:
        raise EmptyMaskError("Mask has no observed entries")

    disagreements = int(np.count_nonzero((a_arr != b_arr) & mask_arr))
    return disagreements / n_observed


def density(x: ObservedMatrix) -> float:
    """Fraction of observed entries equal to 1."""
    if x.n_observed == 0:
        raise EmptyMaskError("Mask has no observed entries")
    return int(np.count_nonzero(x.values[x.mask])) / x.n_observed
