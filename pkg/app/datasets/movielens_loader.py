"""
MovieLens ingestion: ratings file reader, binarization against the global
mean rating, and seeded holdout splits of observed cells.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from app.core.exceptions import DuplicateCellError, EmptyMaskError, HoldoutError, MatrixFormatError
from app.core.matrices import Mask, ObservedMatrix

logger = logging.getLogger(__name__)

# Keeps floor(count * fraction) stable when the product lands a hair below an integer.
_FLOOR_GUARD = 1e-9


class RatingsRecord(BaseModel):
    """One user rating; the timestamp is carried but unused."""

    model_config = ConfigDict(frozen=True)

    user_id: str
    item_id: str
    rating: float
    timestamp: Optional[int] = None


@dataclass(frozen=True)
class RatingsIndex:
    """Dense re-indexing in first-appearance order: position -> original id."""

    user_ids: list[str]
    item_ids: list[str]


def read_ratings(
    path: Union[str, Path],
    delimiter: str = "\t",
    scale: tuple[float, float] = (1.0, 5.0),
) -> list[RatingsRecord]:
    """
    Read "user item rating timestamp" lines (u.data uses tabs, ratings.dat "::").

    Raises:
        MatrixFormatError: On a malformed line or a rating outside the scale
    """
    records: list[RatingsRecord] = []
    low, high = scale

    with open(path, "r", encoding="latin-1") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(delimiter)
            if len(fields) < 3:
                raise MatrixFormatError(f"Expected at least 3 fields, got {len(fields)}", line_number)
            try:
                rating = float(fields[2])
                timestamp = int(fields[3]) if len(fields) > 3 and fields[3] else None
            except ValueError:
                raise MatrixFormatError(f"Malformed ratings line {line!r}", line_number) from None
            if not (low <= rating <= high):
                raise MatrixFormatError(f"Rating {rating} outside scale [{low}, {high}]", line_number)
            records.append(
                RatingsRecord(
                    user_id=fields[0].strip(),
                    item_id=fields[1].strip(),
                    rating=rating,
                    timestamp=timestamp,
                )
            )

    logger.info(f"Read {len(records)} ratings from {path}")
    return records


def binarize_ratings(
    records: Iterable[RatingsRecord], strict: bool = True
) -> tuple[ObservedMatrix, RatingsIndex]:
    """
    Users to rows, items to columns; a cell is 1 iff its rating is above the
    global mean (ties go to 0 when strict, to 1 otherwise). Unrated pairs are
    missing.

    Raises:
        EmptyMaskError: If there are no records
        DuplicateCellError: If a (user, item) pair is rated twice
    """
    records = list(records)
    if not records:
        raise EmptyMaskError("No ratings to binarize")

    users: dict[str, int] = {}
    items: dict[str, int] = {}
    for record in records:
        users.setdefault(record.user_id, len(users))
        items.setdefault(record.item_id, len(items))

    ratings = np.array([record.rating for record in records], dtype=np.float64)
    global_mean = float(np.mean(ratings))

    values = np.zeros((len(users), len(items)), dtype=np.uint8)
    mask = np.zeros((len(users), len(items)), dtype=bool)
    for record, rating in zip(records, ratings):
        row, col = users[record.user_id], items[record.item_id]
        if mask[row, col]:
            raise DuplicateCellError(f"User {record.user_id} rated item {record.item_id} twice")
        above = rating > global_mean if strict else rating >= global_mean
        values[row, col] = 1 if above else 0
        mask[row, col] = True

    logger.info(
        f"Binarized {len(records)} ratings into {len(users)}x{len(items)} "
        f"(global mean {global_mean:.4f})"
    )
    return ObservedMatrix(values=values, mask=mask), RatingsIndex(
        user_ids=list(users), item_ids=list(items)
    )


def holdout_split(
    x: ObservedMatrix, observed_fraction: float, seed: int
) -> tuple[ObservedMatrix, Mask]:
    """
    Keep floor(observed * fraction) observed cells for training; the rest are held out.

    Returns:
        Tuple of (train matrix, heldout mask); their masks partition x.mask

    Raises:
        ValueError: If the fraction is outside (0, 1)
        HoldoutError: If either partition would be empty
    """
    if not (0.0 < observed_fraction <= 1.0):
        raise ValueError(f"observed_fraction must lie in (0, 1), got {observed_fraction}")

    observed_cells = np.flatnonzero(x.mask)
    n_train = math.floor(observed_cells.size * observed_fraction + _FLOOR_GUARD)
    if n_train == 0:
        raise HoldoutError(
            f"Fraction {observed_fraction} of {observed_cells.size} cells leaves no training cells"
        )
    if n_train == observed_cells.size:
        raise HoldoutError(
            f"Fraction {observed_fraction} of {observed_cells.size} cells leaves no heldout cells"
        )

    rng = np.random.default_rng(seed)
    chosen = rng.choice(observed_cells, size=n_train, replace=False)

    train_mask = np.zeros(x.shape, dtype=bool)
    train_mask.flat[chosen] = True
    heldout_mask = x.mask & ~train_mask
    return x.with_mask(train_mask), heldout_mask
