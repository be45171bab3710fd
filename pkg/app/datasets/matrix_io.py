"""
Matrix file formats.

bmf-dense v1:  header "bmf-dense v1 <n> <m>", then n rows of m symbols from
               {0, 1, ?}; ? marks a missing cell.
bmf-sparse v1: header "bmf-sparse v1 <n> <m>", then "<row> <col> <value>"
               lines with 0-based indices; absent cells are missing.

The format is detected from the header on read.
"""

import logging
from pathlib import Path
from typing import Literal, Union

import numpy as np
import numpy.typing as npt

from app.core.exceptions import DuplicateCellError, MatrixFormatError
from app.core.matrices import ObservedMatrix, RealMatrix

logger = logging.getLogger(__name__)

MatrixFormat = Literal["dense", "sparse"]
PathLike = Union[str, Path]

DENSE_MAGIC = "bmf-dense"
SPARSE_MAGIC = "bmf-sparse"
VERSION = "v1"
MISSING_SYMBOL = "?"


def _parse_header(line: str) -> tuple[MatrixFormat, int, int]:
    tokens = line.split()
    if len(tokens) != 4 or tokens[1] != VERSION or tokens[0] not in (DENSE_MAGIC, SPARSE_MAGIC):
        raise MatrixFormatError(f"Malformed header: {line.strip()!r}", line_number=1)
    try:
        n_rows, n_cols = int(tokens[2]), int(tokens[3])
    except ValueError:
        raise MatrixFormatError(f"Non-integer dimensions in header: {line.strip()!r}", 1) from None
    if n_rows < 1 or n_cols < 1:
        raise MatrixFormatError(f"Dimensions must be positive, got {n_rows}x{n_cols}", 1)
    fmt: MatrixFormat = "dense" if tokens[0] == DENSE_MAGIC else "sparse"
    return fmt, n_rows, n_cols


def _parse_dense(lines: list[str], n_rows: int, n_cols: int) -> ObservedMatrix:
    values = np.zeros((n_rows, n_cols), dtype=np.uint8)
    mask = np.zeros((n_rows, n_cols), dtype=bool)
    row = 0

    for line_number, line in enumerate(lines, start=2):
        symbols = line.split()
        if not symbols:
            continue
        if row >= n_rows:
            raise MatrixFormatError(f"More than {n_rows} rows", line_number)
        if len(symbols) != n_cols:
            raise MatrixFormatError(
                f"Expected {n_cols} symbols, found {len(symbols)}", line_number
            )
        for col, symbol in enumerate(symbols):
            if symbol == MISSING_SYMBOL:
                continue
            if symbol not in ("0", "1"):
                raise MatrixFormatError(f"Non-binary value {symbol!r}", line_number)
            values[row, col] = int(symbol)
            mask[row, col] = True
        row += 1

    if row != n_rows:
        raise MatrixFormatError(f"Expected {n_rows} rows, found {row}", len(lines) + 2)
    return ObservedMatrix(values=values, mask=mask)


def _parse_sparse(lines: list[str], n_rows: int, n_cols: int) -> ObservedMatrix:
    values = np.zeros((n_rows, n_cols), dtype=np.uint8)
    mask = np.zeros((n_rows, n_cols), dtype=bool)

    for line_number, line in enumerate(lines, start=2):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 3:
            raise MatrixFormatError(f"Expected '<row> <col> <value>', got {line.strip()!r}", line_number)
        try:
            row, col = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise MatrixFormatError(f"Non-integer index in {line.strip()!r}", line_number) from None
        if not (0 <= row < n_rows and 0 <= col < n_cols):
            raise MatrixFormatError(
                f"Index ({row}, {col}) out of range for {n_rows}x{n_cols}", line_number
            )
        if tokens[2] not in ("0", "1"):
            raise MatrixFormatError(f"Non-binary value {tokens[2]!r}", line_number)
        if mask[row, col]:
            raise DuplicateCellError(f"Duplicate cell ({row}, {col})", line_number)
        values[row, col] = int(tokens[2])
        mask[row, col] = True

    return ObservedMatrix(values=values, mask=mask)


def read_matrix(path: PathLike) -> ObservedMatrix:
    """
    Read a bmf-dense or bmf-sparse file.

    Raises:
        FileNotFoundError: If the file does not exist
        MatrixFormatError: On any malformed line, naming its line number
    """
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise MatrixFormatError("Empty file", line_number=1)

    fmt, n_rows, n_cols = _parse_header(lines[0])
    body = lines[1:]
    matrix = _parse_dense(body, n_rows, n_cols) if fmt == "dense" else _parse_sparse(body, n_rows, n_cols)
    logger.debug(f"Read {fmt} matrix {n_rows}x{n_cols} from {path}")
    return matrix


def write_matrix(x: ObservedMatrix, path: PathLike, fmt: MatrixFormat = "dense") -> None:
    """Write an observed matrix losslessly, mask included."""
    n_rows, n_cols = x.shape
    out: list[str] = []

    if fmt == "dense":
        out.append(f"{DENSE_MAGIC} {VERSION} {n_rows} {n_cols}")
        for row in range(n_rows):
            out.append(
                " ".join(
                    str(int(x.values[row, col])) if x.mask[row, col] else MISSING_SYMBOL
                    for col in range(n_cols)
                )
            )
    elif fmt == "sparse":
        out.append(f"{SPARSE_MAGIC} {VERSION} {n_rows} {n_cols}")
        rows, cols = np.nonzero(x.mask)
        for row, col in zip(rows, cols):
            out.append(f"{row} {col} {int(x.values[row, col])}")
    else:
        raise ValueError(f"Unknown matrix format: {fmt}")

    Path(path).write_text("\n".join(out) + "\n")
    logger.debug(f"Wrote {fmt} matrix {n_rows}x{n_cols} to {path}")


def write_binary_matrix(values: npt.ArrayLike, path: PathLike) -> None:
    """Write a fully observed binary matrix in the dense format."""
    write_matrix(ObservedMatrix.from_dense(values), path, fmt="dense")


def write_real_matrix(values: RealMatrix, path: PathLike) -> None:
    """Dense real text, one row per line, full double precision."""
    np.savetxt(Path(path), np.asarray(values, dtype=np.float64), fmt="%.17g")


def read_real_matrix(path: PathLike) -> RealMatrix:
    return np.loadtxt(Path(path), dtype=np.float64, ndmin=2)
