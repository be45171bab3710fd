"""
Evaluation metrics: reconstruction error against clean ground truth and
completion accuracy on held-out cells.
"""

from typing import Optional

import numpy as np
import numpy.typing as npt

from app.core.engine import FitResult
from app.core.exceptions import DimensionMismatchError, EmptyMaskError
from app.core.matrices import BinaryMatrix, ObservedMatrix, full_mask, hamming_fraction
from app.core.models import EvalReport


def reconstruction_error(x_hat: BinaryMatrix, x_clean: BinaryMatrix) -> float:
    """Normalized Hamming distance over all N*M cells."""
    x_hat_arr = np.asarray(x_hat)
    if x_hat_arr.shape != np.asarray(x_clean).shape:
        raise DimensionMismatchError(
            f"Reconstruction {x_hat_arr.shape} and reference {np.asarray(x_clean).shape} differ"
        )
    return hamming_fraction(x_hat_arr, x_clean, full_mask(x_hat_arr.shape))


def completion_accuracy(
    x_hat: BinaryMatrix,
    x_ref: ObservedMatrix,
    heldout_mask: npt.ArrayLike,
    train_mask: Optional[npt.ArrayLike] = None,
) -> float:
    """
    Agreement of x_hat with the reference on held-out cells.

    Args:
        x_hat: Full reconstruction
        x_ref: Reference values; every held-out cell must be observed in it
        heldout_mask: Cells to score
        train_mask: Optional training mask, checked to be disjoint from heldout

    Raises:
        EmptyMaskError: If no cell is held out
        ValueError: If held-out cells overlap training or are missing in the reference
    """
    heldout = np.asarray(heldout_mask, dtype=bool)
    if heldout.shape != x_ref.shape:
        raise DimensionMismatchError(
            f"Held-out mask {heldout.shape} does not match reference {x_ref.shape}"
        )
    if not heldout.any():
        raise EmptyMaskError("Held-out set is empty")
    if np.any(heldout & ~x_ref.mask):
        raise ValueError("Held-out cells must be observed in the reference")
    if train_mask is not None and np.any(heldout & np.asarray(train_mask, dtype=bool)):
        raise ValueError("Held-out cells overlap training-observed cells")

    return 1.0 - hamming_fraction(x_hat, x_ref.values, heldout)


def evaluate(
    result: FitResult,
    x_clean: Optional[BinaryMatrix] = None,
    true_epsilon: Optional[float] = None,
    reference: Optional[ObservedMatrix] = None,
    heldout_mask: Optional[npt.ArrayLike] = None,
    heldout_reference: Optional[ObservedMatrix] = None,
    train_mask: Optional[npt.ArrayLike] = None,
) -> EvalReport:
    """
    Build an evaluation report for one fit.

    Without clean ground truth the reconstruction error is measured against
    the observed reference on its observed cells.

    Args:
        result: Fit to score
        x_clean: Noise-free ground truth, when known
        true_epsilon: Flip probability used to generate the data
        reference: Observed matrix scored instead of x_clean
        heldout_mask: Cells scored for completion accuracy
        heldout_reference: Values of the held-out cells; defaults to
            reference, then x_clean
        train_mask: Cells the fit saw, checked to be disjoint from heldout_mask
    """
    if x_clean is not None:
        error = reconstruction_error(result.reconstruction, x_clean)
    elif reference is not None:
        error = hamming_fraction(result.reconstruction, reference.values, reference.mask)
    else:
        raise ValueError("evaluate needs x_clean or reference")

    accuracy = None
    if heldout_mask is not None:
        scored = heldout_reference if heldout_reference is not None else reference
        if scored is None:
            if x_clean is None:
                raise ValueError("Completion accuracy needs a reference")
            scored = ObservedMatrix.from_dense(x_clean)
        accuracy = completion_accuracy(result.reconstruction, scored, heldout_mask, train_mask=train_mask)

    return EvalReport(
        reconstruction_error=error,
        completion_accuracy=accuracy,
        estimated_epsilon=result.epsilon,
        true_epsilon=true_epsilon,
        objective=result.objective,
    )
