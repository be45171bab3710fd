"""
Factorization Service - Orchestrates reading, fitting and writing results.
This is the main entry point for both CLI and API.
"""

import csv
import logging
import time
from pathlib import Path
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel

from app.core.engine import EMEngine, FitResult
from app.core.matrices import ObservedMatrix
from app.core.models import ConfigurationSchema, EmConfig, SynthConfig
from app.core.validators import MatrixValidator
from app.datasets.matrix_io import read_matrix, write_binary_matrix, write_matrix, write_real_matrix
from app.datasets.synthetic_generator import SynthInstance, generate, write_instance

logger = logging.getLogger(__name__)

MU_FILE = "mu.txt"
ZETA_FILE = "zeta.txt"
RECONSTRUCTION_FILE = "reconstruction.bmf"
REPORT_FILE = "report.tsv"

REPORT_COLUMNS = [
    "n_rows",
    "n_cols",
    "n_observed",
    "rank",
    "seed",
    "objective",
    "epsilon",
    "outer_iters",
    "inner_iters",
    "converged",
    "epsilon_clamped",
    "wall_time_s",
]


class FactorizationReport(BaseModel):
    """Summary row of one factorization run."""

    n_rows: int
    n_cols: int
    n_observed: int
    rank: int
    seed: int
    objective: float
    epsilon: float
    outer_iters: int
    inner_iters: int
    converged: bool
    epsilon_clamped: bool
    wall_time_s: float


class FactorizationService:
    """
    Factorization service.
    Coordinates matrix I/O and the EM engine.
    """

    def __init__(self, config: ConfigurationSchema):
        """
        Initialize service with configuration.

        Args:
            config: Validated configuration schema
        """
        self.config = config

    def em_config(self, **overrides: Any) -> EmConfig:
        """
        EM configuration from the loaded defaults with non-None overrides.

        Recognized prior overrides are ``alpha`` and ``beta``; every other key
        must be an EmConfig field.
        """
        updates = {key: value for key, value in overrides.items() if value is not None}
        prior_updates = {k: updates.pop(k) for k in ("alpha", "beta") if k in updates}

        base = self.config.em.model_dump()
        if prior_updates:
            base["prior"] = {**base["prior"], **prior_updates}
        base.update(updates)
        return EmConfig(**base)

    def fit(self, x: ObservedMatrix, em_config: EmConfig) -> tuple[FitResult, FactorizationReport]:
        """
        Fit a matrix and time it.

        Raises:
            ValueError: If the matrix cannot be factorized at this rank
        """
        MatrixValidator.validate_for_fit(x, em_config.rank)

        start = time.perf_counter()
        result = EMEngine(em_config).fit(x)
        elapsed = time.perf_counter() - start

        report = FactorizationReport(
            n_rows=x.n_rows,
            n_cols=x.n_cols,
            n_observed=x.n_observed,
            rank=em_config.rank,
            seed=em_config.seed,
            objective=result.objective,
            epsilon=result.epsilon,
            outer_iters=result.outer_iters,
            inner_iters=sum(result.inner_iters),
            converged=result.converged,
            epsilon_clamped=result.epsilon_clamped,
            wall_time_s=elapsed,
        )

        logger.info(
            f"Factorization complete: epsilon={result.epsilon:.4f}, "
            f"objective={result.objective:.4f}, outer={result.outer_iters}, "
            f"converged={result.converged}, {elapsed:.2f}s"
        )
        return result, report

    def factorize_file(
        self, input_path: Path, output_dir: Path, em_config: EmConfig
    ) -> tuple[FitResult, FactorizationReport]:
        """
        Read a matrix file, fit it and write mu, zeta, reconstruction and report.

        Raises:
            FileNotFoundError: If the input does not exist
            MatrixFormatError: If the input is malformed
        """
        x = read_matrix(input_path)
        logger.info(f"Factorizing {input_path}: {x!r}")
        result, report = self.fit(x, em_config)
        self.write_outputs(result, report, output_dir)
        return result, report

    def complete_file(
        self,
        input_path: Path,
        output_dir: Path,
        em_config: EmConfig,
        heldout_out: Optional[Path] = None,
    ) -> tuple[FitResult, FactorizationReport]:
        """
        Like factorize_file; additionally writes the imputed values of every
        missing input cell as a bmf-sparse file when heldout_out is given.
        """
        x = read_matrix(input_path)
        result, report = self.fit(x, em_config)
        self.write_outputs(result, report, output_dir)

        if heldout_out is not None:
            imputed = ObservedMatrix(values=result.reconstruction, mask=~x.mask)
            heldout_out.parent.mkdir(parents=True, exist_ok=True)
            write_matrix(imputed, heldout_out, fmt="sparse")
            logger.info(f"Wrote {imputed.n_observed} imputed cells to {heldout_out}")

        return result, report

    def write_outputs(self, result: FitResult, report: FactorizationReport, output_dir: Path) -> None:
        output_dir.mkdir(parents=True, exist_ok=True)
        write_real_matrix(result.mu, output_dir / MU_FILE)
        write_real_matrix(result.zeta, output_dir / ZETA_FILE)
        write_binary_matrix(result.reconstruction, output_dir / RECONSTRUCTION_FILE)
        write_report(report, output_dir / REPORT_FILE)

    def synthesize(self, synth_config: SynthConfig, output_dir: Path) -> SynthInstance:
        """Generate a synthetic instance and write it to a directory."""
        instance = generate(synth_config)
        write_instance(instance, output_dir)
        return instance


def write_report(report: FactorizationReport, path: Path) -> None:
    """Tab-separated header plus one row, columns in REPORT_COLUMNS order."""
    row = report.model_dump()
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, delimiter="\t")
        writer.writerow(REPORT_COLUMNS)
        writer.writerow([format_cell(row[column]) for column in REPORT_COLUMNS])


def format_cell(value: Any) -> str:
    """Render one TSV cell: empty for None, lowercase booleans, round-trippable floats."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value).replace("\t", " ").replace("\n", " ")
