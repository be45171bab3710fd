"""
Benchmark Service - Runs seeded sweeps and writes a delimited results table.

Every (grid point, repetition) cell gets its own integer seed, recorded in
its row, which seeds both the data (synthetic instance or MovieLens split)
and the EM initialization.
"""

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Literal, Optional

import numpy as np
from pydantic import BaseModel

from app.core.engine import EMEngine, FitResult
from app.core.likelihood import forward, gradients_from_forward
from app.core.matrices import ObservedMatrix
from app.core.metrics import evaluate
from app.core.models import EvalReport, NoiseModel, SweepSpec, SynthConfig
from app.core.optimizer import RpropState, rprop_step
from app.datasets.movielens_loader import binarize_ratings, holdout_split, read_ratings
from app.datasets.synthetic_generator import generate
from app.services.factorization_service import format_cell

logger = logging.getLogger(__name__)

TABLE_COLUMNS = [
    "kind",
    "mode",
    "grid_value",
    "repetition",
    "seed",
    "status",
    "reconstruction_error",
    "completion_accuracy",
    "estimated_epsilon",
    "true_epsilon",
    "objective",
    "outer_iters",
    "converged",
    "per_iteration_s",
    "wall_time_s",
    "reconstruction_error_std",
    "completion_accuracy_std",
    "estimated_epsilon_std",
    "error",
]

SUMMARY_METRICS = [
    "reconstruction_error",
    "completion_accuracy",
    "estimated_epsilon",
    "true_epsilon",
    "objective",
    "outer_iters",
    "per_iteration_s",
    "wall_time_s",
]

STD_METRICS = ["reconstruction_error", "completion_accuracy", "estimated_epsilon"]


class BenchRow(BaseModel):
    """One results-table row (a repetition or a per-grid-point summary)."""

    kind: Literal["run", "summary"]
    mode: str
    grid_value: float
    repetition: int
    seed: Optional[int] = None
    status: Literal["ok", "error"] = "ok"
    reconstruction_error: Optional[float] = None
    completion_accuracy: Optional[float] = None
    estimated_epsilon: Optional[float] = None
    true_epsilon: Optional[float] = None
    objective: Optional[float] = None
    outer_iters: Optional[float] = None
    converged: Optional[bool] = None
    per_iteration_s: Optional[float] = None
    wall_time_s: Optional[float] = None
    reconstruction_error_std: Optional[float] = None
    completion_accuracy_std: Optional[float] = None
    estimated_epsilon_std: Optional[float] = None
    error: Optional[str] = None


class BenchCell(BaseModel):
    grid_index: int
    grid_value: float
    repetition: int
    seed: int


def cell_seed(base_seed: int, grid_index: int, repetition: int) -> int:
    """Reproducible per-cell seed."""
    state = np.random.SeedSequence([base_seed, grid_index, repetition]).generate_state(1)
    return int(state[0])


class BenchmarkService:
    """
    Sweep runner.
    Repetitions may run on a thread pool; rows are collected in cell order.
    """

    def __init__(self, spec: SweepSpec, num_workers: int = 1):
        """
        Initialize service with a sweep definition.

        Args:
            spec: Validated sweep spec
            num_workers: Parallel repetitions
        """
        self.spec = spec
        self.num_workers = max(1, num_workers)
        self._ratings: Optional[ObservedMatrix] = None

    def cells(self) -> list[BenchCell]:
        return [
            BenchCell(
                grid_index=index,
                grid_value=value,
                repetition=rep,
                seed=cell_seed(self.spec.base_seed, index, rep),
            )
            for index, value in enumerate(self.spec.grid)
            for rep in range(self.spec.repetitions)
        ]

    def run(self, on_row: Optional[Callable[[BenchRow], None]] = None) -> list[BenchRow]:
        """
        Run every cell and append one summary row per grid point.

        Args:
            on_row: Called on the calling thread for every finished run row

        Returns:
            Run rows in cell order followed by summary rows
        """
        cells = self.cells()
        logger.info(
            f"Running {self.spec.mode} over {len(self.spec.grid)} grid points x "
            f"{self.spec.repetitions} repetitions with {self.num_workers} worker(s)"
        )
        if self.spec.mode == "movielens":
            self._load_ratings()

        runs: list[BenchRow] = []
        if self.num_workers == 1:
            for cell in cells:
                row = self.run_cell(cell)
                runs.append(row)
                if on_row:
                    on_row(row)
        else:
            with ThreadPoolExecutor(max_workers=self.num_workers) as pool:
                for row in pool.map(self.run_cell, cells):
                    runs.append(row)
                    if on_row:
                        on_row(row)

        return runs + summarize(runs, self.spec)

    def run_cell(self, cell: BenchCell) -> BenchRow:
        """Run one cell; failures become error rows instead of raising."""
        start = time.perf_counter()
        try:
            metrics = self._dispatch(cell)
            status = "ok"
            error = None
        except Exception as e:
            logger.warning(
                f"Cell grid={cell.grid_value} rep={cell.repetition} seed={cell.seed} failed: {e}"
            )
            metrics = {}
            status = "error"
            error = f"{type(e).__name__}: {e}"

        return BenchRow(
            kind="run",
            mode=self.spec.mode,
            grid_value=cell.grid_value,
            repetition=cell.repetition,
            seed=cell.seed,
            status=status,
            wall_time_s=time.perf_counter() - start,
            error=error,
            **metrics,
        )

    def _dispatch(self, cell: BenchCell) -> dict[str, Any]:
        if self.spec.mode == "noise-sweep":
            return self._run_synthetic(cell, noise=cell.grid_value, observed=self.spec.observed_fraction)
        if self.spec.mode == "completion-sweep":
            return self._run_synthetic(cell, noise=self.spec.noise, observed=cell.grid_value)
        if self.spec.mode == "movielens":
            return self._run_movielens(cell)
        return self._run_scaling(cell)

    def _synth_config(self, seed: int, noise: float, observed: float, n: Optional[int] = None) -> SynthConfig:
        return SynthConfig(
            n=n if n is not None else self.spec.n,
            m=self.spec.m,
            rank=self.spec.rank,
            target_density=self.spec.target_density,
            noise=noise,
            observed_fraction=observed,
            seed=seed,
            vary_priors=self.spec.vary_priors,
        )

    def _run_synthetic(self, cell: BenchCell, noise: float, observed: float) -> dict[str, Any]:
        instance = generate(self._synth_config(cell.seed, noise, observed))
        result = EMEngine(self.spec.em_config(cell.seed)).fit(instance.x_noisy)

        heldout = instance.heldout_mask
        report = evaluate(
            result,
            x_clean=instance.x_clean,
            true_epsilon=noise,
            heldout_mask=heldout if heldout.any() else None,
            train_mask=instance.x_noisy.mask,
        )
        return _row_metrics(report, result)

    def _load_ratings(self) -> ObservedMatrix:
        if self._ratings is None:
            assert self.spec.ratings_path is not None
            records = read_ratings(self.spec.ratings_path, delimiter=self.spec.ratings_delimiter)
            self._ratings, _ = binarize_ratings(records)
        return self._ratings

    def _run_movielens(self, cell: BenchCell) -> dict[str, Any]:
        full = self._load_ratings()
        train, heldout = holdout_split(full, cell.grid_value, cell.seed)
        result = EMEngine(self.spec.em_config(cell.seed)).fit(train)

        # No clean truth: the error column is disagreement with the training cells
        report = evaluate(
            result,
            reference=train,
            heldout_mask=heldout,
            heldout_reference=full,
            train_mask=train.mask,
        )
        return _row_metrics(report, result)

    def _run_scaling(self, cell: BenchCell) -> dict[str, Any]:
        instance = generate(
            self._synth_config(cell.seed, self.spec.noise, 1.0, n=int(cell.grid_value))
        )
        return {"per_iteration_s": measure_iteration_time(instance.x_noisy, self.spec, cell.seed)}


def _row_metrics(report: EvalReport, result: FitResult) -> dict[str, Any]:
    return {**report.model_dump(), "outer_iters": result.outer_iters, "converged": result.converged}


def measure_iteration_time(x: ObservedMatrix, spec: SweepSpec, seed: int) -> float:
    """Mean wall time of one gradient + RPROP update at fixed noise."""
    em_config = spec.em_config(seed)
    engine = EMEngine(em_config)
    params = engine.initial_params(x.n_rows, x.n_cols)
    state = RpropState.initial(params, em_config.rprop)
    noise = NoiseModel(epsilon=spec.noise)

    start = time.perf_counter()
    for _ in range(spec.scaling_iterations):
        fp = forward(params, noise)
        grads = gradients_from_forward(x, fp, engine.prior, engine.zeta_prior)
        params, state = rprop_step(params, grads, state, em_config.rprop)
    return (time.perf_counter() - start) / spec.scaling_iterations


def summarize(runs: list[BenchRow], spec: SweepSpec) -> list[BenchRow]:
    """One summary row per grid point: mean and sample std over successful runs."""
    summaries: list[BenchRow] = []
    for value in spec.grid:
        ok = [r for r in runs if r.grid_value == value and r.status == "ok"]
        fields: dict[str, Any] = {}
        for metric in SUMMARY_METRICS:
            samples = [getattr(r, metric) for r in ok if getattr(r, metric) is not None]
            if not samples:
                continue
            fields[metric] = float(np.mean(samples))
            if metric in STD_METRICS:
                fields[f"{metric}_std"] = float(np.std(samples, ddof=1)) if len(samples) > 1 else 0.0

        summaries.append(
            BenchRow(
                kind="summary",
                mode=spec.mode,
                grid_value=value,
                repetition=len(ok),
                status="ok" if ok else "error",
                **fields,
            )
        )
    return summaries


def write_table(rows: list[BenchRow], path: Path) -> None:
    """Tab-separated table with TABLE_COLUMNS in fixed order."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, delimiter="\t")
        writer.writerow(TABLE_COLUMNS)
        for row in rows:
            data = row.model_dump()
            writer.writerow([format_cell(data[column]) for column in TABLE_COLUMNS])
    logger.info(f"Wrote {len(rows)} rows to {path}")


def read_table(path: Path) -> list[dict[str, str]]:
    with open(path, "r", newline="") as f:
        return list(csv.DictReader(f, delimiter="\t"))
