"""
Configuration and report models for the factorization system.
All modules operate on these validated structures.
"""

from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

# Keeps 1 - 2*epsilon > 0 in the noisy-model gradients.
EPSILON_MARGIN = 1e-6
MAX_EPSILON = 0.5 - EPSILON_MARGIN


class NoiseModel(BaseModel):
    """Scalar flip probability of the observation noise."""

    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(0.0, ge=0.0, le=MAX_EPSILON)


class BetaPrior(BaseModel):
    """Shared Beta(alpha, beta) prior on factor probabilities."""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(0.95, gt=0.0)
    beta: float = Field(0.95, gt=0.0)

    @property
    def is_neutral(self) -> bool:
        """alpha = beta = 1 recovers maximum likelihood."""
        return self.alpha == 1.0 and self.beta == 1.0


class RpropConfig(BaseModel):
    """Full-batch iRprop- hyperparameters."""

    model_config = ConfigDict(frozen=True)

    eta_plus: float = 1.2
    eta_minus: float = 0.5
    step_init: float = 0.01
    step_min: float = 1e-6
    step_max: float = 1.0
    clip_bound: float = Field(5.0, gt=0.0)
    max_inner_iters: int = Field(2000, ge=1)
    # A stable reconstruction only counts as converged once the relative
    # objective change also falls to this level; None disables the guard.
    objective_tol: Optional[float] = Field(1e-4, ge=0.0)

    @model_validator(mode="after")
    def _check_ranges(self) -> "RpropConfig":
        if not (0.0 < self.eta_minus < 1.0 < self.eta_plus):
            raise ValueError("Require 0 < eta_minus < 1 < eta_plus")
        if not (0.0 < self.step_min <= self.step_init <= self.step_max):
            raise ValueError("Require 0 < step_min <= step_init <= step_max")
        return self


class EmConfig(BaseModel):
    """Outer EM loop configuration."""

    model_config = ConfigDict(frozen=True)

    rank: int = Field(..., ge=1)
    prior: BetaPrior = Field(default_factory=BetaPrior)
    zeta_prior: Optional[BetaPrior] = None
    rprop: RpropConfig = Field(default_factory=RpropConfig)
    eps_tolerance: float = Field(1e-3, gt=0.0)
    max_outer_iters: int = Field(50, ge=1)
    seed: int = Field(0, ge=0)
    init_std: float = Field(0.01, gt=0.0)
    epsilon_estimator: Literal["approximate", "exact"] = "approximate"

    @property
    def effective_zeta_prior(self) -> BetaPrior:
        return self.zeta_prior if self.zeta_prior is not None else self.prior


class SynthConfig(BaseModel):
    """Synthetic benchmark sampling parameters."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(200, ge=1)
    m: int = Field(200, ge=1)
    rank: int = Field(5, ge=1)
    target_density: float = Field(0.5, gt=0.0, lt=1.0)
    prior_spread: float = Field(0.2, ge=0.0)
    noise: float = Field(0.0, ge=0.0, lt=0.5)
    observed_fraction: float = Field(1.0, gt=0.0, le=1.0)
    seed: int = Field(0, ge=0)
    vary_priors: bool = True


class EvalReport(BaseModel):
    """Evaluation of one fit against ground truth or held-out cells."""

    reconstruction_error: float = Field(..., ge=0.0, le=1.0)
    completion_accuracy: Optional[float] = Field(None, ge=0.0, le=1.0)
    estimated_epsilon: float = Field(..., ge=0.0, le=1.0)
    true_epsilon: Optional[float] = Field(None, ge=0.0, le=1.0)
    objective: float


SweepMode = Literal["noise-sweep", "completion-sweep", "movielens", "scaling"]


class SweepSpec(BaseModel):
    """
    Benchmark sweep definition.

    ``grid`` holds noise levels (noise-sweep), observed fractions
    (completion-sweep, movielens) or row counts (scaling).
    """

    mode: SweepMode
    grid: list[float] = Field(..., min_length=1)
    repetitions: int = Field(10, ge=1)
    n: int = Field(200, ge=1)
    m: int = Field(200, ge=1)
    rank: int = Field(5, ge=1)
    target_density: float = Field(0.5, gt=0.0, lt=1.0)
    vary_priors: bool = True
    noise: float = Field(0.2, ge=0.0, lt=0.5)
    observed_fraction: float = Field(1.0, gt=0.0, le=1.0)
    base_seed: int = Field(0, ge=0)
    em: Optional[EmConfig] = None
    output: Path = Path("bench_results.tsv")
    ratings_path: Optional[Path] = None
    ratings_delimiter: str = "\t"
    scaling_iterations: int = Field(20, ge=1)

    @model_validator(mode="after")
    def _check_mode(self) -> "SweepSpec":
        if len(set(self.grid)) != len(self.grid):
            raise ValueError(f"Grid values must be distinct, got {self.grid}")
        if self.mode == "movielens" and self.ratings_path is None:
            raise ValueError("movielens mode requires ratings_path")
        if self.mode in ("completion-sweep", "movielens"):
            if any(not (0.0 < g < 1.0) for g in self.grid):
                raise ValueError("Observed fractions must lie in (0, 1)")
        if self.mode == "noise-sweep":
            if any(not (0.0 <= g < 0.5) for g in self.grid):
                raise ValueError("Noise levels must lie in [0, 0.5)")
        if self.mode == "scaling":
            if any(g < 1 or g != int(g) for g in self.grid):
                raise ValueError("Scaling grid must hold positive integer row counts")
        return self

    def em_config(self, seed: int) -> EmConfig:
        """EM configuration for one cell, seeded from the cell seed."""
        base = self.em if self.em is not None else EmConfig(rank=self.rank)
        return base.model_copy(update={"rank": self.rank, "seed": seed})


class BenchDefaults(BaseModel):
    """Sweep settings used when a sweep file leaves them out."""

    noise_grid: list[float] = Field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3, 0.4])
    completion_grid: list[float] = Field(
        default_factory=lambda: [0.01, 0.05, 0.1, 0.3, 0.5, 0.7, 0.95]
    )
    movielens_grid: list[float] = Field(
        default_factory=lambda: [0.01, 0.05, 0.1, 0.2, 0.5, 0.95]
    )
    scaling_grid: list[float] = Field(default_factory=lambda: [100, 200, 400, 800, 1600])
    repetitions: int = Field(10, ge=1)

    def grid_for(self, mode: str) -> Optional[list[float]]:
        grids = {
            "noise-sweep": self.noise_grid,
            "completion-sweep": self.completion_grid,
            "movielens": self.movielens_grid,
            "scaling": self.scaling_grid,
        }
        return grids.get(mode)


class ConfigurationSchema(BaseModel):
    """Complete configuration schema with validation."""

    em: EmConfig
    synth: SynthConfig = Field(default_factory=SynthConfig)
    bench: BenchDefaults = Field(default_factory=BenchDefaults)

    def validate_config(self) -> None:
        """Validate cross-field configuration logic."""
        if self.synth.prior_spread > 0.5:
            raise ValueError("synth.prior_spread cannot exceed 0.5")

        for name, grid in (
            ("completion_grid", self.bench.completion_grid),
            ("movielens_grid", self.bench.movielens_grid),
        ):
            if any(not (0.0 < g < 1.0) for g in grid):
                raise ValueError(f"{name} fractions must lie in (0, 1)")

        if any(not (0.0 <= g < 0.5) for g in self.bench.noise_grid):
            raise ValueError("noise_grid levels must lie in [0, 0.5)")

        if any(g < 1 or g != int(g) for g in self.bench.scaling_grid):
            raise ValueError("scaling_grid must hold positive integer row counts")
