"""
Synthetic benchmark sampler.

Per-column Bernoulli priors are drawn around a density-calibrated p, binary
factors U (N x L) and Z (M x L) are sampled from them, X = OR_l (U AND Z),
each cell is flipped with the noise probability and a uniform subset of
cells is masked.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Union

import numpy as np
import yaml

from app.core.matrices import BinaryMatrix, ObservedMatrix, RealMatrix
from app.core.models import SynthConfig
from app.datasets.matrix_io import read_matrix, write_binary_matrix, write_matrix

logger = logging.getLogger(__name__)

_FLOOR_GUARD = 1e-9

METADATA_FILE = "metadata.yaml"
NOISY_FILE = "x_noisy.bmf"
CLEAN_FILE = "x_clean.bmf"
U_FILE = "u.bmf"
Z_FILE = "z.bmf"


@dataclass(frozen=True, eq=False)
class SynthInstance:
    """One sampled benchmark matrix with its ground truth."""

    config: SynthConfig
    p: float
    omega: RealMatrix
    theta: RealMatrix
    u: BinaryMatrix
    z: BinaryMatrix
    x_clean: BinaryMatrix
    x_noisy: ObservedMatrix

    @property
    def true_epsilon(self) -> float:
        return self.config.noise

    @property
    def realized_flip_fraction(self) -> float:
        """Fraction of observed cells where the noisy value differs from the clean one."""
        observed = self.x_noisy.mask
        return float(np.mean(self.x_noisy.values[observed] != self.x_clean[observed]))

    @property
    def realized_density(self) -> float:
        return float(np.mean(self.x_clean))

    @property
    def heldout_mask(self) -> np.ndarray:
        """Cells masked out of the noisy observation."""
        return ~self.x_noisy.mask


def density_to_p(target_density: float, rank: int) -> float:
    """
    Invert Pr(X=1) = 1 - (1 - p^2)^L for the shared factor prior p.

    Raises:
        ValueError: If the density is outside (0, 1) or rank < 1
    """
    if not (0.0 < target_density < 1.0):
        raise ValueError(f"target_density must lie in (0, 1), got {target_density}")
    if rank < 1:
        raise ValueError(f"rank must be at least 1, got {rank}")
    return math.sqrt(1.0 - (1.0 - target_density) ** (1.0 / rank))


def boolean_product(u: BinaryMatrix, z: BinaryMatrix) -> BinaryMatrix:
    """X[n,m] = OR_l (u[n,l] AND z[m,l])."""
    counts = np.asarray(u, dtype=np.int64) @ np.asarray(z, dtype=np.int64).T
    return (counts > 0).astype(np.uint8)


def generate(config: SynthConfig) -> SynthInstance:
    """Sample a benchmark instance; the same seed gives the same instance."""
    rng = np.random.default_rng(config.seed)
    p = density_to_p(config.target_density, config.rank)

    if config.vary_priors:
        low, high = p - config.prior_spread, p + config.prior_spread
        omega = np.clip(rng.uniform(low, high, size=config.rank), 0.0, 1.0)
        theta = np.clip(rng.uniform(low, high, size=config.rank), 0.0, 1.0)
    else:
        omega = np.full(config.rank, p)
        theta = np.full(config.rank, p)

    u = (rng.random((config.n, config.rank)) < omega[None, :]).astype(np.uint8)
    z = (rng.random((config.m, config.rank)) < theta[None, :]).astype(np.uint8)
    x_clean = boolean_product(u, z)

    flips = rng.random((config.n, config.m)) < config.noise
    noisy_values = np.where(flips, 1 - x_clean, x_clean).astype(np.uint8)

    mask = np.ones((config.n, config.m), dtype=bool)
    if config.observed_fraction < 1.0:
        n_cells = config.n * config.m
        n_observed = max(1, math.floor(n_cells * config.observed_fraction + _FLOOR_GUARD))
        mask = np.zeros(n_cells, dtype=bool)
        mask[rng.choice(n_cells, size=n_observed, replace=False)] = True
        mask = mask.reshape(config.n, config.m)

    instance = SynthInstance(
        config=config,
        p=p,
        omega=omega,
        theta=theta,
        u=u,
        z=z,
        x_clean=x_clean,
        x_noisy=ObservedMatrix(values=noisy_values, mask=mask),
    )
    logger.debug(
        f"Generated {config.n}x{config.m} rank-{config.rank} instance: p={p:.5f}, "
        f"density={instance.realized_density:.4f}, flips={instance.realized_flip_fraction:.4f}"
    )
    return instance


def instance_metadata(instance: SynthInstance) -> dict[str, Any]:
    return {
        "config": instance.config.model_dump(),
        "p": instance.p,
        "omega": [float(v) for v in instance.omega],
        "theta": [float(v) for v in instance.theta],
        "true_epsilon": instance.true_epsilon,
        "realized_flip_fraction": instance.realized_flip_fraction,
        "realized_density": instance.realized_density,
    }


def write_instance(instance: SynthInstance, directory: Union[str, Path]) -> Path:
    """Write matrices and metadata.yaml into a directory (created if needed)."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)

    write_matrix(instance.x_noisy, out / NOISY_FILE, fmt="dense")
    write_binary_matrix(instance.x_clean, out / CLEAN_FILE)
    write_binary_matrix(instance.u, out / U_FILE)
    write_binary_matrix(instance.z, out / Z_FILE)
    with open(out / METADATA_FILE, "w") as f:
        yaml.safe_dump(instance_metadata(instance), f, sort_keys=False)

    logger.info(f"Wrote synthetic instance to {out}")
    return out


def read_instance_metadata(directory: Union[str, Path]) -> dict[str, Any]:
    with open(Path(directory) / METADATA_FILE, "r") as f:
        return yaml.safe_load(f)


def read_instance(directory: Union[str, Path]) -> SynthInstance:
    """Read back an instance written by write_instance."""
    root = Path(directory)
    metadata = read_instance_metadata(root)
    return SynthInstance(
        config=SynthConfig(**metadata["config"]),
        p=float(metadata["p"]),
        omega=np.asarray(metadata["omega"], dtype=np.float64),
        theta=np.asarray(metadata["theta"], dtype=np.float64),
        u=read_matrix(root / U_FILE).values.copy(),
        z=read_matrix(root / Z_FILE).values.copy(),
        x_clean=read_matrix(root / CLEAN_FILE).values.copy(),
        x_noisy=read_matrix(root / NOISY_FILE),
    )
