"""
Expectation-maximization driver.
Alternates M-step parameter fitting at fixed noise with E-step re-estimation
of the flip probability until it stabilizes.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from app.core.exceptions import EmptyMaskError
from app.core.likelihood import FactorParams, forward, log_posterior, threshold
from app.core.matrices import BinaryMatrix, ObservedMatrix, RealMatrix, hamming_fraction
from app.core.models import MAX_EPSILON, EmConfig, NoiseModel
from app.core.optimizer import run_m_step

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FitResult:
    """Fitted factor probabilities, noise level and reconstruction."""

    mu: RealMatrix
    zeta: RealMatrix
    epsilon: float
    reconstruction: BinaryMatrix
    objective: float
    outer_iters: int
    converged: bool
    params: FactorParams
    inner_iters: list[int] = field(default_factory=list)
    epsilon_history: list[float] = field(default_factory=list)
    epsilon_clamped: bool = False
    capped_m_steps: int = 0


class EMEngine:
    """
    Deterministic EM factorization engine.
    Identical inputs and seed produce bitwise-identical results.
    """

    def __init__(self, config: EmConfig):
        """
        Initialize engine with configuration.

        Args:
            config: Validated EM configuration
        """
        self.config = config
        self.prior = config.prior
        self.zeta_prior = config.effective_zeta_prior

    def initial_params(self, n_rows: int, n_cols: int) -> FactorParams:
        """A, B drawn i.i.d. Gaussian(0, init_std) from the configured seed."""
        rng = np.random.default_rng(self.config.seed)
        shape_a = (n_rows, self.config.rank)
        shape_b = (n_cols, self.config.rank)
        return FactorParams(
            A=rng.normal(0.0, self.config.init_std, size=shape_a),
            B=rng.normal(0.0, self.config.init_std, size=shape_b),
        )

    def fit(self, x: ObservedMatrix) -> FitResult:
        """
        Factorize an observed matrix.

        Args:
            x: Binary observations with mask

        Returns:
            Complete fit result

        Raises:
            EmptyMaskError: If nothing is observed
            NumericalDomainError: If the model collapses numerically
        """
        if x.n_observed == 0:
            raise EmptyMaskError("Cannot fit a matrix with no observed entries")

        logger.info(
            f"Fitting {x.n_rows}x{x.n_cols} matrix ({x.n_observed} observed) "
            f"at rank {self.config.rank}, seed {self.config.seed}"
        )

        params = self.initial_params(x.n_rows, x.n_cols)
        epsilon = 0.0
        clamped = False
        converged = False
        inner_iters: list[int] = []
        history: list[float] = []
        capped = 0
        reconstruction = threshold(forward(params, epsilon).p_star)
        outer = 0

        for outer in range(1, self.config.max_outer_iters + 1):
            m_step = run_m_step(
                x,
                params,
                NoiseModel(epsilon=epsilon),
                self.prior,
                self.config.rprop,
                zeta_prior=self.zeta_prior,
            )
            params = m_step.params
            inner_iters.append(m_step.iterations)
            if not m_step.converged:
                capped += 1

            fp = forward(params, epsilon)
            reconstruction = threshold(fp.p_star)
            raw_estimate = self._estimate_epsilon(x, reconstruction, fp.p_star)
            estimate, was_clamped = _clamp_epsilon(raw_estimate)
            clamped = clamped or was_clamped
            history.append(estimate)

            logger.info(
                f"EM iteration {outer}: epsilon {epsilon:.4f} -> {estimate:.4f} "
                f"after {m_step.iterations} inner iterations ({m_step.status})"
            )

            done = abs(epsilon - estimate) <= self.config.eps_tolerance
            epsilon = estimate
            if done:
                converged = True
                break

        if not converged:
            logger.warning(
                f"EM stopped at max_outer_iters={self.config.max_outer_iters} "
                f"with epsilon={epsilon:.4f}"
            )

        objective = log_posterior(
            x, params, NoiseModel(epsilon=epsilon), self.prior, zeta_prior=self.zeta_prior
        )

        return FitResult(
            mu=params.mu,
            zeta=params.zeta,
            epsilon=epsilon,
            reconstruction=reconstruction,
            objective=objective,
            outer_iters=outer,
            converged=converged,
            params=params,
            inner_iters=inner_iters,
            epsilon_history=history,
            epsilon_clamped=clamped,
            capped_m_steps=capped,
        )

    def complete(self, x: ObservedMatrix) -> BinaryMatrix:
        """Denoised reconstruction of every cell, observed or missing."""
        return self.fit(x).reconstruction

    def _estimate_epsilon(
        self, x: ObservedMatrix, reconstruction: BinaryMatrix, p_star: RealMatrix
    ) -> float:
        if self.config.epsilon_estimator == "exact":
            observed = x.mask
            return float(np.mean(np.abs(x.values[observed] - p_star[observed])))
        return hamming_fraction(reconstruction, x.values, x.mask)


def _clamp_epsilon(estimate: float) -> tuple[float, bool]:
    if estimate > MAX_EPSILON:
        logger.warning(
            f"Estimated epsilon {estimate:.4f} indicates a degenerate fit; "
            f"clamping to {MAX_EPSILON}"
        )
        return MAX_EPSILON, True
    return max(estimate, 0.0), False


def fit(x: ObservedMatrix, config: EmConfig) -> FitResult:
    """Run EM factorization with the given configuration."""
    return EMEngine(config).fit(x)


def complete(x: ObservedMatrix, config: EmConfig) -> BinaryMatrix:
    """Impute every cell with the model's denoised reconstruction."""
    return EMEngine(config).complete(x)
