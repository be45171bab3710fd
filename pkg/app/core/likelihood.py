"""
Noisy-OR generative model over sigmoid-reparameterized factors.

mu = sigmoid(A) (N x L) and zeta = sigmoid(B) (M x L) are the Bernoulli
parameters of the latent factors. The clean cell probability is
P = 1 - prod_l (1 - mu[n,l] * zeta[m,l]) and flip noise gives
P* = (1 - eps) P + eps (1 - P).

Every sum over cells runs over observed entries only.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Union

import numpy as np
import numpy.typing as npt
from scipy.special import expit, log_expit

from app.core.exceptions import DimensionMismatchError, NumericalDomainError
from app.core.matrices import BinaryMatrix, ObservedMatrix, RealMatrix
from app.core.models import BetaPrior, NoiseModel

logger = logging.getLogger(__name__)

PROBABILITY_FLOOR = 1e-12

NoiseLike = Union[NoiseModel, float]


@dataclass(frozen=True, eq=False)
class FactorParams:
    """Unconstrained factor parameters A (N x L) and B (M x L)."""

    A: RealMatrix
    B: RealMatrix

    def __post_init__(self) -> None:
        a = np.asarray(self.A, dtype=np.float64)
        b = np.asarray(self.B, dtype=np.float64)
        if a.ndim != 2 or b.ndim != 2:
            raise ValueError("A and B must be 2-D")
        if a.shape[1] != b.shape[1]:
            raise DimensionMismatchError(
                f"A has rank {a.shape[1]} but B has rank {b.shape[1]}"
            )
        if a.shape[1] < 1:
            raise ValueError("Latent rank must be at least 1")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)

    @property
    def rank(self) -> int:
        return int(self.A.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.A.shape[0]), int(self.B.shape[0]))

    @cached_property
    def mu(self) -> RealMatrix:
        return sigmoid(self.A)

    @cached_property
    def zeta(self) -> RealMatrix:
        return sigmoid(self.B)

    def copy(self) -> "FactorParams":
        return FactorParams(A=self.A.copy(), B=self.B.copy())


@dataclass(frozen=True)
class ForwardPass:
    """Probabilities of one parameter setting, shared by objective and gradients."""

    mu: RealMatrix
    zeta: RealMatrix
    p: RealMatrix
    p_star: RealMatrix
    epsilon: float


def _epsilon(noise: NoiseLike) -> float:
    return noise.epsilon if isinstance(noise, NoiseModel) else float(noise)


def sigmoid(a: npt.ArrayLike) -> RealMatrix:
    """Logistic function 1 / (1 + exp(-a))."""
    return expit(np.asarray(a, dtype=np.float64))


def noisy_or(mu: npt.ArrayLike, zeta: npt.ArrayLike) -> RealMatrix:
    """P[n,m] = 1 - prod_l (1 - mu[n,l] * zeta[m,l]) for factor probabilities."""
    mu_arr = np.asarray(mu, dtype=np.float64)
    zeta_arr = np.asarray(zeta, dtype=np.float64)
    if mu_arr.shape[1] != zeta_arr.shape[1]:
        raise DimensionMismatchError(
            f"mu has rank {mu_arr.shape[1]} but zeta has rank {zeta_arr.shape[1]}"
        )

    survive = np.ones((mu_arr.shape[0], zeta_arr.shape[0]), dtype=np.float64)
    for l in range(mu_arr.shape[1]):
        survive *= 1.0 - np.outer(mu_arr[:, l], zeta_arr[:, l])
    return 1.0 - survive


def clean_probability(params: FactorParams) -> RealMatrix:
    """Noise-free Bernoulli probability of every cell."""
    return noisy_or(params.mu, params.zeta)


def noisy_probability(p: npt.ArrayLike, noise: NoiseLike) -> RealMatrix:
    """Mix in flip noise: P* = (1 - eps) P + eps (1 - P)."""
    eps = _epsilon(noise)
    p_arr = np.asarray(p, dtype=np.float64)
    return (1.0 - eps) * p_arr + eps * (1.0 - p_arr)


def threshold(p_star: npt.ArrayLike) -> BinaryMatrix:
    """Binary reconstruction; ties at 0.5 resolve to 1."""
    return (np.asarray(p_star) >= 0.5).astype(np.uint8)


def forward(params: FactorParams, noise: NoiseLike) -> ForwardPass:
    """Evaluate mu, zeta, P and P* once."""
    eps = _epsilon(noise)
    p = clean_probability(params)
    return ForwardPass(
        mu=params.mu,
        zeta=params.zeta,
        p=p,
        p_star=noisy_probability(p, eps),
        epsilon=eps,
    )


def reconstruct(params: FactorParams, noise: NoiseLike) -> BinaryMatrix:
    """X_hat[n,m] = 1 iff P*[n,m] >= 0.5."""
    return threshold(forward(params, noise).p_star)


def _check_shape(x: ObservedMatrix, shape: tuple[int, ...]) -> None:
    if x.shape != tuple(shape):
        raise DimensionMismatchError(f"Observed matrix {x.shape} does not match model {shape}")


def log_likelihood(x: ObservedMatrix, p_star: npt.ArrayLike) -> float:
    """
    Bernoulli log-likelihood of the observed entries under P*.

    Returns 0.0 for a fully masked matrix.

    Raises:
        NumericalDomainError: If the result is not finite
    """
    p_arr = np.asarray(p_star, dtype=np.float64)
    _check_shape(x, p_arr.shape)

    p_safe = np.clip(p_arr, PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
    observed = x.mask
    ones = x.values[observed].astype(np.float64)
    p_obs = p_safe[observed]
    value = float(np.sum(ones * np.log(p_obs) + (1.0 - ones) * np.log1p(-p_obs)))

    if not np.isfinite(value):
        raise NumericalDomainError(f"Log-likelihood is not finite: {value}")
    return value


def prior_log_density(logits: RealMatrix, prior: BetaPrior) -> float:
    """(alpha - 1) sum log sigma(a) + (beta - 1) sum log(1 - sigma(a))."""
    return float(
        (prior.alpha - 1.0) * np.sum(log_expit(logits))
        + (prior.beta - 1.0) * np.sum(log_expit(-logits))
    )


def objective_from_forward(
    x: ObservedMatrix,
    params: FactorParams,
    fp: ForwardPass,
    prior: BetaPrior,
    zeta_prior: Optional[BetaPrior] = None,
) -> float:
    """Log-posterior reusing an existing forward pass."""
    value = log_likelihood(x, fp.p_star)
    zeta_prior = zeta_prior if zeta_prior is not None else prior

    if not prior.is_neutral:
        value += prior_log_density(params.A, prior)
    if not zeta_prior.is_neutral:
        value += prior_log_density(params.B, zeta_prior)

    if not np.isfinite(value):
        raise NumericalDomainError(f"Log-posterior is not finite: {value}")
    return value


def log_posterior(
    x: ObservedMatrix,
    params: FactorParams,
    noise: NoiseLike,
    prior: BetaPrior,
    zeta_prior: Optional[BetaPrior] = None,
) -> float:
    """Log-likelihood plus Beta log-prior terms on mu and zeta."""
    _check_shape(x, params.shape)
    return objective_from_forward(x, params, forward(params, noise), prior, zeta_prior)


def _likelihood_gradients(x: ObservedMatrix, fp: ForwardPass) -> tuple[RealMatrix, RealMatrix]:
    # dLL/dP* on observed cells, then through P* -> P -> (mu, zeta) -> (A, B)
    p_safe = np.clip(fp.p_star, PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
    values = x.values.astype(np.float64)
    residual = np.where(x.mask, (values - p_safe) / (p_safe * (1.0 - p_safe)), 0.0)
    weighted = residual * (1.0 - fp.p)

    rank = fp.mu.shape[1]
    grad_mu = np.empty_like(fp.mu)
    grad_zeta = np.empty_like(fp.zeta)
    for l in range(rank):
        mu_l = fp.mu[:, l]
        zeta_l = fp.zeta[:, l]
        # prod over k != l of (1 - mu zeta) equals (1 - P) / (1 - mu_l zeta_l)
        term = weighted / (1.0 - np.outer(mu_l, zeta_l))
        grad_mu[:, l] = term @ zeta_l
        grad_zeta[:, l] = term.T @ mu_l

    scale = 1.0 - 2.0 * fp.epsilon
    grad_a = scale * grad_mu * fp.mu * (1.0 - fp.mu)
    grad_b = scale * grad_zeta * fp.zeta * (1.0 - fp.zeta)
    return grad_a, grad_b


def _prior_gradient(probabilities: RealMatrix, prior: BetaPrior) -> RealMatrix:
    return (prior.alpha - 1.0) * (1.0 - probabilities) - (prior.beta - 1.0) * probabilities


def gradients_from_forward(
    x: ObservedMatrix,
    fp: ForwardPass,
    prior: BetaPrior,
    zeta_prior: Optional[BetaPrior] = None,
) -> tuple[RealMatrix, RealMatrix]:
    """Log-posterior gradients with respect to A and B from a forward pass."""
    grad_a, grad_b = _likelihood_gradients(x, fp)
    zeta_prior = zeta_prior if zeta_prior is not None else prior

    if not prior.is_neutral:
        grad_a = grad_a + _prior_gradient(fp.mu, prior)
    if not zeta_prior.is_neutral:
        grad_b = grad_b + _prior_gradient(fp.zeta, zeta_prior)

    if not (np.all(np.isfinite(grad_a)) and np.all(np.isfinite(grad_b))):
        raise NumericalDomainError("Gradient has nonfinite entries")
    return grad_a, grad_b


def likelihood_gradients(
    x: ObservedMatrix, params: FactorParams, noise: NoiseLike
) -> tuple[RealMatrix, RealMatrix]:
    """Maximum-likelihood gradients (no prior terms)."""
    _check_shape(x, params.shape)
    return gradients_from_forward(x, forward(params, noise), BetaPrior(alpha=1.0, beta=1.0))


def gradients(
    x: ObservedMatrix,
    params: FactorParams,
    noise: NoiseLike,
    prior: BetaPrior,
    zeta_prior: Optional[BetaPrior] = None,
) -> tuple[RealMatrix, RealMatrix]:
    """
    Exact gradients (G_A, G_B) of the log-posterior.

    Raises:
        DimensionMismatchError: If x does not match the parameter shapes
        NumericalDomainError: If any gradient entry is not finite
    """
    _check_shape(x, params.shape)
    return gradients_from_forward(x, forward(params, noise), prior, zeta_prior)


def noiseless_gradients(x: ObservedMatrix, params: FactorParams) -> tuple[RealMatrix, RealMatrix]:
    """
    Likelihood gradients of the noise-free model in ascent direction.

    dLL/dA[n,l] = sum_m mu zeta / (1 - mu zeta) * (1 - mu[n,l]) * (X/P - 1)
    dLL/dB[m,l] = sum_n mu zeta / (1 - mu zeta) * (1 - zeta[m,l]) * (X/P - 1)
    """
    _check_shape(x, params.shape)
    mu, zeta = params.mu, params.zeta
    p = np.clip(noisy_or(mu, zeta), PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
    ratio_term = np.where(x.mask, x.values / p - 1.0, 0.0)

    grad_a = np.empty_like(mu)
    grad_b = np.empty_like(zeta)
    for l in range(params.rank):
        joint = np.outer(mu[:, l], zeta[:, l])
        odds = joint / (1.0 - joint) * ratio_term
        grad_a[:, l] = np.sum(odds * (1.0 - mu[:, l])[:, None], axis=1)
        grad_b[:, l] = np.sum(odds * (1.0 - zeta[:, l])[None, :], axis=0)
    return grad_a, grad_b
