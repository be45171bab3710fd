"""
Unit tests for the noisy-OR model.
Analytic values, the Boolean limit, and a finite-difference gradient oracle.
"""

import itertools

import numpy as np
import pytest
from scipy.special import logit

from app.core.exceptions import DimensionMismatchError, NumericalDomainError
from app.core.likelihood import (
    FactorParams,
    clean_probability,
    forward,
    gradients,
    likelihood_gradients,
    log_likelihood,
    log_posterior,
    noiseless_gradients,
    noisy_or,
    noisy_probability,
    reconstruct,
    sigmoid,
    threshold,
)
from app.core.matrices import ObservedMatrix
from app.core.models import BetaPrior, NoiseModel
from app.datasets.synthetic_generator import boolean_product

NEUTRAL = BetaPrior(alpha=1.0, beta=1.0)


def _random_instance(rng, n, m, rank, observed=0.7):
    x = ObservedMatrix(
        values=(rng.random((n, m)) < 0.5).astype(np.uint8),
        mask=rng.random((n, m)) < observed,
    )
    params = FactorParams(
        A=rng.uniform(-2.0, 2.0, size=(n, rank)),
        B=rng.uniform(-2.0, 2.0, size=(m, rank)),
    )
    return x, params


def _finite_differences(x, params, noise, prior, h=1e-5):
    num_a = np.zeros_like(params.A)
    num_b = np.zeros_like(params.B)
    for target, out in ((params.A, num_a), (params.B, num_b)):
        for index in np.ndindex(target.shape):
            plus_a, plus_b = params.A.copy(), params.B.copy()
            minus_a, minus_b = params.A.copy(), params.B.copy()
            if target is params.A:
                plus_a[index] += h
                minus_a[index] -= h
            else:
                plus_b[index] += h
                minus_b[index] -= h
            f_plus = log_posterior(x, FactorParams(A=plus_a, B=plus_b), noise, prior)
            f_minus = log_posterior(x, FactorParams(A=minus_a, B=minus_b), noise, prior)
            out[index] = (f_plus - f_minus) / (2.0 * h)
    return num_a, num_b


def test_sigmoid_values():
    """Logistic function at reference points."""
    assert sigmoid(0.0) == 0.5
    assert sigmoid(5.0) == pytest.approx(0.9933071490757153)
    assert sigmoid(-5.0) == pytest.approx(0.0066928509242848554)


def test_sigmoid_logit_roundtrip():
    """logit(sigmoid(a)) recovers a on the clipped range."""
    a = np.linspace(-5.0, 5.0, 201)
    np.testing.assert_allclose(logit(sigmoid(a)), a, rtol=0, atol=1e-12)
    assert np.all(np.diff(sigmoid(a)) > 0)


def test_clean_probability_analytic():
    """Two factors at one half give 1 - 0.75^2."""
    p = noisy_or([[0.5, 0.5]], [[0.5, 0.5]])
    assert p[0, 0] == pytest.approx(0.4375)


def test_zero_row_has_zero_probability():
    """A row whose factor probabilities are all 0 never fires."""
    p = noisy_or([[0.0, 0.0], [0.3, 0.9]], [[0.8, 0.6], [0.2, 1.0]])
    assert np.all(p[0] == 0.0)
    assert np.all(p[1] > 0.0)


def test_clean_probability_range():
    """P lies in [0, 1) for interior parameters."""
    rng = np.random.default_rng(3)
    params = FactorParams(A=rng.normal(size=(6, 3)), B=rng.normal(size=(5, 3)))
    p = clean_probability(params)
    assert p.shape == (6, 5)
    assert np.all((p >= 0.0) & (p < 1.0))


@pytest.mark.parametrize("rank", [1, 2, 3, 4])
def test_boolean_limit_exhaustive(rank):
    """With binary factors the noisy-OR equals the OR-AND product on every row pair."""
    # Cells depend only on their own (u row, z row) pair, so enumerating all
    # binary rows on both sides covers every binary U, Z of this rank.
    rows = np.array(list(itertools.product([0, 1], repeat=rank)), dtype=np.uint8)
    expected = boolean_product(rows, rows)

    p = noisy_or(rows.astype(float), rows.astype(float))
    np.testing.assert_array_equal(threshold(p), expected)
    np.testing.assert_array_equal(p, expected.astype(float))


def test_boolean_limit_through_reconstruct():
    """Saturated logits reconstruct the Boolean product at zero noise."""
    rows = np.array(list(itertools.product([0, 1], repeat=3)), dtype=np.uint8)
    logits = np.where(rows == 1, 40.0, -40.0)
    params = FactorParams(A=logits, B=logits)
    np.testing.assert_array_equal(reconstruct(params, 0.0), boolean_product(rows, rows))


def test_clean_probability_monotone():
    """Raising any logit never lowers any cell probability."""
    rng = np.random.default_rng(11)
    params = FactorParams(A=rng.normal(size=(5, 3)), B=rng.normal(size=(4, 3)))
    base = clean_probability(params)
    for index in np.ndindex(params.A.shape):
        a = params.A.copy()
        a[index] += 0.5
        assert np.all(clean_probability(FactorParams(A=a, B=params.B)) >= base)
    for index in np.ndindex(params.B.shape):
        b = params.B.copy()
        b[index] += 0.5
        assert np.all(clean_probability(FactorParams(A=params.A, B=b)) >= base)


def test_noisy_probability_values():
    """Flip mixture at reference points."""
    p = np.array([[0.4375]])
    np.testing.assert_array_equal(noisy_probability(p, NoiseModel(epsilon=0.0)), p)
    assert noisy_probability(p, 0.2)[0, 0] == pytest.approx(0.4625)
    for eps in (0.0, 0.1, 0.3, 0.49):
        assert noisy_probability(np.array([0.5]), eps)[0] == pytest.approx(0.5)


def test_noisy_probability_symmetry_and_range():
    """P*(P, eps) = 1 - P*(1 - P, eps) and P* stays between eps and 1 - eps."""
    p = np.linspace(0.0, 1.0, 11)
    for eps in (0.05, 0.2, 0.4):
        p_star = noisy_probability(p, eps)
        np.testing.assert_allclose(p_star, 1.0 - noisy_probability(1.0 - p, eps), atol=1e-12)
        assert np.all(p_star >= eps - 1e-15) and np.all(p_star <= 1.0 - eps + 1e-15)


def test_threshold_tie_goes_to_one():
    """P* exactly 0.5 reconstructs as 1."""
    assert threshold(np.array([[0.5, 0.4999999]])).tolist() == [[1, 0]]


def test_saturated_negative_logits_reconstruct_zeros():
    """All logits at -5 give an all-zero reconstruction for eps < 0.5."""
    params = FactorParams(A=np.full((4, 3), -5.0), B=np.full((6, 3), -5.0))
    for eps in (0.0, 0.2, 0.45):
        assert not reconstruct(params, eps).any()


def test_log_likelihood_values():
    """Reference log-likelihoods."""
    single = ObservedMatrix.from_dense([[1, 0]], mask=[[True, False]])
    assert log_likelihood(single, np.array([[0.5, 0.9]])) == pytest.approx(np.log(0.5))

    ones = ObservedMatrix.from_dense(np.ones((2, 2)))
    assert log_likelihood(ones, np.full((2, 2), 0.9)) == pytest.approx(4 * np.log(0.9))
    assert log_likelihood(ones, np.full((2, 2), 0.9)) == pytest.approx(-0.4214420626313051)


def test_log_likelihood_fully_masked_is_zero():
    """Empty sum over observed entries."""
    x = ObservedMatrix(values=np.zeros((2, 2)), mask=np.zeros((2, 2), dtype=bool))
    assert log_likelihood(x, np.full((2, 2), 0.3)) == 0.0


def test_log_likelihood_errors():
    """Shape mismatch and nonfinite inputs are reported."""
    x = ObservedMatrix.from_dense([[1, 0]])
    with pytest.raises(DimensionMismatchError):
        log_likelihood(x, np.full((2, 2), 0.5))
    with pytest.raises(NumericalDomainError):
        log_likelihood(x, np.array([[np.nan, 0.5]]))


def test_log_posterior_neutral_prior_equals_likelihood():
    """alpha = beta = 1 adds exactly nothing."""
    rng = np.random.default_rng(5)
    x, params = _random_instance(rng, 7, 6, 2)
    fp = forward(params, 0.1)
    assert log_posterior(x, params, 0.1, NEUTRAL) == log_likelihood(x, fp.p_star)


def test_log_posterior_prior_contribution():
    """One mu and one zeta at 0.5 under Beta(0.95, 0.95)."""
    x = ObservedMatrix.from_dense([[1]])
    params = FactorParams(A=np.zeros((1, 1)), B=np.zeros((1, 1)))
    prior = BetaPrior(alpha=0.95, beta=0.95)
    gap = log_posterior(x, params, 0.0, prior) - log_posterior(x, params, 0.0, NEUTRAL)
    assert gap == pytest.approx(-0.05 * 4 * np.log(0.5))
    assert gap == pytest.approx(0.13862943611198905)


def test_larger_alpha_favors_large_probabilities():
    """Raising alpha widens the posterior gap in favor of probabilities above one half."""
    rng = np.random.default_rng(8)
    x = ObservedMatrix.from_dense((rng.random((5, 4)) < 0.5).astype(np.uint8))
    high = FactorParams(A=np.full((5, 2), 1.5), B=np.full((4, 2), 1.5))
    low = FactorParams(A=np.full((5, 2), -1.5), B=np.full((4, 2), -1.5))

    def gap(alpha):
        prior = BetaPrior(alpha=alpha, beta=1.0)
        return log_posterior(x, high, 0.0, prior) - log_posterior(x, low, 0.0, prior)

    assert gap(1.2) > gap(1.0) > gap(0.8)


def test_gradient_oracle_reference_case():
    """8x8, rank 3, eps 0.1, Beta(0.95, 0.95) against central differences."""
    rng = np.random.default_rng(2024)
    x, params = _random_instance(rng, 8, 8, 3)
    noise = NoiseModel(epsilon=0.1)
    prior = BetaPrior(alpha=0.95, beta=0.95)

    grad_a, grad_b = gradients(x, params, noise, prior)
    num_a, num_b = _finite_differences(x, params, noise, prior)
    np.testing.assert_allclose(grad_a, num_a, rtol=1e-5, atol=1e-8)
    np.testing.assert_allclose(grad_b, num_b, rtol=1e-5, atol=1e-8)


def test_gradient_oracle_random_instances():
    """50 seeded instances over shapes, noise levels and priors."""
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n, m = rng.integers(2, 11, size=2)
        rank = int(rng.integers(1, 5))
        eps = float(rng.choice([0.0, 0.1, 0.3]))
        shape = float(rng.choice([0.8, 1.0, 1.2]))
        prior = BetaPrior(alpha=shape, beta=shape)
        x, params = _random_instance(rng, int(n), int(m), rank)

        grad_a, grad_b = gradients(x, params, eps, prior)
        num_a, num_b = _finite_differences(x, params, eps, prior)
        np.testing.assert_allclose(grad_a, num_a, rtol=1e-5, atol=1e-8, err_msg=f"seed {seed}")
        np.testing.assert_allclose(grad_b, num_b, rtol=1e-5, atol=1e-8, err_msg=f"seed {seed}")


def test_neutral_prior_gradients_bitwise_equal_likelihood_path():
    """Prior-neutral gradients are the maximum-likelihood gradients."""
    rng = np.random.default_rng(9)
    x, params = _random_instance(rng, 9, 7, 3)
    for eps in (0.0, 0.25):
        grad_a, grad_b = gradients(x, params, eps, NEUTRAL)
        ml_a, ml_b = likelihood_gradients(x, params, eps)
        assert np.array_equal(grad_a, ml_a)
        assert np.array_equal(grad_b, ml_b)


def test_noise_free_gradients_match_closed_form():
    """At eps = 0 the noisy gradients reduce to the noise-free closed form."""
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        x, params = _random_instance(rng, 8, 9, 3)
        grad_a, grad_b = likelihood_gradients(x, params, 0.0)
        ref_a, ref_b = noiseless_gradients(x, params)

        scale = max(np.abs(ref_a).max(), np.abs(ref_b).max(), 1.0)
        np.testing.assert_allclose(grad_a, ref_a, rtol=1e-12, atol=1e-12 * scale)
        np.testing.assert_allclose(grad_b, ref_b, rtol=1e-12, atol=1e-12 * scale)


def test_dead_factor_column_gets_prior_only_gradient():
    """A factor whose mu column is exactly 0 contributes no likelihood gradient to B."""
    rng = np.random.default_rng(21)
    x, params = _random_instance(rng, 6, 5, 2)
    a = params.A.copy()
    a[:, 0] = -800.0
    dead = FactorParams(A=a, B=params.B)
    assert np.all(dead.mu[:, 0] == 0.0)

    prior = BetaPrior(alpha=0.95, beta=0.9)
    _, grad_b = gradients(x, dead, 0.1, prior)
    zeta = dead.zeta[:, 0]
    expected = (prior.alpha - 1.0) * (1.0 - zeta) - (prior.beta - 1.0) * zeta
    np.testing.assert_allclose(grad_b[:, 0], expected, rtol=0, atol=1e-15)


def test_fully_masked_matrix_has_zero_likelihood_gradient():
    """Missing cells contribute nothing to the gradient."""
    rng = np.random.default_rng(4)
    _, params = _random_instance(rng, 5, 5, 2)
    x = ObservedMatrix(values=np.zeros((5, 5)), mask=np.zeros((5, 5), dtype=bool))
    grad_a, grad_b = likelihood_gradients(x, params, 0.1)
    assert not grad_a.any()
    assert not grad_b.any()


def test_gradient_ignores_cells_outside_mask():
    """Masking a cell matches dropping its term from the objective."""
    rng = np.random.default_rng(6)
    x, params = _random_instance(rng, 6, 4, 2, observed=1.0)
    mask = x.mask.copy()
    mask[2, 1] = False
    masked = x.with_mask(mask)

    grad_a, _ = likelihood_gradients(masked, params, 0.2)
    num_a, _ = _finite_differences(masked, params, 0.2, NEUTRAL)
    np.testing.assert_allclose(grad_a, num_a, rtol=1e-5, atol=1e-8)


def test_factor_params_rank_mismatch():
    """A and B must share the latent rank."""
    with pytest.raises(DimensionMismatchError):
        FactorParams(A=np.zeros((3, 2)), B=np.zeros((4, 3)))


def test_latent_column_permutation_invariance():
    """Permuting latent columns of A and B together changes nothing observable."""
    rng = np.random.default_rng(11)
    noise = NoiseModel(epsilon=0.15)
    prior = BetaPrior(alpha=0.8, beta=1.2)
    for _ in range(10):
        x, params = _random_instance(rng, 7, 6, 4)
        order = rng.permutation(4)
        permuted = FactorParams(A=params.A[:, order], B=params.B[:, order])

        assert log_posterior(x, permuted, noise, prior) == pytest.approx(
            log_posterior(x, params, noise, prior), rel=1e-12, abs=1e-12
        )
        assert np.array_equal(reconstruct(permuted, noise), reconstruct(params, noise))
        np.testing.assert_allclose(clean_probability(permuted), clean_probability(params), rtol=1e-12, atol=1e-15)
