import numpy as np
import pytest
from scipy.stats import multivariate_normal

from conftest import random_batch
from src.core.pixel_ops import compute_batch_stats
from src.mixture.gmm_objective import (
    log_weighted_densities, gmm_log_likelihood, mixture_log_likelihood, centralised_penalty,
    constrained_objective, m_step_alpha, m_step_mu_constrained, m_step_sigma, classical_posterior,
)
from src.models.segmentation_model import PixelBatch, PosteriorField, MixtureParams, BatchStats
from src.models.errors import CovarianceError, DegenerateResponsibilityError, InvalidInputError


def _random_params(rng, k=3, d=3) -> MixtureParams:
    weights = rng.dirichlet(np.ones(k))
    means = rng.uniform(0.1, 0.9, size=(k, d))
    covariances = np.empty((k, d, d))
    for j in range(k):
        a = 0.1 * rng.standard_normal((d, d))
        covariances[j] = a @ a.T + 0.02 * np.eye(d)
    return MixtureParams(weights=weights, means=means, covariances=covariances)


def _random_gamma(rng, n, k) -> PosteriorField:
    return PosteriorField(rng.dirichlet(np.ones(k), size=n))


def test_log_densities_match_scipy(rng):
    batch = random_batch(rng, n=50)
    params = _random_params(rng)
    expected = np.column_stack([
        np.log(params.weights[j]) + multivariate_normal.logpdf(batch.samples, params.means[j], params.covariances[j])
        for j in range(params.k)
    ])
    np.testing.assert_allclose(log_weighted_densities(batch, params), expected, rtol=1e-10, atol=1e-10)


def test_log_likelihood_hand_example():
    batch = PixelBatch(np.array([[0.0]]))
    params = MixtureParams(weights=np.array([1.0]), means=np.array([[0.0]]), covariances=np.array([[[1.0]]]))
    gamma = PosteriorField(np.array([[1.0]]))
    assert gmm_log_likelihood(batch, gamma, params) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-12)


def test_true_posterior_makes_bound_tight(rng):
    batch = random_batch(rng, n=80)
    params = _random_params(rng)
    posterior = classical_posterior(batch, params, gamma_floor=1e-300)
    assert gmm_log_likelihood(batch, posterior, params) == pytest.approx(
        mixture_log_likelihood(batch, params), rel=1e-9)


def test_non_pd_covariance_names_component(rng):
    batch = random_batch(rng, n=10)
    params = _random_params(rng)
    covariances = params.covariances.copy()
    covariances[1] = -np.eye(3)
    broken = MixtureParams(weights=params.weights, means=params.means, covariances=covariances)
    with pytest.raises(CovarianceError) as info:
        log_weighted_densities(batch, broken)
    assert info.value.component == 1


def test_penalty_and_constrained_objective():
    params = MixtureParams(weights=np.array([0.5, 0.5]), means=np.array([[0.2], [0.8]]),
                           covariances=np.array([[[0.01]], [[0.01]]]))
    stats = BatchStats(mean=np.array([0.5]), variance=np.array([0.09]))
    assert centralised_penalty(params, stats) == pytest.approx(0.6 / 0.09)

    batch = PixelBatch(np.array([[0.2], [0.8]]))
    gamma = PosteriorField(np.array([[0.5, 0.5], [0.5, 0.5]]))
    base = gmm_log_likelihood(batch, gamma, params)
    assert constrained_objective(batch, gamma, params, stats, 0.0) == base
    assert constrained_objective(batch, gamma, params, stats, 0.1) == pytest.approx(base - 0.1 * 0.6 / 0.09)
    with pytest.raises(InvalidInputError):
        constrained_objective(batch, gamma, params, stats, -1.0)


def test_m_step_alpha_sums_to_one(rng):
    gamma = _random_gamma(rng, 100, 4)
    alpha = m_step_alpha(gamma)
    assert alpha.sum() == pytest.approx(1.0, abs=1e-12)


def test_mu_update_example():
    gamma = PosteriorField(np.array([[1.0], [1.0]]))
    batch = PixelBatch(np.array([[0.2], [0.4]]))
    stats = BatchStats(mean=np.array([0.5]), variance=np.array([0.04]))
    sigma = np.array([[[0.01]]])
    # μ_prev ≥ X̄ → знак минус: (0.6 − 0.1·0.01/0.04)/2
    assert m_step_mu_constrained(gamma, batch, sigma, stats, 0.1, np.array([[0.6]]))[0, 0] == pytest.approx(0.2875)
    # μ_prev < X̄ → знак плюс
    assert m_step_mu_constrained(gamma, batch, sigma, stats, 0.1, np.array([[0.3]]))[0, 0] == pytest.approx(0.3125)
    assert m_step_mu_constrained(gamma, batch, sigma, stats, 0.0)[0, 0] == pytest.approx(0.3)


def test_mu_correction_always_points_to_batch_mean(rng):
    for _ in range(1000):
        n, k, d = int(rng.integers(5, 40)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        batch = PixelBatch(rng.random((n, d)))
        gamma = _random_gamma(rng, n, k)
        stats = compute_batch_stats(batch)
        sigma = np.stack([np.diag(rng.uniform(0.01, 0.3, size=d)) for _ in range(k)])
        lam = float(rng.uniform(0.0, 0.05))
        means_prev = rng.random((k, d))

        unconstrained = m_step_mu_constrained(gamma, batch, sigma, stats, 0.0)
        constrained = m_step_mu_constrained(gamma, batch, sigma, stats, lam, means_prev)
        toward = np.sign(stats.mean - means_prev)
        toward[toward == 0] = -1.0
        shift = constrained - unconstrained
        # поправка никогда не уводит от X̄ (по знаку предыдущего среднего)
        assert np.all(shift * toward >= -1e-12)

        same_side = np.sign(means_prev - stats.mean) == np.sign(unconstrained - stats.mean)
        no_overshoot = np.abs(shift) <= np.abs(unconstrained - stats.mean)
        closer = np.abs(constrained - stats.mean) <= np.abs(unconstrained - stats.mean) + 1e-12
        assert np.all(closer[same_side & no_overshoot])


def test_mu_update_raises_on_empty_column():
    gamma = PosteriorField(np.array([[1.0, 0.0], [1.0, 0.0]]))
    batch = PixelBatch(np.array([[0.1], [0.2]]))
    stats = compute_batch_stats(batch)
    with pytest.raises(DegenerateResponsibilityError):
        m_step_mu_constrained(gamma, batch, np.ones((2, 1, 1)), stats, 0.01)


def test_sigma_update_is_symmetric_positive_definite(rng):
    batch = random_batch(rng, n=60)
    gamma = _random_gamma(rng, 60, 3)
    means = m_step_mu_constrained(gamma, batch, np.ones((3, 3, 3)), compute_batch_stats(batch), 0.0)
    covariances = m_step_sigma(gamma, batch, means, covariance_floor=1e-6)
    for cov in covariances:
        np.testing.assert_allclose(cov, cov.T)
        assert np.linalg.eigvalsh(cov).min() >= 1e-6 - 1e-12


def test_classical_posterior_rows_on_simplex(rng):
    batch = random_batch(rng, n=40)
    posterior = classical_posterior(batch, _random_params(rng))
    np.testing.assert_allclose(posterior.gamma.sum(axis=1), 1.0, atol=1e-12)
    assert posterior.gamma.min() >= 1e-8


def test_mu_update_per_pixel_scale_multiplies_correction():
    gamma = PosteriorField(np.array([[1.0], [1.0]]))
    batch = PixelBatch(np.array([[0.2], [0.4]]))
    stats = BatchStats(mean=np.array([0.3]), variance=np.array([0.01]))
    sigma = np.array([[[0.02]]])
    assert m_step_mu_constrained(gamma, batch, sigma, stats, 0.005, np.array([[0.5]]))[0, 0] == pytest.approx(0.295)
    assert m_step_mu_constrained(gamma, batch, sigma, stats, 0.005, np.array([[0.1]]))[0, 0] == pytest.approx(0.305)
    # N = 2: (0.6 − 2·0.005·0.02/0.01)/2
    assert m_step_mu_constrained(gamma, batch, sigma, stats, 0.005, np.array([[0.5]]),
                                 per_pixel=True)[0, 0] == pytest.approx(0.29)


def test_per_pixel_objective_divides_likelihood():
    params = MixtureParams(weights=np.array([0.5, 0.5]), means=np.array([[0.2], [0.8]]),
                           covariances=np.array([[[0.01]], [[0.01]]]))
    stats = BatchStats(mean=np.array([0.5]), variance=np.array([0.09]))
    batch = PixelBatch(np.array([[0.2], [0.8]]))
    gamma = PosteriorField(np.array([[0.9, 0.1], [0.1, 0.9]]))
    base = gmm_log_likelihood(batch, gamma, params)
    assert constrained_objective(batch, gamma, params, stats, 0.1, per_pixel=True) == pytest.approx(
        base / 2 - 0.1 * 0.6 / 0.09)


def test_shrinking_lambda_approaches_plain_objective(rng):
    batch = random_batch(rng, n=200)
    params = _random_params(rng)
    gamma = _random_gamma(rng, 200, 3)
    stats = compute_batch_stats(batch)
    plain = gmm_log_likelihood(batch, gamma, params)
    assert constrained_objective(batch, gamma, params, stats, 0.0) == pytest.approx(plain, abs=1e-10)
    gaps = [abs(constrained_objective(batch, gamma, params, stats, lam) - plain) for lam in (1e-2, 1e-4, 1e-6)]
    assert gaps[0] > gaps[1] > gaps[2] > 0


def test_previous_iterate_on_other_side_pushes_mean_away():
    gamma = PosteriorField(np.array([[1.0], [1.0]]))
    batch = PixelBatch(np.array([[0.2], [0.4]]))
    stats = BatchStats(mean=np.array([0.5]), variance=np.array([0.04]))
    sigma = np.array([[[0.01]]])
    # безусловное 0.3 ниже X̄, предыдущее 0.6 выше: знак минус уводит от X̄
    pushed = m_step_mu_constrained(gamma, batch, sigma, stats, 0.1, np.array([[0.6]]))[0, 0]
    assert pushed == pytest.approx(0.2875)
    assert abs(pushed - 0.5) > abs(0.3 - 0.5)

    limited = m_step_mu_constrained(gamma, batch, sigma, stats, 0.1, np.array([[0.6]]), pull_limit=True)[0, 0]
    assert limited == pytest.approx(0.3)


def test_correction_larger_than_twice_distance_overshoots():
    gamma = PosteriorField(np.array([[1.0], [1.0]]))
    batch = PixelBatch(np.array([[0.2], [0.4]]))
    stats = BatchStats(mean=np.array([0.305]), variance=np.array([0.04]))
    sigma = np.array([[[0.01]]])
    # сдвиг 0.0125 больше удвоенного расстояния 0.005 до X̄
    overshoot = m_step_mu_constrained(gamma, batch, sigma, stats, 0.1, np.array([[0.3]]))[0, 0]
    assert overshoot == pytest.approx(0.3125)
    assert abs(overshoot - 0.305) > abs(0.3 - 0.305)

    limited = m_step_mu_constrained(gamma, batch, sigma, stats, 0.1, np.array([[0.3]]), pull_limit=True)[0, 0]
    assert limited == pytest.approx(0.305)


def test_pull_limit_never_moves_mean_farther(rng):
    for _ in range(1000):
        n, k, d = int(rng.integers(5, 40)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        batch = PixelBatch(rng.random((n, d)))
        gamma = _random_gamma(rng, n, k)
        stats = compute_batch_stats(batch)
        sigma = np.stack([np.diag(rng.uniform(0.01, 0.3, size=d)) for _ in range(k)])
        lam = float(rng.uniform(0.0, 0.05))
        means_prev = rng.random((k, d))

        unconstrained = m_step_mu_constrained(gamma, batch, sigma, stats, 0.0)
        limited = m_step_mu_constrained(gamma, batch, sigma, stats, lam, means_prev,
                                        per_pixel=bool(rng.integers(0, 2)), pull_limit=True)
        assert np.all(np.abs(limited - stats.mean) <= np.abs(unconstrained - stats.mean) + 1e-12)
