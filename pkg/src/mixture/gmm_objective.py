from typing import Optional
import logging

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from src.core.pixel_ops import apply_gamma_floor, DEFAULT_GAMMA_FLOOR
from src.models.segmentation_model import PixelBatch, PosteriorField, MixtureParams, BatchStats
from src.models.errors import CovarianceError, DegenerateResponsibilityError, InvalidInputError

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
DEGENERATE_MASS = 1e-12


def _check_shapes(batch: PixelBatch, params: MixtureParams, gamma: Optional[PosteriorField] = None):
    if batch.dim != params.dim:
        raise InvalidInputError(f"batch dimension {batch.dim} does not match mixture dimension {params.dim}")
    if gamma is not None and (gamma.n_samples != batch.n_samples or gamma.k != params.k):
        raise InvalidInputError(
            f"posterior shape {gamma.gamma.shape} does not match batch ({batch.n_samples}) and K={params.k}"
        )


def _cholesky(covariance: np.ndarray, component: int) -> np.ndarray:
    try:
        return linalg.cholesky(covariance, lower=True)
    except np.linalg.LinAlgError as e:
        raise CovarianceError(component, str(e)) from e


def log_weighted_densities(batch: PixelBatch, params: MixtureParams) -> np.ndarray:
    """Матрица N×K: log α_k + log N(X_i | μ_k, Σ_k) через разложение Холецкого"""
    _check_shapes(batch, params)
    x = batch.samples
    n, d = x.shape
    result = np.empty((n, params.k))
    with np.errstate(divide='ignore'):
        log_weights = np.log(params.weights)
    for k in range(params.k):
        chol = _cholesky(params.covariances[k], k)
        log_det = 2.0 * np.sum(np.log(np.diag(chol)))
        whitened = linalg.solve_triangular(chol, (x - params.means[k]).T, lower=True)
        mahalanobis = np.sum(whitened ** 2, axis=0)
        result[:, k] = log_weights[k] - 0.5 * d * LOG_2PI - 0.5 * log_det - 0.5 * mahalanobis
    return result


def gmm_log_likelihood(batch: PixelBatch, gamma: PosteriorField, params: MixtureParams) -> float:
    """Логарифм правдоподобия смеси при псевдо-апостериорных γ (константа 2π включена)"""
    _check_shapes(batch, params, gamma)
    g = gamma.gamma
    densities = log_weighted_densities(batch, params)
    return float(np.sum(g * (densities - np.log(g))))


def mixture_log_likelihood(batch: PixelBatch, params: MixtureParams) -> float:
    """Обычное log-правдоподобие смеси: Σ_i log Σ_k α_k N(X_i | μ_k, Σ_k)"""
    return float(np.sum(logsumexp(log_weighted_densities(batch, params), axis=1)))


def centralised_penalty(params: MixtureParams, stats: BatchStats) -> float:
    """Централизующий штраф Δ = Σ_k Σ_c |μ_k,c − X̄_c| / σ_c²"""
    if params.dim != stats.mean.shape[0]:
        raise InvalidInputError("mixture and batch statistics have different dimensions")
    return float(np.sum(np.abs(params.means - stats.mean) / stats.variance))


def constrained_objective(batch: PixelBatch, gamma: PosteriorField, params: MixtureParams,
                          stats: BatchStats, lam: float, per_pixel: bool = False) -> float:
    """Целевая функция 𝓛_C = 𝓛 − λ·Δ (при per_pixel: 𝓛/N − λ·Δ)"""
    if lam < 0:
        raise InvalidInputError(f"lambda must be non-negative, got {lam}")
    likelihood = gmm_log_likelihood(batch, gamma, params)
    if per_pixel:
        likelihood /= batch.n_samples
    return likelihood - lam * centralised_penalty(params, stats)


def _component_mass(gamma: PosteriorField) -> np.ndarray:
    mass = gamma.gamma.sum(axis=0)
    for k, value in enumerate(mass):
        if value < DEGENERATE_MASS:
            raise DegenerateResponsibilityError(k, float(value))
    return mass


def m_step_alpha(gamma: PosteriorField) -> np.ndarray:
    """α_k = Σ_i γ_ik / N"""
    return gamma.gamma.sum(axis=0) / gamma.n_samples


def m_step_mu_constrained(gamma: PosteriorField, batch: PixelBatch, sigma_prev: np.ndarray,
                          stats: BatchStats, lam: float,
                          means_prev: Optional[np.ndarray] = None, per_pixel: bool = False,
                          pull_limit: bool = False) -> np.ndarray:
    """Обновление средних с централизующей поправкой.

    По каждому каналу c: μ_k,c = (Σ_i γ_ik X_i,c ∓ λ·Σ_k,cc / σ_c²) / Σ_i γ_ik.
    Знак "−" берётся, если предыдущее μ_k,c ≥ X̄_c, иначе "+", так что поправка
    всегда тянет среднее к наблюдаемому среднему минибатча. Если предыдущие
    средние неизвестны (первая итерация), знак выбирается по безусловному
    обновлению. Результат обрезается до [0,1].

    per_pixel соответствует 𝓛/N − λ·Δ: поправка умножается на N.
    pull_limit не пускает среднее дальше X̄_c: результат остаётся
    между безусловным обновлением и X̄_c.
    """
    mass = _component_mass(gamma)
    weighted = gamma.gamma.T @ batch.samples
    unconstrained = weighted / mass[:, np.newaxis]
    if lam == 0:
        return np.clip(unconstrained, 0.0, 1.0)

    diagonal = np.diagonal(sigma_prev, axis1=1, axis2=2)
    correction = lam * diagonal / stats.variance
    if per_pixel:
        correction = correction * batch.n_samples
    reference = unconstrained if means_prev is None else np.asarray(means_prev, dtype=np.float64)
    sign = np.where(reference >= stats.mean, -1.0, 1.0)
    means = (weighted + sign * correction) / mass[:, np.newaxis]
    if pull_limit:
        means = np.clip(means, np.minimum(unconstrained, stats.mean), np.maximum(unconstrained, stats.mean))
    return np.clip(means, 0.0, 1.0)


def m_step_sigma(gamma: PosteriorField, batch: PixelBatch, means: np.ndarray,
                 covariance_floor: float = 1e-6) -> np.ndarray:
    """Σ_k = Σ_i γ_ik (X_i − μ_k)(X_i − μ_k)ᵀ / Σ_i γ_ik + floor·I, где μ из новой итерации"""
    mass = _component_mass(gamma)
    x = batch.samples
    k_count, d = means.shape
    covariances = np.empty((k_count, d, d))
    for k in range(k_count):
        diff = x - means[k]
        scatter = (gamma.gamma[:, k, np.newaxis] * diff).T @ diff / mass[k]
        covariances[k] = 0.5 * (scatter + scatter.T) + covariance_floor * np.eye(d)
    return covariances


def classical_posterior(batch: PixelBatch, params: MixtureParams,
                        gamma_floor: float = DEFAULT_GAMMA_FLOOR) -> PosteriorField:
    """Байесовские ответственности γ_ik ∝ α_k N(X_i | μ_k, Σ_k), посчитанные в лог-пространстве"""
    densities = log_weighted_densities(batch, params)
    log_norm = logsumexp(densities, axis=1, keepdims=True)
    probabilities = np.exp(densities - log_norm)
    return PosteriorField(apply_gamma_floor(probabilities, gamma_floor))
