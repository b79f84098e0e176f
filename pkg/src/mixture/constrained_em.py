from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple
import logging

import numpy as np

from src.core.pixel_ops import compute_batch_stats, apply_gamma_floor
from src.mixture.gmm_objective import (
    classical_posterior, constrained_objective, m_step_alpha,
    m_step_mu_constrained, m_step_sigma,
)
from src.models.segmentation_model import PixelBatch, PosteriorField, MixtureParams, BatchStats, RunConfig
from src.models.errors import InvalidInputError

SIGMA_INIT_RANGE = (0.05, 0.3)

IterationCallback = Callable[[int, MixtureParams, PosteriorField], None]


@dataclass
class EMResult:
    """Итог подгонки смеси"""
    params: MixtureParams
    posterior: PosteriorField
    trace: List[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.trace)


def init_covariances(k: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Случайная диагональная Σ^(0): элементы диагонали равномерны в [0.05, 0.3]"""
    diagonal = rng.uniform(SIGMA_INIT_RANGE[0], SIGMA_INIT_RANGE[1], size=(k, dim))
    covariances = np.zeros((k, dim, dim))
    idx = np.arange(dim)
    covariances[:, idx, idx] = diagonal
    return covariances


def init_mixture_params(batch: PixelBatch, k: int, rng: np.random.Generator) -> MixtureParams:
    """Начальные параметры: K различных строк батча как μ, затем случайная Σ, равные α.

    Порядок обращений к генератору фиксирован: сначала rng.choice(N, K, replace=False),
    затем rng.uniform для диагоналей Σ.
    """
    indices = rng.choice(batch.n_samples, size=k, replace=False)
    means = batch.samples[indices].copy()
    covariances = init_covariances(k, batch.dim, rng)
    return MixtureParams(weights=np.full(k, 1.0 / k), means=means, covariances=covariances)


def constrained_m_step(gamma: PosteriorField, batch: PixelBatch, sigma_prev: np.ndarray, stats: BatchStats,
                       config: RunConfig, means_prev: Optional[np.ndarray] = None) -> MixtureParams:
    """M-шаг: α, ограниченные μ и Σ с опциями масштаба и ограничения притяжения из config"""
    weights = m_step_alpha(gamma)
    means = m_step_mu_constrained(gamma, batch, sigma_prev, stats, config.lam, means_prev,
                                  per_pixel=config.per_pixel, pull_limit=config.pull_limit)
    covariances = m_step_sigma(gamma, batch, means, config.covariance_floor)
    return MixtureParams(weights=weights, means=means, covariances=covariances)


def warm_start_mixture(batch: PixelBatch, labels: np.ndarray, covariances: np.ndarray,
                       config: RunConfig) -> MixtureParams:
    """Θ из жёсткого разбиения: M-шаг по one-hot меткам, затем init_em_iterations шагов EM"""
    labels = np.asarray(labels)
    if labels.shape != (batch.n_samples,) or labels.min() < 0 or labels.max() >= config.k:
        raise InvalidInputError(f"warm start needs one label in [0, {config.k}) per pixel")
    stats = compute_batch_stats(batch, config.variance_floor)
    one_hot = np.eye(config.k)[labels]
    gamma = PosteriorField(apply_gamma_floor(one_hot, config.gamma_floor))
    params = constrained_m_step(gamma, batch, covariances, stats, config)
    for _ in range(config.init_em_iterations):
        gamma = classical_posterior(batch, params, config.gamma_floor)
        params = constrained_m_step(gamma, batch, params.covariances, stats, config, params.means)
    return params


class ConstrainedEM:
    """EM с централизующим ограничением на средние (замкнутые формулы обновления)"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.logger = logging.getLogger(__name__)

    def fit(self, batch: PixelBatch, callback: Optional[IterationCallback] = None) -> EMResult:
        """Чередует E-шаг и ограниченный M-шаг до сходимости или исчерпания итераций"""
        config = self.config
        if batch.n_samples < config.k:
            raise InvalidInputError(f"need at least K={config.k} samples, got {batch.n_samples}")

        rng = np.random.default_rng(config.seed)
        stats = compute_batch_stats(batch, config.variance_floor)
        params = init_mixture_params(batch, config.k, rng)
        gamma = classical_posterior(batch, params, config.gamma_floor)

        trace: List[float] = []
        converged = False
        for iteration in range(config.epochs):
            params = constrained_m_step(gamma, batch, params.covariances, stats, config, params.means)

            gamma = classical_posterior(batch, params, config.gamma_floor)
            objective = constrained_objective(batch, gamma, params, stats, config.lam, config.per_pixel)
            trace.append(objective)
            if callback is not None:
                callback(iteration, params, gamma)

            self.logger.debug(f"EM iteration {iteration}: objective={objective:.10f}")
            if iteration > 0 and abs(trace[-1] - trace[-2]) < config.em_tolerance:
                converged = True
                break

        self.logger.info(
            f"Constrained EM finished after {len(trace)} iterations "
            f"(lambda={config.lam}, converged={converged}, objective={trace[-1]:.6f})"
        )
        return EMResult(params=params, posterior=gamma, trace=trace, converged=converged)


def fit_constrained_em(batch: PixelBatch, config: RunConfig,
                       callback: Optional[IterationCallback] = None
                       ) -> Tuple[MixtureParams, PosteriorField, List[float]]:
    """Подгоняет смесь с ограничением; возвращает (Θ, γ, трасса целевой функции)"""
    result = ConstrainedEM(config).fit(batch, callback)
    return result.params, result.posterior, result.trace
