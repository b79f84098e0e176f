from dataclasses import replace
from typing import Optional, Tuple

from src.mixture.constrained_em import fit_constrained_em, IterationCallback
from src.models.segmentation_model import PixelBatch, PosteriorField, MixtureParams, RunConfig


def fit_gmm(batch: PixelBatch, k: int, config: RunConfig,
            callback: Optional[IterationCallback] = None) -> Tuple[MixtureParams, PosteriorField]:
    """Обычная GMM: тот же EM, что и с ограничением, но с λ = 0"""
    params, posterior, _ = fit_constrained_em(batch, replace(config, k=k, lam=0.0), callback)
    return params, posterior
