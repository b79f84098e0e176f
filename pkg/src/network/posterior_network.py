from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from src.core.pixel_ops import flatten_image, softmax_rows, apply_gamma_floor, DEFAULT_GAMMA_FLOOR
from src.mixture.gmm_objective import log_weighted_densities, centralised_penalty
from src.models.segmentation_model import (
    PixelBatch, PosteriorField, MixtureParams, BatchStats, ImageTensor, SegmentationMask,
)
from src.models.errors import InvalidInputError


@dataclass(eq=False)
class DenseLayer:
    """Полносвязный слой: веса (fan_in × fan_out) и смещения (fan_out)"""
    weights: np.ndarray
    bias: np.ndarray

    @property
    def fan_in(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[1]


@dataclass(eq=False)
class NetworkParams:
    """Параметры ω попиксельной сети D → hidden... → K"""
    layers: List[DenseLayer] = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out

    @property
    def hidden_widths(self) -> Tuple[int, ...]:
        return tuple(layer.fan_out for layer in self.layers[:-1])

    def copy(self) -> 'NetworkParams':
        return NetworkParams([DenseLayer(l.weights.copy(), l.bias.copy()) for l in self.layers])

    def zeros_like(self) -> 'NetworkParams':
        return NetworkParams([DenseLayer(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in self.layers])

    def flat(self) -> np.ndarray:
        """Все параметры одним вектором (веса, затем смещения, слой за слоем)"""
        return np.concatenate([np.concatenate([l.weights.ravel(), l.bias.ravel()]) for l in self.layers])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(l.weights)) and np.all(np.isfinite(l.bias)) for l in self.layers)


def init_network(input_dim: int, hidden_widths: Sequence[int], k: int,
                 rng: np.random.Generator) -> NetworkParams:
    """Инициализация Глорота: веса ~ U(±√(6/(fan_in+fan_out))), смещения нулевые"""
    widths = [input_dim, *hidden_widths, k]
    layers = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(DenseLayer(
            weights=rng.uniform(-limit, limit, size=(fan_in, fan_out)),
            bias=np.zeros(fan_out),
        ))
    return NetworkParams(layers)


def _forward_pass(params: NetworkParams, x: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
    if x.shape[1] != params.input_dim:
        raise InvalidInputError(f"batch dimension {x.shape[1]} does not match network input {params.input_dim}")
    activations = [x]
    for layer in params.layers[:-1]:
        activations.append(np.tanh(activations[-1] @ layer.weights + layer.bias))
    last = params.layers[-1]
    logits = activations[-1] @ last.weights + last.bias
    return activations, logits


def forward(params: NetworkParams, batch: PixelBatch,
            gamma_floor: float = DEFAULT_GAMMA_FLOOR) -> PosteriorField:
    """Псевдо-апостериорные γ = softmax(сеть(X))"""
    _, logits = _forward_pass(params, batch.samples)
    return softmax_rows(logits, gamma_floor)


def loss_and_grad(params: NetworkParams, batch: PixelBatch, frozen: MixtureParams,
                  stats: BatchStats, lam: float,
                  gamma_floor: float = DEFAULT_GAMMA_FLOOR,
                  per_pixel: bool = False) -> Tuple[float, NetworkParams]:
    """Потери −𝓛_C и их точный градиент по ω при замороженных Θ.

    ∂𝓛/∂γ_ik = log α_k − (D/2)log 2π − log γ_ik − 1 − ½log|Σ_k| − ½(X_i−μ_k)ᵀΣ_k⁻¹(X_i−μ_k);
    дальше цепочка через нижнюю границу γ, softmax и слои tanh.
    Штраф λ·Δ зависит только от Θ и градиента по ω не даёт.
    При per_pixel правдоподобие и градиент делятся на N.
    """
    activations, logits = _forward_pass(params, batch.samples)
    k = logits.shape[1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    softmax = exp / exp.sum(axis=1, keepdims=True)
    gamma = apply_gamma_floor(softmax, gamma_floor)
    log_gamma = np.log(gamma)

    densities = log_weighted_densities(batch, frozen)
    scale = 1.0 / batch.n_samples if per_pixel else 1.0
    likelihood = float(np.sum(gamma * (densities - log_gamma))) * scale
    loss = -(likelihood - lam * centralised_penalty(frozen, stats))

    d_gamma = -scale * (densities - log_gamma - 1.0)
    d_softmax = (1.0 - k * gamma_floor) * d_gamma
    d_logits = softmax * (d_softmax - np.sum(softmax * d_softmax, axis=1, keepdims=True))

    grads = params.zeros_like()
    upstream = d_logits
    for index in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[index]
        inputs = activations[index]
        grads.layers[index].weights = inputs.T @ upstream
        grads.layers[index].bias = upstream.sum(axis=0)
        if index > 0:
            # производная tanh через уже посчитанную активацию
            upstream = (upstream @ layer.weights.T) * (1.0 - inputs ** 2)
    return loss, grads


def predict(params: NetworkParams, img: ImageTensor,
            gamma_floor: float = DEFAULT_GAMMA_FLOOR) -> SegmentationMask:
    """Маска argmax апостериорных; ничья решается в пользу меньшего класса"""
    posterior = forward(params, flatten_image(img), gamma_floor)
    labels = posterior.hard_labels().reshape(img.height, img.width)
    return SegmentationMask(labels=labels, k=params.output_dim)
