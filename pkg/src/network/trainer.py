from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple
import logging
import time

import numpy as np

from src.baselines.kmeans import MiniBatchKMeans
from src.core.pixel_ops import flatten_image, compute_batch_stats
from src.mixture.constrained_em import init_covariances, constrained_m_step, warm_start_mixture
from src.network.posterior_network import NetworkParams, init_network, forward, loss_and_grad
from src.pipeline.preprocessing import augment
from src.models.segmentation_model import ImageTensor, PixelBatch, MixtureParams, RunConfig
from src.models.errors import InvalidInputError, TrainingDivergedError


@dataclass
class TrainTrace:
    """Поэпоховая история обучения: 𝓛_C на пиксель, шаг обучения, время

    При likelihood_scale="sum" в трассу пишется 𝓛_C/N, при "mean" сама 𝓛/N − λΔ.
    """
    objectives: List[float] = field(default_factory=list)
    learning_rates: List[float] = field(default_factory=list)
    wall_times: List[float] = field(default_factory=list, compare=False)

    def __len__(self) -> int:
        return len(self.objectives)

    def epochs_to_convergence(self, tol: float = 1e-4, patience: int = 5) -> Optional[int]:
        """Номер эпохи (с 1), после которой |Δ𝓛_C| < tol держится patience эпох подряд"""
        deltas = np.abs(np.diff(self.objectives))
        streak = 0
        for index, delta in enumerate(deltas):
            streak = streak + 1 if delta < tol else 0
            if streak >= patience:
                return index + 2
        return None


class DCGNTrainer:
    """Обучение сети апостериорных вероятностей с ограниченной смесью Гаусса"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.logger = logging.getLogger(__name__)

    def train(self, dataset: List[ImageTensor]) -> Tuple[NetworkParams, MixtureParams, TrainTrace]:
        """Чередует обновление Θ по формулам и шаг градиентного спуска по ω.

        При warmup_epochs > 0 сначала строится Θ по разбиению k-means (плюс
        init_em_iterations шагов EM), и первые warmup_epochs эпох сеть
        обучается при замороженном Θ; после этого идёт обычное чередование.
        """
        config = self.config
        if not dataset:
            raise InvalidInputError("training dataset is empty")
        channels = dataset[0].channels
        if any(img.channels != channels for img in dataset):
            raise InvalidInputError("all training images must have the same channel count")

        rng = np.random.default_rng(config.seed)
        network = init_network(channels, config.hidden_widths, config.k, rng)
        covariances = init_covariances(config.k, channels, rng)
        means_prev: Optional[np.ndarray] = None
        mixture: Optional[MixtureParams] = None
        learning_rate = config.learning_rate
        trace = TrainTrace()

        self.logger.info(
            f"Training DCGN: {len(dataset)} images, K={config.k}, lambda={config.lam}, "
            f"epochs={config.epochs}, batch_size={config.batch_size}, scale={config.likelihood_scale.value}"
        )
        if config.warmup_epochs > 0:
            mixture = self._warm_start(dataset, covariances)
            covariances, means_prev = mixture.covariances, mixture.means

        for epoch in range(config.epochs):
            started = time.perf_counter()
            frozen = epoch < config.warmup_epochs
            pixels = self._epoch_pixels(dataset, rng)
            order = rng.permutation(pixels.n_samples)
            epoch_objectives = []
            for step, indices in enumerate(self._minibatches(order)):
                batch = pixels.subset(indices)
                stats = compute_batch_stats(batch, config.variance_floor)

                if not frozen:
                    gamma = forward(network, batch, config.gamma_floor)
                    mixture = constrained_m_step(gamma, batch, covariances, stats, config, means_prev)
                    covariances, means_prev = mixture.covariances, mixture.means

                loss, grads = loss_and_grad(network, batch, mixture, stats, config.lam,
                                            config.gamma_floor, config.per_pixel)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(epoch, step)
                self._descend(network, grads, learning_rate, batch.n_samples)
                epoch_objectives.append(-loss if config.per_pixel else -loss / batch.n_samples)

            trace.objectives.append(float(np.mean(epoch_objectives)))
            trace.learning_rates.append(learning_rate)
            trace.wall_times.append(time.perf_counter() - started)
            self.logger.debug(
                f"epoch {epoch + 1}/{config.epochs}: objective per pixel={trace.objectives[-1]:.8f}, lr={learning_rate:.3e}"
            )
            learning_rate *= config.lr_decay

        if not network.is_finite():
            raise TrainingDivergedError(config.epochs - 1, -1)
        final_mixture = self._final_mixture(network, dataset, covariances, means_prev)
        self.logger.info(
            f"DCGN training finished: final objective per pixel={trace.objectives[-1]:.6f}, "
            f"converged at epoch {trace.epochs_to_convergence()}"
        )
        return network, final_mixture, trace

    def _warm_start(self, dataset: List[ImageTensor], covariances: np.ndarray) -> MixtureParams:
        """Θ по полному k-means (Lloyd) на всех пикселях без аугментации"""
        config = self.config
        batch = _all_pixels(dataset)
        kmeans = MiniBatchKMeans(config.k, replace(config, batch_size=batch.n_samples)).fit(batch)
        mixture = warm_start_mixture(batch, kmeans.labels_, covariances, config)
        self.logger.info(
            f"Warm start: k-means in {kmeans.n_epochs_} iterations, {config.init_em_iterations} EM steps, "
            f"network frozen-Theta epochs={config.warmup_epochs}"
        )
        return mixture

    def _epoch_pixels(self, dataset: List[ImageTensor], rng: np.random.Generator) -> PixelBatch:
        images = dataset
        if self.config.augment:
            images = [augment(img, int(rng.integers(0, 2 ** 63 - 1))) for img in dataset]
        return _all_pixels(images)

    def _minibatches(self, order: np.ndarray) -> List[np.ndarray]:
        size = self.config.batch_size
        batches = [order[start:start + size] for start in range(0, order.shape[0], size)]
        # хвост меньше K пикселей не даёт осмысленной оценки Θ
        if len(batches) > 1 and batches[-1].shape[0] < self.config.k:
            batches.pop()
        return batches

    def _descend(self, network: NetworkParams, grads: NetworkParams, learning_rate: float, n_samples: int):
        """Шаг градиентного спуска по среднему на пиксель градиенту (с обрезкой нормы)"""
        scale = 1.0 if self.config.per_pixel else 1.0 / n_samples
        if self.config.grad_clip is not None:
            norm = np.linalg.norm(grads.flat()) * scale
            if norm > self.config.grad_clip:
                scale *= self.config.grad_clip / norm
        for layer, grad in zip(network.layers, grads.layers):
            layer.weights -= learning_rate * scale * grad.weights
            layer.bias -= learning_rate * scale * grad.bias

    def _final_mixture(self, network: NetworkParams, dataset: List[ImageTensor],
                       covariances: np.ndarray, means_prev: Optional[np.ndarray]) -> MixtureParams:
        """Оценивает Θ по всем пикселям обученной сетью (те же формулы обновления)"""
        config = self.config
        batch = _all_pixels(dataset)
        stats = compute_batch_stats(batch, config.variance_floor)
        gamma = forward(network, batch, config.gamma_floor)
        return constrained_m_step(gamma, batch, covariances, stats, config, means_prev)


def _all_pixels(images: List[ImageTensor]) -> PixelBatch:
    return PixelBatch(np.concatenate([flatten_image(img).samples for img in images]))


def train_dcgn(dataset: List[ImageTensor], config: RunConfig) -> Tuple[NetworkParams, MixtureParams, TrainTrace]:
    """Обучает DCGN на наборе изображений"""
    return DCGNTrainer(config).train(dataset)
