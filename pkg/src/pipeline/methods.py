from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List
import logging

import numpy as np

from src.baselines.gmm import fit_gmm
from src.baselines.kmeans import MiniBatchKMeans
from src.core.pixel_ops import flatten_image
from src.mixture.constrained_em import ConstrainedEM
from src.mixture.gmm_objective import classical_posterior
from src.network.posterior_network import NetworkParams, predict
from src.network.trainer import train_dcgn
from src.models.segmentation_model import ImageTensor, PixelBatch, MixtureParams, SegmentationMask, RunConfig
from src.models.errors import InvalidInputError


@dataclass
class FitOutcome:
    """Результат подгонки метода на наборе изображений"""
    masks: List[SegmentationMask]
    mixture: MixtureParams
    network: NetworkParams = field(default_factory=NetworkParams)
    epochs: int = 0


def pooled_pixels(images: List[ImageTensor]) -> PixelBatch:
    """Пиксели всех изображений одной матрицей"""
    if not images:
        raise InvalidInputError("no images to fit")
    channels = images[0].channels
    if any(img.channels != channels for img in images):
        raise InvalidInputError("all images must have the same channel count")
    return PixelBatch(np.concatenate([flatten_image(img).samples for img in images]))


def split_labels(labels: np.ndarray, images: List[ImageTensor], k: int) -> List[SegmentationMask]:
    """Разрезает метки объединённых пикселей обратно на маски изображений"""
    masks = []
    offset = 0
    for img in images:
        size = img.height * img.width
        masks.append(SegmentationMask(labels=labels[offset:offset + size].reshape(img.height, img.width), k=k))
        offset += size
    return masks


def segment_image(network: NetworkParams, mixture: MixtureParams, img: ImageTensor,
                  gamma_floor: float) -> SegmentationMask:
    """Сегментация сохранённой моделью: сетью, а без сети классическим E-шагом"""
    if network.layers:
        return predict(network, img, gamma_floor)
    posterior = classical_posterior(flatten_image(img), mixture, gamma_floor)
    return SegmentationMask(labels=posterior.hard_labels().reshape(img.height, img.width), k=mixture.k)


def centroid_mixture(centroids: np.ndarray) -> MixtureParams:
    """Центроиды как смесь с равными весами и единичными ковариациями: argmax = ближайший центроид"""
    k, dim = centroids.shape
    return MixtureParams(
        weights=np.full(k, 1.0 / k),
        means=centroids,
        covariances=np.broadcast_to(np.eye(dim), (k, dim, dim)).copy(),
    )


class SegmentationMethod(ABC):
    """Метод сегментации, подгоняемый на наборе изображений без разметки"""

    name: str = ""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    @abstractmethod
    def fit(self, images: List[ImageTensor], config: RunConfig) -> FitOutcome:
        """Подгоняет модель и возвращает маски всех изображений"""


class DCGNMethod(SegmentationMethod):
    name = "dcgn"

    def fit(self, images: List[ImageTensor], config: RunConfig) -> FitOutcome:
        network, mixture, trace = train_dcgn(images, config)
        masks = [predict(network, img, config.gamma_floor) for img in images]
        epochs = trace.epochs_to_convergence() or len(trace)
        return FitOutcome(masks=masks, mixture=mixture, network=network, epochs=epochs)


class ConstrainedEMMethod(SegmentationMethod):
    name = "cgmm-em"

    def fit(self, images: List[ImageTensor], config: RunConfig) -> FitOutcome:
        result = ConstrainedEM(config).fit(pooled_pixels(images))
        masks = split_labels(result.posterior.hard_labels(), images, config.k)
        return FitOutcome(masks=masks, mixture=result.params, epochs=result.iterations)


class GMMMethod(SegmentationMethod):
    name = "gmm"

    def fit(self, images: List[ImageTensor], config: RunConfig) -> FitOutcome:
        iterations: List[int] = []
        batch = pooled_pixels(images)
        params, posterior = fit_gmm(batch, config.k, config,
                                    callback=lambda iteration, params, gamma: iterations.append(iteration))
        masks = split_labels(posterior.hard_labels(), images, config.k)
        return FitOutcome(masks=masks, mixture=params, epochs=len(iterations))


class KMeansMethod(SegmentationMethod):
    name = "kmeans"

    def fit(self, images: List[ImageTensor], config: RunConfig) -> FitOutcome:
        model = MiniBatchKMeans(config.k, config).fit(pooled_pixels(images))
        masks = split_labels(model.labels_, images, config.k)
        return FitOutcome(masks=masks, mixture=centroid_mixture(model.centroids_), epochs=model.n_epochs_)


METHODS: Dict[str, type] = {
    DCGNMethod.name: DCGNMethod,
    ConstrainedEMMethod.name: ConstrainedEMMethod,
    GMMMethod.name: GMMMethod,
    KMeansMethod.name: KMeansMethod,
}


def get_method(name: str) -> SegmentationMethod:
    """Создаёт метод по имени"""
    if name not in METHODS:
        raise InvalidInputError(f"unknown method '{name}', expected one of {sorted(METHODS)}")
    return METHODS[name]()


def fit_method(name: str, images: List[ImageTensor], config: RunConfig) -> FitOutcome:
    """Подгонка метода по имени с параметрами прогона"""
    method = get_method(name)
    method.logger.info(f"Fitting {name} on {len(images)} image(s): K={config.k}, lambda={config.lam}, seed={config.seed}")
    outcome = method.fit(images, config)
    method.logger.info(f"{name} finished after {outcome.epochs} epochs")
    return outcome
