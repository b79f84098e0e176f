import numpy as np

from src.models.segmentation_model import ImageTensor, PixelBatch, BatchStats, PosteriorField
from src.models.errors import InvalidInputError

DEFAULT_GAMMA_FLOOR = 1e-8
DEFAULT_VARIANCE_FLOOR = 1e-6


def flatten_image(img: ImageTensor) -> PixelBatch:
    """Разворачивает H×W×C изображение в матрицу пикселей (H·W)×C построчно"""
    return PixelBatch(img.data.reshape(-1, img.channels).copy())


def unflatten_batch(batch: PixelBatch, width: int, height: int) -> ImageTensor:
    """Обратное преобразование к flatten_image"""
    if batch.n_samples != width * height:
        raise InvalidInputError(
            f"cannot reshape {batch.n_samples} pixels into a {width}×{height} image"
        )
    return ImageTensor(batch.samples.reshape(height, width, batch.dim).copy())


def compute_batch_stats(batch: PixelBatch, variance_floor: float = DEFAULT_VARIANCE_FLOOR) -> BatchStats:
    """Среднее и популяционная дисперсия минибатча по каналам"""
    x = batch.samples
    mean = x.mean(axis=0)
    variance = ((x - mean) ** 2).mean(axis=0)
    return BatchStats(mean=mean, variance=np.maximum(variance, variance_floor))


def apply_gamma_floor(probabilities: np.ndarray, gamma_floor: float = DEFAULT_GAMMA_FLOOR) -> np.ndarray:
    """Поднимает все вероятности не ниже gamma_floor, сохраняя сумму строки равной 1.

    Используется сдвиг γ = f + (1 − K·f)·p: он гладкий
    и гарантирует γ ≥ f без последующей перенормировки.
    """
    k = probabilities.shape[1]
    return gamma_floor + (1.0 - k * gamma_floor) * probabilities


def softmax_rows(logits: np.ndarray, gamma_floor: float = DEFAULT_GAMMA_FLOOR) -> PosteriorField:
    """Построчный softmax с вычитанием максимума и нижней границей γ"""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or not np.all(np.isfinite(logits)):
        raise InvalidInputError("logits must be a finite N×K matrix")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probabilities = exp / exp.sum(axis=1, keepdims=True)
    return PosteriorField(apply_gamma_floor(probabilities, gamma_floor))
