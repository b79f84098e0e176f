from typing import Optional

import numpy as np
from skimage.color import rgb2hsv, hsv2rgb

from src.models.segmentation_model import ImageTensor

HUE_DELTA = 0.12
SATURATION_RANGE = (0.5, 1.5)
FLIP_PROBABILITY = 0.5


def minmax_normalize(img: ImageTensor) -> ImageTensor:
    """Min-max нормализация по каналам: X' = (X − min) / (max − min); постоянный канал → 0"""
    data = img.data
    low = data.min(axis=(0, 1), keepdims=True)
    span = data.max(axis=(0, 1), keepdims=True) - low
    safe_span = np.where(span > 0, span, 1.0)
    normalized = np.where(span > 0, (data - low) / safe_span, 0.0)
    return ImageTensor(np.clip(normalized, 0.0, 1.0))


def augment(img: ImageTensor, seed: int,
            hue_delta: Optional[float] = None,
            saturation_factor: Optional[float] = None,
            flip_ud: Optional[bool] = None,
            flip_lr: Optional[bool] = None) -> ImageTensor:
    """Случайный сдвиг оттенка, насыщенность и отражения.

    Все четыре величины всегда разыгрываются в одном порядке (оттенок,
    насыщенность, вертикальное и горизонтальное отражение), явные аргументы
    лишь подменяют разыгранные значения.
    """
    rng = np.random.default_rng(seed)
    drawn_hue = rng.uniform(-HUE_DELTA, HUE_DELTA)
    drawn_saturation = rng.uniform(*SATURATION_RANGE)
    drawn_ud = rng.random() < FLIP_PROBABILITY
    drawn_lr = rng.random() < FLIP_PROBABILITY

    hue = drawn_hue if hue_delta is None else hue_delta
    saturation = drawn_saturation if saturation_factor is None else saturation_factor
    do_ud = drawn_ud if flip_ud is None else flip_ud
    do_lr = drawn_lr if flip_lr is None else flip_lr

    data = img.data
    if img.channels == 3 and (hue != 0.0 or saturation != 1.0):
        hsv = rgb2hsv(np.clip(data, 0.0, 1.0))
        hsv[..., 0] = np.mod(hsv[..., 0] + hue, 1.0)
        hsv[..., 1] = np.clip(hsv[..., 1] * saturation, 0.0, 1.0)
        data = hsv2rgb(hsv)
    if do_ud:
        data = data[::-1, :, :]
    if do_lr:
        data = data[:, ::-1, :]
    return ImageTensor(np.clip(np.ascontiguousarray(data), 0.0, 1.0))
