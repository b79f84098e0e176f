from dataclasses import replace
from typing import Tuple
import logging

import numpy as np
from skimage.measure import label as connected_components

from src.models.errors import InvalidInputError
from src.models.segmentation_model import (
    ImageTensor, SegmentationMask, InstanceMask, SyntheticSpec, Layout, LabeledImage, SegmentationDataset,
)

logger = logging.getLogger(__name__)


def _stripes(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    columns = (np.arange(spec.width) * spec.k) // spec.width
    return np.broadcast_to(columns, (spec.height, spec.width)).copy()


def _blobs(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Класс 0 это фон, классы 1..K−1 рисуются непересекающимися дисками в своих ячейках"""
    labels = np.zeros((spec.height, spec.width), dtype=np.int64)
    if spec.k == 1:
        return labels
    yy, xx = np.mgrid[0:spec.height, 0:spec.width]
    cell = spec.width / (spec.k - 1)
    radius = 0.35 * min(cell, spec.height)
    for j in range(1, spec.k):
        cx = (j - 0.5) * cell + rng.uniform(-0.1, 0.1) * cell
        cy = spec.height / 2.0 + rng.uniform(-0.1, 0.1) * spec.height
        labels[(xx - cx) ** 2 + (yy - cy) ** 2 <= radius ** 2] = j
    return labels


def _voronoi(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    seeds = rng.uniform(0.0, 1.0, size=(spec.k, 2)) * np.array([spec.width, spec.height])
    yy, xx = np.mgrid[0:spec.height, 0:spec.width]
    distances = (xx[..., np.newaxis] - seeds[:, 0]) ** 2 + (yy[..., np.newaxis] - seeds[:, 1]) ** 2
    return np.argmin(distances, axis=2)


def _outlier_positions(spec: SyntheticSpec, labels: np.ndarray, count: int,
                       rng: np.random.Generator) -> np.ndarray:
    if not spec.outlier_blob:
        return rng.choice(labels.size, size=count, replace=False)
    candidates = np.flatnonzero(labels.ravel() == 0)
    if candidates.size < count:
        raise InvalidInputError(f"class 0 has {candidates.size} pixels, cannot hold a blob of {count}")
    center = rng.choice(candidates)
    rows, cols = np.divmod(candidates, spec.width)
    cy, cx = divmod(int(center), spec.width)
    distances = (rows - cy) ** 2 + (cols - cx) ** 2
    return candidates[np.argsort(distances, kind="stable")[:count]]


_LAYOUTS = {
    Layout.STRIPES: _stripes,
    Layout.BLOB: _blobs,
    Layout.VORONOI: _voronoi,
}


def generate_synthetic(spec: SyntheticSpec, seed: int) -> Tuple[ImageTensor, SegmentationMask]:
    """Генерирует изображение с известной разметкой.

    Каждый пиксель получает класс по схеме областей, цвет берётся из гауссианы
    класса и обрезается до [0,1]. Доля outlier_fraction пикселей перерисовывается
    из распределения выбросов, разметка при этом не меняется.
    """
    rng = np.random.default_rng(seed)
    labels = _LAYOUTS[spec.layout](spec, rng)
    means = np.asarray(spec.class_means)[labels]
    stds = np.asarray(spec.class_stds)[labels]
    data = means + stds * rng.standard_normal(means.shape)

    n_pixels = spec.width * spec.height
    n_outliers = int(round(spec.outlier_fraction * n_pixels))
    if n_outliers:
        flat = data.reshape(n_pixels, spec.channels)
        positions = _outlier_positions(spec, labels, n_outliers, rng)
        flat[positions] = (np.asarray(spec.outlier_mean)
                           + np.asarray(spec.outlier_std) * rng.standard_normal((n_outliers, spec.channels)))
    logger.debug(f"Generated synthetic {spec.width}x{spec.height} image ({spec.layout.value}, {n_outliers} outliers)")
    return ImageTensor(np.clip(data, 0.0, 1.0)), SegmentationMask(labels=labels, k=spec.k)


def three_class_spec(size: int = 64, std: float = 0.03) -> SyntheticSpec:
    """Три цветовых класса: фон и два диска"""
    return SyntheticSpec(
        width=size, height=size, k=3, layout=Layout.BLOB,
        class_means=((0.85, 0.25, 0.25), (0.25, 0.8, 0.3), (0.25, 0.3, 0.85)),
        class_stds=((std,) * 3,) * 3,
    )


def evenly_spaced_spec(k: int, width: int = 64, height: int = 64, layout: Layout = Layout.BLOB,
                       std: float = 0.03) -> SyntheticSpec:
    """K классов с яркостями, равномерно разнесёнными по [0.15, 0.85], и лёгким цветовым сдвигом"""
    levels = np.linspace(0.15, 0.85, k)
    tint = np.array([0.05, -0.05, 0.0])
    means = np.clip(levels[:, np.newaxis] + tint * np.cos(np.arange(k))[:, np.newaxis], 0.0, 1.0)
    return SyntheticSpec(
        width=width, height=height, k=k, layout=layout,
        class_means=tuple(map(tuple, means)),
        class_stds=((std,) * 3,) * k,
    )


def synthetic_instances(mask: SegmentationMask) -> InstanceMask:
    """Экземпляры разметки: связные области (4-связность) всех классов, кроме фона 0"""
    return InstanceMask(connected_components(mask.labels > 0, connectivity=1))


def outlier_two_class_spec(size: int = 32, outlier_fraction: float = 0.02) -> SyntheticSpec:
    """Два класса плюс яркие выбросы: три моды интенсивности при двух семантических классах"""
    return SyntheticSpec(
        width=size, height=size, k=2, layout=Layout.STRIPES,
        class_means=((0.3, 0.2, 0.4), (0.7, 0.55, 0.75)),
        class_stds=((0.06, 0.06, 0.06), (0.06, 0.06, 0.06)),
        outlier_fraction=outlier_fraction,
        outlier_mean=(0.98, 0.95, 0.98),
        outlier_std=(0.01, 0.01, 0.01),
    )


def synthetic_dataset(spec: SyntheticSpec, n_images: int, seed: int, prefix: str = "synthetic") -> SegmentationDataset:
    """Набор из n_images изображений с seed, seed+1, ...; для K=2 добавляется разметка экземпляров"""
    samples = []
    for index in range(n_images):
        image, mask = generate_synthetic(spec, seed + index)
        instances = synthetic_instances(mask) if spec.k == 2 else None
        samples.append(LabeledImage(name=f"{prefix}_{index:03d}", image=image, mask=mask, instances=instances))
    return SegmentationDataset(samples)


def outlier_blob_spec(size: int = 32, outlier_fraction: float = 0.02) -> SyntheticSpec:
    """Два класса и яркое компактное пятно выбросов в тёмном классе (разметка пятна: класс 0)"""
    return replace(outlier_two_class_spec(size, outlier_fraction), outlier_blob=True)


def low_contrast_spec(size: int = 32, contrast: float = 0.16, std: float = 0.02) -> SyntheticSpec:
    """Две полосы серого с близкими яркостями 0.5 ± contrast/2"""
    return SyntheticSpec(
        width=size, height=size, k=2, layout=Layout.STRIPES,
        class_means=((0.5 - contrast / 2,) * 3, (0.5 + contrast / 2,) * 3),
        class_stds=((std,) * 3,) * 2,
    )
