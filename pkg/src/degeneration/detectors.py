from dataclasses import replace
from typing import List, Sequence
import logging

import numpy as np

from src.metrics.segmentation_metrics import aligned_dice
from src.models.segmentation_model import SegmentationMask, SegmentationDataset, RunConfig
from src.models.evaluation_model import DegenerationReport
from src.models.errors import InvalidInputError

logger = logging.getLogger(__name__)

COLLAPSE_THRESHOLD = 0.97
EMPTY_CLASS_RATIO = 0.01
INSTABILITY_THRESHOLD = 0.08
REDUNDANT_GAIN_THRESHOLD = 0.01


def detect_collapse(mask: SegmentationMask, threshold: float = COLLAPSE_THRESHOLD) -> bool:
    """Один класс занимает не меньше threshold пикселей"""
    return bool(mask.class_ratios().max() >= threshold)


def detect_empty_classes(mask: SegmentationMask, k: int, ratio: float = EMPTY_CLASS_RATIO) -> List[int]:
    """Классы с долей пикселей строго меньше ratio (отсутствующие имеют долю 0)"""
    if k < 2:
        raise InvalidInputError(f"empty-class detection needs k ≥ 2, got {k}")
    counts = np.bincount(mask.labels.ravel(), minlength=k)[:k]
    return [int(c) for c in np.nonzero(counts / mask.labels.size < ratio)[0]]


def assess_instability(per_run_mean_dice: Sequence[float], threshold: float = INSTABILITY_THRESHOLD) -> bool:
    """Нестабильность: стандартное отклонение (генеральное) средних Dice больше threshold"""
    values = np.asarray(per_run_mean_dice, dtype=np.float64)
    if values.size < 2:
        raise InvalidInputError(f"instability needs at least 2 runs, got {values.size}")
    return bool(np.std(values) > threshold)


def redundant_gain(dice_k: Sequence[float], dice_k_plus_one: Sequence[float]) -> float:
    """Прирост среднего Dice при добавлении лишнего класса"""
    return float(np.mean(dice_k_plus_one) - np.mean(dice_k))


def assess_redundant_class(dataset: SegmentationDataset, method, k: int, config: RunConfig,
                           repeats: int) -> float:
    """Парный эксперимент K=k против K=k+1 с одинаковыми seed.

    При K=k+1 лишний класс после выравнивания не совпадает ни с одним классом
    разметки и при подсчёте Dice считается удалённым.
    """
    if not dataset.has_ground_truth():
        raise InvalidInputError("redundant-class assessment needs ground-truth masks")
    if repeats < 1:
        raise InvalidInputError(f"repeats must be positive, got {repeats}")

    dice_k: List[float] = []
    dice_k1: List[float] = []
    for r in range(repeats):
        seed = config.seed + r
        for target_k, sink in ((k, dice_k), (k + 1, dice_k1)):
            outcome = method.fit(dataset.images, replace(config, k=target_k, seed=seed))
            sink.append(float(np.mean([
                aligned_dice(mask, sample.mask) for mask, sample in zip(outcome.masks, dataset.samples)
            ])))
        logger.debug(f"Redundant-class repeat {r} ({method.name}): K={k} dice={dice_k[-1]:.4f}, "
                     f"K={k + 1} dice={dice_k1[-1]:.4f}")

    gain = redundant_gain(dice_k, dice_k1)
    level = logging.WARNING if gain > REDUNDANT_GAIN_THRESHOLD else logging.INFO
    logger.log(level, f"Redundant-class gain for {method.name}: {gain:+.4f}")
    return gain


def build_degeneration_report(masks: List[SegmentationMask], k: int) -> DegenerationReport:
    """Флаги вырождения прогона по всем предсказанным маскам"""
    collapsed = [detect_collapse(mask) for mask in masks]
    empty_per_image = [detect_empty_classes(mask, k) for mask in masks]
    empty = sorted(set(c for classes in empty_per_image for c in classes))
    if empty:
        logger.warning(f"Predicted classes {empty} are empty on at least one image")
    return DegenerationReport(
        collapse=any(collapsed),
        empty_classes=empty,
        collapsed_images=sum(collapsed),
        images_with_empty_classes=sum(1 for classes in empty_per_image if classes),
    )
