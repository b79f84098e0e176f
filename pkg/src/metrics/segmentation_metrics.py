from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from skimage.measure import label as connected_components

from src.metrics.information import mutual_information, nmi
from src.models.segmentation_model import SegmentationMask, InstanceMask
from src.models.evaluation_model import ScoreSet
from src.models.errors import InvalidInputError, MetricError

UNMATCHED = -1
# до такого размера ничьи в назначении разрешаются лексикографически точно
_EXACT_TIE_BREAK_MAX_K = 8
FOREGROUND_CLASS = 1


def _check_same_shape(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise InvalidInputError(f"masks have different shapes: {a.shape} vs {b.shape}")


def contingency_matrix(pred: SegmentationMask, gt: SegmentationMask) -> np.ndarray:
    """Таблица сопряжённости: строки по классам предсказания, столбцы по классам разметки"""
    _check_same_shape(pred.labels, gt.labels)
    codes = pred.labels.ravel() * gt.k + gt.labels.ravel()
    return np.bincount(codes, minlength=pred.k * gt.k).reshape(pred.k, gt.k)


def align_labels(pred: SegmentationMask, gt: SegmentationMask) -> np.ndarray:
    """Сопоставление классов предсказания классам разметки с максимальным суммарным пересечением.

    Возвращает массив длины pred.k: mapping[p] равен классу разметки или −1, если
    классу предсказания пары не нашлось (лишний класс). Среди оптимальных
    назначений выбирается лексикографически наименьшее.
    """
    table = contingency_matrix(pred, gt).astype(np.float64)
    size = max(pred.k, gt.k)
    padded = np.zeros((size, size))
    padded[:pred.k, :gt.k] = table

    if size <= _EXACT_TIE_BREAK_MAX_K:
        base = float(size) ** size
        rows = np.arange(size)[:, np.newaxis]
        cols = np.arange(size)[np.newaxis, :]
        bonus = (size - 1 - cols) * np.power(float(size), size - 1 - rows)
        padded = padded * base + bonus

    row_ind, col_ind = linear_sum_assignment(padded, maximize=True)
    mapping = np.full(pred.k, UNMATCHED, dtype=np.int64)
    for p, g in zip(row_ind, col_ind):
        if p < pred.k and g < gt.k:
            mapping[p] = g
    return mapping


def apply_alignment(pred: SegmentationMask, mapping: np.ndarray, gt_k: int) -> SegmentationMask:
    """Перекрашивает предсказание; несопоставленные классы уходят в служебный класс gt_k"""
    lookup = np.where(mapping == UNMATCHED, gt_k, mapping)
    k = gt_k + 1 if np.any(mapping == UNMATCHED) else gt_k
    return SegmentationMask(labels=lookup[pred.labels], k=k)


def align_to(pred: SegmentationMask, gt: SegmentationMask) -> SegmentationMask:
    return apply_alignment(pred, align_labels(pred, gt), gt.k)


def dice_precision_recall(pred: SegmentationMask, gt: SegmentationMask, class_id: int) -> Tuple[float, float, float]:
    """Попиксельные precision, recall и Dice для одного класса (маски уже выровнены)"""
    _check_same_shape(pred.labels, gt.labels)
    predicted = pred.labels == class_id
    actual = gt.labels == class_id
    tp = int(np.count_nonzero(predicted & actual))
    fp = int(np.count_nonzero(predicted & ~actual))
    fn = int(np.count_nonzero(~predicted & actual))
    both_empty = 1.0 if (tp + fp == 0 and tp + fn == 0) else 0.0

    precision = tp / (tp + fp) if tp + fp else both_empty
    recall = tp / (tp + fn) if tp + fn else both_empty
    dice = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else both_empty
    return precision, recall, dice


def evaluated_classes(gt: SegmentationMask) -> List[int]:
    """Для бинарной задачи оценивается класс переднего плана, иначе все классы"""
    return [FOREGROUND_CLASS] if gt.k == 2 else list(range(gt.k))


def segmentation_dice(aligned: SegmentationMask, gt: SegmentationMask) -> Tuple[float, float, float]:
    """Усреднённые по оцениваемым классам (precision, recall, Dice)"""
    values = np.array([dice_precision_recall(aligned, gt, c) for c in evaluated_classes(gt)])
    precision, recall, dice = values.mean(axis=0)
    return float(precision), float(recall), float(dice)


def aligned_dice(pred: SegmentationMask, gt: SegmentationMask) -> float:
    """Dice после выравнивания меток"""
    return segmentation_dice(align_to(pred, gt), gt)[2]


def instances_from_semantic(mask: SegmentationMask, foreground_class: int = FOREGROUND_CLASS) -> InstanceMask:
    """Связные компоненты (4-связность) класса переднего плана как экземпляры"""
    return InstanceMask(connected_components(mask.labels == foreground_class, connectivity=1))


def aji(gt: InstanceMask, pred: InstanceMask, epsilon: float = 1e-6) -> Tuple[float, float]:
    """Aggregated Jaccard Index: (стандартный вариант, усреднённая поэкземплярная формула).

    Каждому экземпляру разметки сопоставляется экземпляр предсказания с
    наибольшим пересечением; экземпляр предсказания используется не более
    одного раза (жадно по убыванию пересечения, при равенстве берутся меньшие id).
    """
    _check_same_shape(gt.ids, pred.ids)
    gt_ids = gt.canonical().ids
    pred_ids = pred.canonical().ids
    n_gt = int(gt_ids.max())
    n_pred = int(pred_ids.max())
    if n_gt == 0:
        raise MetricError("ground truth contains no instances")

    joint = np.bincount(gt_ids.ravel() * (n_pred + 1) + pred_ids.ravel(),
                        minlength=(n_gt + 1) * (n_pred + 1)).reshape(n_gt + 1, n_pred + 1)
    gt_area = joint.sum(axis=1)[1:]
    pred_area = joint.sum(axis=0)[1:]
    overlap = joint[1:, 1:]

    g_idx, p_idx = np.nonzero(overlap)
    values = overlap[g_idx, p_idx]
    order = np.lexsort((p_idx, g_idx, -values))
    match = np.full(n_gt, UNMATCHED, dtype=np.int64)
    used = np.zeros(n_pred, dtype=bool)
    for index in order:
        g, p = g_idx[index], p_idx[index]
        if match[g] == UNMATCHED and not used[p]:
            match[g] = p
            used[p] = True

    intersections = np.zeros(n_gt)
    unions = gt_area.astype(np.float64)
    matched = match != UNMATCHED
    intersections[matched] = overlap[np.nonzero(matched)[0], match[matched]]
    unions[matched] = gt_area[matched] + pred_area[match[matched]] - intersections[matched]

    aji_standard = intersections.sum() / (unions.sum() + pred_area[~used].sum())
    aji_paper = float(np.mean(intersections / (unions + epsilon)))
    return float(aji_standard), aji_paper


def score_segmentation(pred: SegmentationMask, gt: SegmentationMask,
                       gt_instances: Optional[InstanceMask] = None,
                       pred_instances: Optional[InstanceMask] = None,
                       epsilon: float = 1e-6) -> ScoreSet:
    """Полный набор метрик для одного предсказания"""
    aligned = align_to(pred, gt)
    precision, recall, dice = segmentation_dice(aligned, gt)
    scores = ScoreSet(
        precision=precision,
        recall=recall,
        dice=dice,
        nmi=nmi(gt.labels.ravel(), pred.labels.ravel()),
        mi=mutual_information(gt.labels.ravel(), pred.labels.ravel()),
    )
    if gt_instances is not None and gt_instances.n_instances > 0:
        if pred_instances is None:
            pred_instances = instances_from_semantic(aligned)
        scores.aji_standard, scores.aji_paper = aji(gt_instances, pred_instances, epsilon)
    return scores


def mean_scores(scores: List[ScoreSet]) -> ScoreSet:
    """Среднее метрик по изображениям"""
    def _mean(values):
        present = [v for v in values if v is not None]
        return float(np.mean(present)) if present else None

    return ScoreSet(
        precision=_mean([s.precision for s in scores]),
        recall=_mean([s.recall for s in scores]),
        dice=_mean([s.dice for s in scores]),
        nmi=_mean([s.nmi for s in scores]),
        mi=_mean([s.mi for s in scores]),
        aji_standard=_mean([s.aji_standard for s in scores]),
        aji_paper=_mean([s.aji_paper for s in scores]),
    )
