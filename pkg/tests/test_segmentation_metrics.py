from itertools import permutations

import numpy as np
import pytest

from conftest import mask_from
from src.metrics.segmentation_metrics import (
    contingency_matrix, align_labels, apply_alignment, align_to, dice_precision_recall,
    aligned_dice, aji, instances_from_semantic, score_segmentation, mean_scores,
)
from src.models.segmentation_model import SegmentationMask, InstanceMask
from src.models.errors import MetricError, InvalidInputError


def _brute_force_alignment(pred: SegmentationMask, gt: SegmentationMask):
    table = contingency_matrix(pred, gt)
    best, best_perm = -1, None
    for perm in permutations(range(gt.k)):
        total = sum(table[p, perm[p]] for p in range(pred.k))
        if total > best:
            best, best_perm = total, perm
    return best, best_perm


def test_identity_and_swap_alignment():
    gt = mask_from([[0, 0, 1], [1, 2, 2]])
    np.testing.assert_array_equal(align_labels(gt, gt), [0, 1, 2])
    swapped = mask_from([[1, 1, 0], [0, 2, 2]])
    np.testing.assert_array_equal(align_labels(swapped, gt), [1, 0, 2])


def test_alignment_matches_brute_force(rng):
    for _ in range(60):
        k = int(rng.integers(2, 6))
        gt = SegmentationMask(rng.integers(0, k, size=(8, 8)), k)
        pred = SegmentationMask(rng.integers(0, k, size=(8, 8)), k)
        best, best_perm = _brute_force_alignment(pred, gt)
        mapping = align_labels(pred, gt)
        table = contingency_matrix(pred, gt)
        assert sum(table[p, mapping[p]] for p in range(k)) == best
        # первая в лексикографическом порядке оптимальная перестановка
        assert tuple(mapping) == best_perm


def test_tie_breaks_to_lowest_lexicographic_permutation():
    gt = mask_from([[0, 0]], k=2)
    pred = mask_from([[0, 1]], k=2)
    # обе перестановки дают пересечение 1
    np.testing.assert_array_equal(align_labels(pred, gt), [0, 1])
    np.testing.assert_array_equal(align_labels(mask_from([[1, 0]], k=2), gt), [0, 1])


def test_surplus_prediction_class_maps_to_minus_one():
    gt = mask_from([[0, 0, 1, 1]], k=2)
    pred = mask_from([[0, 2, 1, 1]], k=3)
    mapping = align_labels(pred, gt)
    assert sorted(mapping.tolist()) == [-1, 0, 1]
    assert mapping[2] == -1
    aligned = apply_alignment(pred, mapping, gt.k)
    assert aligned.k == 3
    np.testing.assert_array_equal(aligned.labels, [[0, 2, 1, 1]])


def test_dice_examples():
    gt = mask_from([[1, 1], [0, 0]])
    assert dice_precision_recall(gt, gt, 1) == (1.0, 1.0, 1.0)
    disjoint = mask_from([[0, 0], [1, 1]])
    assert dice_precision_recall(disjoint, gt, 1) == (0.0, 0.0, 0.0)

    labels_gt = np.zeros(200, dtype=int)
    labels_pred = np.zeros(200, dtype=int)
    labels_gt[:75] = 1
    labels_pred[:50] = 1
    labels_pred[75:100] = 1
    p, r, d = dice_precision_recall(mask_from(labels_pred.reshape(10, 20), 2),
                                    mask_from(labels_gt.reshape(10, 20), 2), 1)
    assert (p, r, d) == pytest.approx((2 / 3, 2 / 3, 2 / 3), abs=1e-12)


def test_dice_empty_class_conventions():
    zeros = mask_from(np.zeros((2, 2), dtype=int), 2)
    assert dice_precision_recall(zeros, zeros, 1) == (1.0, 1.0, 1.0)
    ones = mask_from(np.ones((2, 2), dtype=int), 2)
    assert dice_precision_recall(zeros, ones, 1) == (0.0, 0.0, 0.0)


def test_dice_oracle_and_harmonic_mean(rng):
    for _ in range(100):
        gt = SegmentationMask(rng.integers(0, 2, size=(16, 16)), 2)
        pred = SegmentationMask(rng.integers(0, 2, size=(16, 16)), 2)
        pred_set = {tuple(ix) for ix in np.argwhere(pred.labels == 1)}
        gt_set = {tuple(ix) for ix in np.argwhere(gt.labels == 1)}
        tp = len(pred_set & gt_set)
        p, r, d = dice_precision_recall(pred, gt, 1)
        assert p == pytest.approx(tp / len(pred_set), abs=1e-9)
        assert r == pytest.approx(tp / len(gt_set), abs=1e-9)
        assert d == pytest.approx(2 * tp / (len(pred_set) + len(gt_set)), abs=1e-9)
        assert d == pytest.approx(2 * p * r / (p + r), abs=1e-12)
        assert d == dice_precision_recall(gt, pred, 1)[2]


def _aji_oracle(gt_ids, pred_ids, epsilon):
    gt_sets = {g: {tuple(ix) for ix in np.argwhere(gt_ids == g)} for g in np.unique(gt_ids) if g}
    pred_sets = {p: {tuple(ix) for ix in np.argwhere(pred_ids == p)} for p in np.unique(pred_ids) if p}
    pairs = sorted(((len(gs & ps), g, p) for g, gs in gt_sets.items() for p, ps in pred_sets.items()
                    if gs & ps), key=lambda t: (-t[0], t[1], t[2]))
    match, used = {}, set()
    for _, g, p in pairs:
        if g not in match and p not in used:
            match[g] = p
            used.add(p)
    inter_total, union_total, ratios = 0, 0, []
    for g, gs in gt_sets.items():
        ps = pred_sets[match[g]] if g in match else set()
        inter, union = len(gs & ps), len(gs | ps)
        inter_total += inter
        union_total += union
        ratios.append(inter / (union + epsilon))
    union_total += sum(len(ps) for p, ps in pred_sets.items() if p not in used)
    return inter_total / union_total, float(np.mean(ratios))


def test_aji_perfect_and_half_cover():
    gt = np.zeros((10, 20), dtype=int)
    gt[:, :10] = 1
    standard, paper = aji(InstanceMask(gt), InstanceMask(gt * 7))
    assert standard == 1.0
    assert paper == pytest.approx(1.0, abs=1e-7)

    pred = np.zeros_like(gt)
    pred[:5, :10] = 1
    standard, paper = aji(InstanceMask(gt), InstanceMask(pred))
    assert standard == pytest.approx(0.5)
    assert paper == pytest.approx(0.5, abs=1e-7)


def test_aji_matches_set_oracle(rng):
    for _ in range(100):
        gt = rng.integers(0, 5, size=(16, 16))
        pred = rng.integers(0, 6, size=(16, 16))
        if not gt.any():
            continue
        expected = _aji_oracle(gt, pred, 1e-6)
        result = aji(InstanceMask(gt), InstanceMask(pred))
        assert result == pytest.approx(expected, abs=1e-9)
        assert 0.0 <= result[0] <= 1.0


def test_aji_penalises_unmatched_predictions():
    gt = np.zeros((4, 4), dtype=int)
    gt[:2, :2] = 1
    pred = gt.copy()
    pred[3, 3] = 2
    standard, _ = aji(InstanceMask(gt), InstanceMask(pred))
    assert standard == pytest.approx(4 / 5)


def test_aji_without_ground_truth_instances():
    with pytest.raises(MetricError):
        aji(InstanceMask(np.zeros((3, 3), dtype=int)), InstanceMask(np.ones((3, 3), dtype=int)))


def test_instances_from_semantic_uses_four_connectivity():
    mask = mask_from([[1, 0, 1], [0, 1, 0], [1, 0, 0]], k=2)
    instances = instances_from_semantic(mask)
    assert instances.n_instances == 4


def test_score_segmentation_is_label_invariant():
    gt = mask_from([[0, 0, 1, 1], [0, 0, 1, 1]], k=2)
    pred = mask_from([[1, 1, 0, 0], [1, 1, 0, 0]], k=2)
    gt_instances = InstanceMask(gt.labels)
    scores = score_segmentation(pred, gt, gt_instances)
    assert scores.dice == 1.0 and scores.precision == 1.0 and scores.recall == 1.0
    assert scores.nmi == pytest.approx(1.0)
    assert scores.mi == pytest.approx(np.log(2))
    assert scores.aji_standard == 1.0


def test_aligned_dice_three_classes():
    gt = mask_from([[0, 1, 2, 2]], k=3)
    pred = mask_from([[2, 0, 1, 1]], k=3)
    assert aligned_dice(pred, gt) == 1.0
    np.testing.assert_array_equal(align_to(pred, gt).labels, gt.labels)


def test_mean_scores_skips_missing_aji():
    gt = mask_from([[0, 1]], k=2)
    first = score_segmentation(gt, gt, InstanceMask(gt.labels))
    second = score_segmentation(gt, gt)
    combined = mean_scores([first, second])
    assert combined.dice == 1.0
    assert combined.aji_standard == 1.0


def test_shape_mismatch_rejected():
    with pytest.raises(InvalidInputError):
        align_labels(mask_from([[0, 1]]), mask_from([[0], [1]]))
