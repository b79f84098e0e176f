import numpy as np
import pytest

from src.pipeline.dataset_io import (
    DatasetLoader, load_dataset, save_dataset, read_mask, write_mask, read_instances, write_instances,
    palette_overlay, error_overlay, PALETTE, TP_COLOR, FN_COLOR,
)
from src.pipeline.synthetic import synthetic_dataset, outlier_two_class_spec
from src.models.segmentation_model import ImageTensor, InstanceMask, SegmentationMask
from src.models.errors import InvalidInputError


def test_saved_dataset_loads_back(tmp_path):
    dataset = synthetic_dataset(outlier_two_class_spec(16), n_images=2, seed=0)
    written = save_dataset(dataset, tmp_path)
    assert len(written) == 6
    loaded = load_dataset(tmp_path)
    assert [s.name for s in loaded.samples] == ["synthetic_000", "synthetic_001"]
    for original, restored in zip(dataset.samples, loaded.samples):
        np.testing.assert_array_equal(restored.mask.labels, original.mask.labels)
        assert restored.mask.k == 2
        assert restored.instances.n_instances == original.instances.n_instances
        assert restored.image.data.min() == 0.0 and restored.image.data.max() == 1.0


def test_scan_groups_files_by_name(tmp_path):
    dataset = synthetic_dataset(outlier_two_class_spec(8), n_images=1, seed=0)
    save_dataset(dataset, tmp_path)
    entries = DatasetLoader(tmp_path).scan()
    assert set(entries["synthetic_000"]) == {"image", "mask", "instances"}


def test_mask_k_from_content_and_explicit(tmp_path):
    path = write_mask(tmp_path / "m.png", SegmentationMask(np.array([[0, 2], [1, 1]]), 3))
    assert read_mask(path).k == 3
    assert read_mask(path, k=5).k == 5
    flat = write_mask(tmp_path / "zeros.png", SegmentationMask(np.zeros((2, 2), dtype=int), 2))
    assert read_mask(flat).k == 2


def test_instances_are_written_canonically(tmp_path):
    path = write_instances(tmp_path / "i.png", InstanceMask(np.array([[0, 7], [300, 7]])))
    np.testing.assert_array_equal(read_instances(path).ids, [[0, 1], [2, 1]])


def test_missing_inputs(tmp_path):
    with pytest.raises(InvalidInputError):
        read_mask(tmp_path / "absent.png")
    with pytest.raises(InvalidInputError):
        load_dataset(tmp_path / "nowhere")
    with pytest.raises(InvalidInputError):
        load_dataset(tmp_path)


def test_overlays_blend_palette_and_errors():
    img = ImageTensor(np.zeros((1, 4, 3)))
    mask = SegmentationMask(np.array([[0, 1, 2, 3]]), 4)
    overlay = palette_overlay(img, mask, alpha=1.0)
    np.testing.assert_array_equal(overlay[0], PALETTE[:4])

    gt = SegmentationMask(np.array([[1, 1, 0, 0]]), 2)
    pred = SegmentationMask(np.array([[1, 0, 1, 0]]), 2)
    errors = error_overlay(img, pred, gt, alpha=1.0)
    np.testing.assert_array_equal(errors[0, 0], TP_COLOR)
    np.testing.assert_array_equal(errors[0, 1], FN_COLOR)
    np.testing.assert_array_equal(errors[0, 3], [0, 0, 0])
