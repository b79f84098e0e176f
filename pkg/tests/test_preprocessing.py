import numpy as np
import pytest

from src.pipeline.preprocessing import minmax_normalize, augment
from src.models.segmentation_model import ImageTensor


def test_minmax_hits_both_endpoints(rng):
    img = ImageTensor(0.2 + 0.5 * rng.random((6, 7, 3)))
    normalized = minmax_normalize(img).data
    np.testing.assert_allclose(normalized.min(axis=(0, 1)), 0.0)
    np.testing.assert_allclose(normalized.max(axis=(0, 1)), 1.0)


def test_constant_channel_maps_to_zero(rng):
    data = rng.random((4, 4, 3))
    data[..., 1] = 0.4
    normalized = minmax_normalize(ImageTensor(data)).data
    assert np.all(normalized[..., 1] == 0.0)


def test_minmax_is_idempotent(rng):
    once = minmax_normalize(ImageTensor(rng.random((5, 5, 3))))
    np.testing.assert_allclose(minmax_normalize(once).data, once.data, atol=1e-12)


def test_neutral_augmentation_is_identity(rng):
    img = ImageTensor(rng.random((5, 6, 3)))
    same = augment(img, seed=1, hue_delta=0.0, saturation_factor=1.0, flip_ud=False, flip_lr=False)
    np.testing.assert_array_equal(same.data, img.data)


def test_double_flip_restores_image(rng):
    img = ImageTensor(rng.random((5, 6, 3)))
    flipped = augment(img, seed=2, hue_delta=0.0, saturation_factor=1.0, flip_ud=True, flip_lr=True)
    assert not np.array_equal(flipped.data, img.data)
    restored = augment(flipped, seed=2, hue_delta=0.0, saturation_factor=1.0, flip_ud=True, flip_lr=True)
    np.testing.assert_array_equal(restored.data, img.data)


def test_grayscale_ignores_colour_jitter(rng):
    img = ImageTensor(rng.random((4, 4, 1)))
    jittered = augment(img, seed=3, hue_delta=0.1, saturation_factor=1.4, flip_ud=False, flip_lr=False)
    np.testing.assert_array_equal(jittered.data, img.data)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_augmentation_is_deterministic_and_bounded(seed, rng):
    img = ImageTensor(rng.random((8, 8, 3)))
    a = augment(img, seed=seed)
    b = augment(img, seed=seed)
    np.testing.assert_array_equal(a.data, b.data)
    assert a.in_unit_range()
