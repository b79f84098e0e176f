import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from src.models.segmentation_model import PixelBatch, RunConfig, SegmentationMask  # noqa: E402
from src.pipeline.synthetic import generate_synthetic, three_class_spec, outlier_two_class_spec, synthetic_dataset  # noqa: E402


def random_batch(rng: np.random.Generator, n: int = 500, d: int = 3, k: int = 3) -> PixelBatch:
    """Смесь K гауссовых облаков внутри [0,1]^D"""
    centers = rng.uniform(0.2, 0.8, size=(k, d))
    labels = rng.integers(0, k, size=n)
    return PixelBatch(np.clip(centers[labels] + 0.05 * rng.standard_normal((n, d)), 0.0, 1.0))


def mask_from(labels, k=None) -> SegmentationMask:
    labels = np.asarray(labels)
    return SegmentationMask(labels=labels, k=k if k is not None else int(labels.max()) + 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    return RunConfig(k=3, lam=0.005, epochs=50, batch_size=512, seed=0)


@pytest.fixture
def three_class_image():
    return generate_synthetic(three_class_spec(size=32), seed=3)


@pytest.fixture
def outlier_dataset():
    return synthetic_dataset(outlier_two_class_spec(size=32), n_images=1, seed=11)
