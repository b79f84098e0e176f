import numpy as np
import pytest

from src.metrics.information import mutual_information, nmi, label_entropy
from src.models.errors import InvalidInputError


def _from_table(table):
    """Пары меток с заданной таблицей сопряжённости"""
    a, b = [], []
    for i, row in enumerate(table):
        for j, count in enumerate(row):
            a += [i] * count
            b += [j] * count
    return np.array(a), np.array(b)


def test_identical_balanced_labels():
    labels = np.array([0, 0, 1, 1])
    assert mutual_information(labels, labels) == pytest.approx(np.log(2))
    assert nmi(labels, labels) == pytest.approx(1.0)
    assert label_entropy(labels) == pytest.approx(np.log(2))


def test_independent_labels_have_zero_information():
    a, b = _from_table([[5, 5], [5, 5]])
    assert mutual_information(a, b) == pytest.approx(0.0, abs=1e-12)
    assert nmi(a, b) == pytest.approx(0.0, abs=1e-12)


def test_reference_table():
    a, b = _from_table([[2, 1], [1, 2]])
    assert mutual_information(a, b) == pytest.approx(0.056633, abs=1e-6)
    assert nmi(a, b) == pytest.approx(0.081704, abs=1e-5)


def test_symmetry_and_relabelling_invariance(rng):
    a = rng.integers(0, 4, size=300)
    b = rng.integers(0, 3, size=300)
    assert mutual_information(a, b) == pytest.approx(mutual_information(b, a))
    assert nmi(a, b) == pytest.approx(nmi(b, a))
    permuted = np.array([2, 0, 1])[b]
    assert nmi(a, permuted) == pytest.approx(nmi(a, b))


def test_bounds(rng):
    for _ in range(20):
        a = rng.integers(0, 3, size=100)
        b = rng.integers(0, 5, size=100)
        mi = mutual_information(a, b)
        assert 0.0 <= mi <= min(label_entropy(a), label_entropy(b)) + 1e-12
        assert 0.0 <= nmi(a, b) <= 1.0 + 1e-12


def test_length_mismatch_rejected():
    with pytest.raises(InvalidInputError):
        nmi([0, 1], [0, 1, 1])
    with pytest.raises(InvalidInputError):
        mutual_information([], [])
