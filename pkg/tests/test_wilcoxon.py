from itertools import product

import numpy as np
import pytest
from scipy.stats import rankdata, wilcoxon

from src.metrics.wilcoxon import wilcoxon_signed_rank
from src.models.evaluation_model import WilcoxonResult
from src.models.errors import InvalidInputError


def _enumerated_p(differences):
    """p-значение полным перебором знаков"""
    ranks = rankdata(np.abs(differences))
    observed = ranks[differences > 0].sum()
    sums = np.array([sum(r for r, s in zip(ranks, signs) if s) for signs in product((0, 1), repeat=len(ranks))])
    lower = np.mean(sums <= observed + 1e-9)
    upper = np.mean(sums >= observed - 1e-9)
    return min(1.0, 2 * min(lower, upper))


def test_all_positive_five_pairs():
    result = wilcoxon_signed_rank([2, 3, 4, 5, 6], [1, 1, 1, 1, 1])
    assert result.statistic == 15
    assert result.p_two_sided == pytest.approx(0.0625)
    assert result.method == WilcoxonResult.EXACT
    assert not result.degenerate


def test_all_zero_differences_are_degenerate():
    result = wilcoxon_signed_rank([0.5, 0.6], [0.5, 0.6])
    assert result.degenerate
    assert result.p_two_sided == 1.0
    assert result.n_effective == 0


def test_zero_differences_are_dropped():
    result = wilcoxon_signed_rank([1.0, 2.0, 3.0], [1.0, 1.0, 1.0])
    assert result.n_effective == 2


def test_exact_matches_enumeration(rng):
    for n in range(1, 13):
        for _ in range(3):
            # округление создаёт связки
            differences = np.round(rng.normal(0.2, 1.0, size=n), 1)
            differences[differences == 0] = 0.1
            result = wilcoxon_signed_rank(differences, np.zeros(n))
            assert result.p_two_sided == pytest.approx(_enumerated_p(differences), abs=1e-12)


def test_normal_approximation_close_to_exact(rng):
    differences = rng.normal(0.3, 1.0, size=12)
    exact = wilcoxon_signed_rank(differences, np.zeros(12))
    approx = wilcoxon_signed_rank(differences, np.zeros(12), exact_max_n=0)
    assert approx.method == WilcoxonResult.NORMAL
    assert approx.p_two_sided == pytest.approx(exact.p_two_sided, abs=0.02)


def test_normal_approximation_matches_scipy(rng):
    a = rng.normal(0.6, 0.1, size=30)
    b = np.round(a - rng.normal(0.05, 0.1, size=30), 2)
    ours = wilcoxon_signed_rank(a, b)
    reference = wilcoxon(a, b, correction=True, method="approx")
    assert ours.method == WilcoxonResult.NORMAL
    assert ours.p_two_sided == pytest.approx(reference.pvalue, abs=1e-9)


def test_symmetric_in_sample_order(rng):
    a, b = rng.random(15), rng.random(15)
    assert wilcoxon_signed_rank(a, b).p_two_sided == pytest.approx(wilcoxon_signed_rank(b, a).p_two_sided)


def test_length_mismatch_rejected():
    with pytest.raises(InvalidInputError):
        wilcoxon_signed_rank([1.0, 2.0], [1.0])
