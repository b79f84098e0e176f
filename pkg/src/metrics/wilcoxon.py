import logging

import numpy as np
from scipy.stats import rankdata, norm

from src.models.evaluation_model import WilcoxonResult
from src.models.errors import InvalidInputError

logger = logging.getLogger(__name__)

EXACT_MAX_N = 20


def _exact_distribution(doubled_ranks: np.ndarray) -> np.ndarray:
    """Число знаковых комбинаций для каждой суммы удвоенных рангов (2W)"""
    counts = np.zeros(int(doubled_ranks.sum()) + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:-r]
        counts = counts + shifted
    return counts


def _exact_p_value(ranks: np.ndarray, statistic: float) -> float:
    doubled = np.rint(2 * ranks).astype(np.int64)
    counts = _exact_distribution(doubled)
    total = float(2 ** len(ranks))
    w2 = int(round(2 * statistic))
    lower = counts[:w2 + 1].sum() / total
    upper = counts[w2:].sum() / total
    return min(1.0, 2.0 * min(lower, upper))


def _normal_p_value(ranks: np.ndarray, statistic: float) -> float:
    n = len(ranks)
    mean = n * (n + 1) / 4.0
    _, tie_sizes = np.unique(ranks, return_counts=True)
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_sizes ** 3 - tie_sizes) / 48.0
    diff = statistic - mean
    if abs(diff) < 0.5 or variance <= 0:
        return 1.0
    z = (abs(diff) - 0.5) / np.sqrt(variance)
    return float(min(1.0, 2.0 * norm.sf(z)))


def wilcoxon_signed_rank(a, b, exact_max_n: int = EXACT_MAX_N) -> WilcoxonResult:
    """Двусторонний знаковый ранговый критерий Уилкоксона для парных выборок.

    Нулевые разности отбрасываются, совпадающие |d| получают средний ранг,
    W равна сумме рангов положительных разностей. При n ≤ exact_max_n p-значение
    точное (полный перебор 2^n знаков через свёртку распределения), иначе
    нормальное приближение с поправками на связки и непрерывность.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape or a.size == 0:
        raise InvalidInputError(f"Wilcoxon needs paired samples of equal length ≥ 1, got {a.size} and {b.size}")

    differences = a - b
    differences = differences[differences != 0]
    n = differences.size
    if n == 0:
        logger.warning("All paired differences are zero, Wilcoxon test is degenerate")
        return WilcoxonResult(statistic=0.0, p_two_sided=1.0, n_effective=0,
                              method=WilcoxonResult.EXACT, degenerate=True)

    ranks = rankdata(np.abs(differences), method='average')
    statistic = float(ranks[differences > 0].sum())
    if n <= exact_max_n:
        return WilcoxonResult(statistic, _exact_p_value(ranks, statistic), n, WilcoxonResult.EXACT)
    return WilcoxonResult(statistic, _normal_p_value(ranks, statistic), n, WilcoxonResult.NORMAL)
