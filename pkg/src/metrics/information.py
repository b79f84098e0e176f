import numpy as np
from scipy.stats import entropy as scipy_entropy
from sklearn.metrics import mutual_info_score, normalized_mutual_info_score

from src.models.errors import InvalidInputError


def _as_labels(a, b):
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise InvalidInputError(f"label arrays differ in length: {a.size} vs {b.size}")
    if a.size == 0:
        raise InvalidInputError("label arrays must not be empty")
    return a, b


def mutual_information(a, b) -> float:
    """Взаимная информация эмпирического совместного распределения, в натах"""
    a, b = _as_labels(a, b)
    return float(mutual_info_score(a, b))


def nmi(gt, pred) -> float:
    """NMI = 2·I(Y;C) / (H(Y) + H(C)); две постоянные разметки дают 1"""
    gt, pred = _as_labels(gt, pred)
    return float(normalized_mutual_info_score(gt, pred, average_method='arithmetic'))


def label_entropy(labels) -> float:
    """Энтропия распределения меток, в натах"""
    _, counts = np.unique(np.asarray(labels).ravel(), return_counts=True)
    return float(scipy_entropy(counts))
