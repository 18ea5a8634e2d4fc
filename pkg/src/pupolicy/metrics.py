"""Accuracy, ROC AUC, average precision and the policy assignment rate."""

import numpy as np
from scipy.stats import rankdata

from .errors import UndefinedMetricError


def _as_arrays(scores, labels):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(np.int64)
    if len(s) != len(y) or len(s) == 0:
        raise ValueError("scores and labels must be non-empty and of equal length")
    return s, y


def accuracy(scores, labels, cutoff=0.5):
    s, y = _as_arrays(scores, labels)
    return float(np.mean((s >= cutoff).astype(np.int64) == y))


def roc_auc(scores, labels):
    """Mann-Whitney estimate of P(score_pos > score_neg) with ties counted half."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC AUC needs both classes")
    ranks = rankdata(s)  # midranks for ties
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pr_auc(scores, labels):
    """Average precision over a descending-score sweep; tied scores form one step."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("PR AUC needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # last index of each tie group
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    seen = ends + 1
    precision = tp / seen
    new_tp = np.diff(np.r_[0, tp])
    return float(np.sum(precision * new_tp) / n_pos)


def assignment_rate(actions, hidden_y):
    """Fraction of unlabeled examples whose (hardened) action equals the true label."""
    a = np.asarray(actions, dtype=np.float64).reshape(-1)
    y = np.asarray(hidden_y).reshape(-1)
    if len(a) != len(y):
        raise ValueError("actions and labels differ in length")
    if len(a) == 0:
        return float("nan")
    hard = (a >= 0.5).astype(np.int64)
    return float(np.mean(hard == y))
