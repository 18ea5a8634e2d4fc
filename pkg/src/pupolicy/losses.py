"""Classifier objectives on predicted probabilities.

Each loss takes probabilities for the positive-side and unlabeled/negative-side
examples and returns a ``LossBreakdown`` together with the gradient of the
optimized objective w.r.t. those probabilities.

Cross-entropy losses support two normalizations: ``"per_set"`` divides each
set's sum by that set's size, ``"batch"`` divides both sums by the total
number of examples (the plain sum over the mini-batch, rescaled).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .nn import clip_prob


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    positive_term: float
    unlabeled_or_negative_term: float
    correction_active: bool = False
    empty_side: str | None = None
    # value whose gradient is returned; differs from ``total`` only under the nnPU correction
    objective: float | None = None

    def __post_init__(self):
        if self.objective is None:
            object.__setattr__(self, "objective", self.total)


@dataclass(frozen=True)
class PriorSpec:
    alpha: float
    c: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"class prior alpha must be in (0, 1), got {self.alpha}")
        if not 0.0 < self.c <= 1.0:
            raise ConfigError(f"label frequency c must be in (0, 1], got {self.c}")


def _p(x):
    return clip_prob(np.asarray(x, dtype=np.float64).reshape(-1))


NORMALIZATIONS = ("per_set", "batch")


def _denominators(n_a, n_b, normalization):
    if normalization == "per_set":
        return max(n_a, 1), max(n_b, 1)
    if normalization == "batch":
        n = max(n_a + n_b, 1)
        return n, n
    raise ConfigError(f"unknown normalization {normalization!r}")


def _pos_ce(p, denom=None):
    """Sum of -log p over ``denom`` (default: len(p)) and its gradient."""
    if len(p) == 0:
        return 0.0, np.zeros(0)
    denom = len(p) if denom is None else denom
    return float(-np.sum(np.log(p)) / denom), -1.0 / (p * denom)


def _neg_ce(p, denom=None):
    """Sum of -log(1-p) over ``denom`` (default: len(p)) and its gradient."""
    if len(p) == 0:
        return 0.0, np.zeros(0)
    denom = len(p) if denom is None else denom
    return float(-np.sum(np.log1p(-p)) / denom), 1.0 / ((1.0 - p) * denom)


def loss_weighter(yhat_p, yhat_u, w, normalization="per_set"):
    """Soft-label cross-entropy; labeled examples carry weight 1, unlabeled carry ``w``."""
    p, u = _p(yhat_p), _p(yhat_u)
    d_p, d_u = _denominators(len(p), len(u), normalization)
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if len(w) != len(u):
        raise ValueError("one weight per unlabeled example is required")
    if np.any((w < 0.0) | (w > 1.0)):
        raise ValueError("weights must lie in [0, 1]")
    pos, g_p = _pos_ce(p, d_p)
    if len(u):
        unl = float(-np.sum(w * np.log(u) + (1.0 - w) * np.log1p(-u)) / d_u)
        g_u = (-w / u + (1.0 - w) / (1.0 - u)) / d_u
    else:
        unl, g_u = 0.0, np.zeros(0)
    return LossBreakdown(pos + unl, pos, unl), g_p, g_u


def loss_separator(yhat_pos, yhat_neg, normalization="per_set"):
    """Cross-entropy with P and P' as positives and N' as negatives."""
    p, n = _p(yhat_pos), _p(yhat_neg)
    d_p, d_n = _denominators(len(p), len(n), normalization)
    pos, g_p = _pos_ce(p, d_p)
    neg, g_n = _neg_ce(n, d_n)
    empty = "positive" if len(p) == 0 else ("negative" if len(n) == 0 else None)
    return LossBreakdown(pos + neg, pos, neg, empty_side=empty), g_p, g_n


def loss_biased(yhat_p, yhat_u, normalization="per_set"):
    """Unlabeled examples treated as negatives."""
    return loss_separator(yhat_p, yhat_u, normalization)


def loss_pn(yhat_pos, yhat_neg, normalization="per_set"):
    return loss_separator(yhat_pos, yhat_neg, normalization)


def loss_nnpu(yhat_p, yhat_u, prior):
    """Non-negative PU risk with logistic log-loss.

    When the estimated negative risk drops below zero the returned gradient
    only pushes that term back up (gradient of ``-negative_surrogate``).
    """
    if not isinstance(prior, PriorSpec):
        prior = PriorSpec(float(prior))
    a = prior.alpha
    p, u = _p(yhat_p), _p(yhat_u)
    l_pos, g_pos = _pos_ce(p)
    l_pneg, g_pneg = _neg_ce(p)
    l_uneg, g_uneg = _neg_ce(u)
    positive_term = a * l_pos
    surrogate = l_uneg - a * l_pneg
    if surrogate < 0.0:
        g_p = a * g_pneg
        g_u = -g_uneg
        br = LossBreakdown(positive_term - surrogate, positive_term, -surrogate,
                           correction_active=True, objective=-surrogate)
        return br, g_p, g_u
    g_p = a * g_pos - a * g_pneg
    return LossBreakdown(positive_term + surrogate, positive_term, surrogate), g_p, g_uneg


def elkan_adjust(p_s, c):
    """Turn p(s=1|x) into p(y=1|x) by dividing by the label frequency."""
    if not 0.0 < c <= 1.0:
        raise ConfigError(f"label frequency must be in (0, 1], got {c}")
    p = np.asarray(p_s, dtype=np.float64)
    if c == 1.0:
        return p
    return np.minimum(1.0, p / c)
