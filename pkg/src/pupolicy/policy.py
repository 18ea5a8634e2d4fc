"""Label-assignment policy: action sampling, coherence rewards and REINFORCE."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln, digamma

from .errors import ConfigError, NonFiniteError
from .nn import MLP, PROB_EPS, Adam, clip_prob

MIN_SHAPE = 1e-3

SEPARATOR = "separator"
WEIGHTER = "weighter"


def bernoulli_log_prob(a, p):
    p = clip_prob(np.asarray(p, dtype=np.float64))
    a = np.asarray(a, dtype=np.float64)
    return a * np.log(p) + (1.0 - a) * np.log1p(-p)


def bernoulli_score(a, p):
    """d log Bernoulli(a; p) / dp."""
    p = clip_prob(np.asarray(p, dtype=np.float64))
    a = np.asarray(a, dtype=np.float64)
    return a / p - (1.0 - a) / (1.0 - p)


def beta_shapes(p, concentration):
    p = np.asarray(p, dtype=np.float64)
    a = np.maximum(concentration * p, MIN_SHAPE)
    b = np.maximum(concentration * (1.0 - p), MIN_SHAPE)
    return a, b


def beta_log_prob(w, p, concentration):
    """Log-density of Beta(nu*p, nu*(1-p)) at ``w``."""
    a, b = beta_shapes(p, concentration)
    w = np.asarray(w, dtype=np.float64)
    return (a - 1.0) * np.log(w) + (b - 1.0) * np.log1p(-w) - betaln(a, b)


def beta_score(w, p, concentration):
    """d log Beta(w; nu*p, nu*(1-p)) / dp (zero where a shape is clamped)."""
    p = np.asarray(p, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    a, b = beta_shapes(p, concentration)
    free_a = concentration * p > MIN_SHAPE
    free_b = concentration * (1.0 - p) > MIN_SHAPE
    dlog_da = np.log(w) - digamma(a) + digamma(a + b)
    dlog_db = np.log1p(-w) - digamma(b) + digamma(a + b)
    return concentration * (dlog_da * free_a - dlog_db * free_b)


def act_separator(p, rng):
    """Sample hard assignments ``a ~ Bernoulli(p)``; returns (a, log_prob)."""
    p = clip_prob(np.asarray(p, dtype=np.float64))
    a = (rng.random(p.shape) < p).astype(np.float64)
    return a, bernoulli_log_prob(a, p)


def act_weighter(p, concentration, rng):
    """Sample soft labels ``w ~ Beta(nu*p, nu*(1-p))``; returns (w, log_prob)."""
    if concentration <= 0:
        raise ConfigError("Beta concentration must be positive")
    p = clip_prob(np.asarray(p, dtype=np.float64))
    a, b = beta_shapes(p, concentration)
    w = clip_prob(rng.beta(a, b))
    return w, beta_log_prob(w, p, concentration)


def deterministic_action(p, kind):
    p = np.asarray(p, dtype=np.float64)
    if kind == SEPARATOR:
        return (p >= 0.5).astype(np.float64)
    return p


@dataclass
class ThresholdState:
    threshold: float = 0.5
    thresh_min: float = float("nan")
    last_valid: float = 0.5


def compute_threshold(yhat_p, yhat_u, state):
    """Mean prediction over labeled examples and the unlabeled ones scoring at least min(yhat_p).

    A batch without labeled examples keeps the previous threshold.
    """
    yp = np.asarray(yhat_p, dtype=np.float64).reshape(-1)
    yu = np.asarray(yhat_u, dtype=np.float64).reshape(-1)
    if len(yp) == 0:
        return ThresholdState(state.threshold, state.thresh_min, state.last_valid)
    tmin = float(yp.min())
    selected = yu[yu >= tmin]
    values = np.concatenate([yp, selected])
    value = math.fsum(values) / len(values)
    return ThresholdState(value, tmin, value)


def compute_rewards(yhat, labeled, threshold):
    """Coherence reward: yhat for labeled rows, and for unlabeled rows
    yhat if yhat >= threshold else 1 - yhat."""
    y = np.asarray(yhat, dtype=np.float64)
    lab = np.asarray(labeled, dtype=bool)
    return np.where(lab | (y >= threshold), y, 1.0 - y)


@dataclass
class ActionRecord:
    """Actions sampled for one mini-batch (arrays aligned with ``indices``)."""

    indices: np.ndarray
    labeled: np.ndarray
    actions: np.ndarray
    log_prob: np.ndarray
    rewards: np.ndarray | None = None


def policy_score(kind, actions, p, concentration):
    if kind == SEPARATOR:
        return bernoulli_score(actions, p)
    return beta_score(actions, p, concentration)


def reinforce_gradients(policy, x, actions, rewards, kind, concentration=10.0):
    """Gradient of ``-(1/m) sum_i R_i log pi(a_i | x_i)`` w.r.t. the live policy parameters."""
    p, cache = policy.forward(x)
    rewards = np.asarray(rewards, dtype=np.float64)
    score = policy_score(kind, actions, p, concentration)
    grad_out = -(rewards * score) / len(p)
    return policy.backward(cache, grad_out)


def reinforce_update(policy, optimizer, x, actions, rewards, kind, concentration=10.0):
    """One ascent step on the REINFORCE objective, taken by Adam on its negation."""
    grads = reinforce_gradients(policy, x, actions, rewards, kind, concentration)
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite policy gradient")
    optimizer.step(policy, grads)
    return policy


@dataclass
class PolicyPair:
    """Live policy that learns and a periodically refreshed target that acts."""

    live: MLP
    target: MLP = None
    sync_period: int = 3
    optimizer: Adam = field(default_factory=Adam)

    def __post_init__(self):
        if self.sync_period < 1:
            raise ConfigError("sync period k must be >= 1")
        if self.target is None:
            self.target = self.live.copy()


def sync_target(pair, epoch):
    """Copy the live policy into the target when ``epoch`` is a multiple of k."""
    if epoch < 1:
        raise ConfigError("epochs are numbered from 1")
    if epoch % pair.sync_period == 0:
        pair.target = pair.live.copy()
        return True
    return False


__all__ = [
    "PROB_EPS",
    "ActionRecord",
    "PolicyPair",
    "ThresholdState",
    "act_separator",
    "act_weighter",
    "beta_log_prob",
    "bernoulli_log_prob",
    "compute_rewards",
    "compute_threshold",
    "deterministic_action",
    "reinforce_update",
    "sync_target",
]
