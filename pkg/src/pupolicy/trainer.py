"""Joint training of the label-assignment policy and the classifier, plus baselines."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import losses, metrics
from .data import PreparedData, minibatches
from .errors import ConfigError, NonFiniteError
from .nn import MLP, Adam
from .policy import (
    SEPARATOR,
    WEIGHTER,
    PolicyPair,
    ThresholdState,
    act_separator,
    act_weighter,
    compute_rewards,
    compute_threshold,
    deterministic_action,
    reinforce_update,
    sync_target,
)

log = logging.getLogger(__name__)

POLICY_VARIANTS = (WEIGHTER, SEPARATOR)
BASELINES = ("biased", "nnpu", "pn_oracle")
VARIANTS = POLICY_VARIANTS + BASELINES

METRIC_COLUMNS = [
    "epoch", "split", "variant", "accuracy", "roc_auc", "pr_auc", "assignment_rate",
    "threshold", "mean_reward", "loss_total", "loss_pos", "loss_unl", "nn_correction_rate",
]


@dataclass
class TrainConfig:
    variant: str = WEIGHTER
    epochs: int = 50
    batch_size: int = 128
    lr: float = 1e-3
    policy_lr: float | None = None
    sync_period: int = 3
    pretrain_classifier_epochs: int = 5
    pretrain_policy_epochs: int = 5
    classifier_weight_decay: float = 0.0
    policy_weight_decay: float = 0.0
    concentration: float = 10.0
    weighter_sampled_weights: bool = True
    loss_normalization: str = "batch"
    alpha: float | None = None
    classifier_dims: tuple = (64, 32)
    policy_dims: tuple = (32,)
    seed: int = 0
    init_seed: int | None = None
    shuffle_seed: int | None = None
    action_seed: int | None = None
    eval_every: int = 1

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {', '.join(VARIANTS)}")
        for name in ("epochs", "pretrain_classifier_epochs", "pretrain_policy_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.sync_period < 1:
            raise ConfigError("sync_period must be >= 1")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.lr < 0 or (self.policy_lr is not None and self.policy_lr < 0):
            raise ConfigError("learning rates must be non-negative")
        if self.loss_normalization not in losses.NORMALIZATIONS:
            raise ConfigError(f"loss_normalization must be one of {', '.join(losses.NORMALIZATIONS)}")
        if self.concentration <= 0:
            raise ConfigError("concentration must be positive")
        if self.variant == "nnpu":
            if self.alpha is None:
                raise ConfigError("variant nnpu requires key 'alpha'")
            if not 0.0 < self.alpha < 1.0:
                raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        elif self.alpha is not None and not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        return self

    @property
    def uses_policy(self):
        return self.variant in POLICY_VARIANTS

    def seeds(self):
        """(init, shuffle, action) seeds; unset ones are derived from ``seed``."""
        derived = np.random.SeedSequence(self.seed).generate_state(3, dtype=np.uint64)
        explicit = (self.init_seed, self.shuffle_seed, self.action_seed)
        return tuple(int(e) if e is not None else int(d) for e, d in zip(explicit, derived))


@dataclass
class RunState:
    classifier: MLP
    classifier_opt: Adam
    policies: PolicyPair | None
    threshold: ThresholdState
    action_rng: np.random.Generator
    epoch: int = 0
    history: list = field(default_factory=list)
    trace: object = None  # optional callable(event_name) used by tests

    def emit(self, event):
        if self.trace is not None:
            self.trace(event)


@dataclass
class StepStats:
    loss: losses.LossBreakdown
    mean_reward: float = float("nan")


def init_state(config, input_dim):
    config.validate()
    init_seed, _, action_seed = config.seeds()
    init_rng = np.random.default_rng(init_seed)
    classifier = MLP([input_dim, *config.classifier_dims, 1], rng=init_rng)
    opt = Adam(lr=config.lr, weight_decay=config.classifier_weight_decay)
    pair = None
    if config.uses_policy:
        live = MLP([input_dim, *config.policy_dims, 1], rng=init_rng)
        policy_lr = config.lr if config.policy_lr is None else config.policy_lr
        pair = PolicyPair(live, sync_period=config.sync_period,
                          optimizer=Adam(lr=policy_lr, weight_decay=config.policy_weight_decay))
    return RunState(classifier, opt, pair, ThresholdState(), np.random.default_rng(action_seed))


def _classifier_step(state, x, pos_mask, loss_fn, *args):
    """One Adam step on a loss split into a positive side (``pos_mask``) and the rest."""
    yhat, cache = state.classifier.forward(x)
    breakdown, g_pos, g_rest = loss_fn(yhat[pos_mask], yhat[~pos_mask], *args)
    if not math.isfinite(breakdown.total):
        raise NonFiniteError("non-finite classifier loss")
    grad = np.empty_like(yhat)
    grad[pos_mask] = g_pos
    grad[~pos_mask] = g_rest
    state.classifier_opt.step(state.classifier, state.classifier.backward(cache, grad))
    return breakdown


def _labels_for_oracle(train, batch):
    return train.reveal_labels()[batch] == 1


def train_step(state, data, batch, config):
    """Process one mini-batch: act, update classifier, reward, update policy."""
    train = data.train
    x = train.features[batch]
    labeled = train.s[batch] == 1
    variant = config.variant
    norm = config.loss_normalization

    if variant == "biased":
        return StepStats(_classifier_step(state, x, labeled, losses.loss_biased, norm))
    if variant == "nnpu":
        prior = losses.PriorSpec(config.alpha)
        return StepStats(_classifier_step(state, x, labeled, losses.loss_nnpu, prior))
    if variant == "pn_oracle":
        return StepStats(_classifier_step(state, x, _labels_for_oracle(train, batch), losses.loss_pn, norm))

    pair = state.policies
    p_target = pair.target.predict(x)
    if variant == WEIGHTER:
        actions, _ = act_weighter(p_target, config.concentration, state.action_rng)
    else:
        actions, _ = act_separator(p_target, state.action_rng)
    state.emit("act")

    if variant == WEIGHTER:
        w = actions if config.weighter_sampled_weights else p_target
        breakdown = _classifier_step(state, x, labeled, losses.loss_weighter, w[~labeled], norm)
    else:
        positive = labeled | (actions == 1.0)
        breakdown = _classifier_step(state, x, positive, losses.loss_separator, norm)
    state.emit("classifier_update")

    yhat = state.classifier.predict(x)
    state.emit("predict")
    state.threshold = compute_threshold(yhat[labeled], yhat[~labeled], state.threshold)
    state.emit("threshold")
    rewards = compute_rewards(yhat, labeled, state.threshold.threshold)
    state.emit("reward")
    reinforce_update(pair.live, pair.optimizer, x, actions, rewards, variant, config.concentration)
    state.emit("policy_update")
    return StepStats(breakdown, float(rewards.mean()))


def pretrain(state, data, config):
    """Biased-PU warm-up of the classifier, then fit the policy to the classifier's
    thresholded predictions with cross-entropy."""
    if not config.uses_policy:
        return state
    train = data.train
    _, shuffle_seed, _ = config.seeds()
    n = len(train)
    for e in range(config.pretrain_classifier_epochs):
        for batch in minibatches(n, config.batch_size, (shuffle_seed, 1, e)):
            x = train.features[batch]
            _classifier_step(state, x, train.s[batch] == 1, losses.loss_biased,
                             config.loss_normalization)
    pair = state.policies
    for e in range(config.pretrain_policy_epochs):
        for batch in minibatches(n, config.batch_size, (shuffle_seed, 2, e)):
            x = train.features[batch]
            labeled = train.s[batch] == 1
            yhat = state.classifier.predict(x)
            state.threshold = compute_threshold(yhat[labeled], yhat[~labeled], state.threshold)
            target = (labeled | (yhat >= state.threshold.threshold)).astype(np.float64)
            p, cache = pair.live.forward(x)
            _, g_pos, g_neg = losses.loss_separator(p[target == 1], p[target == 0])
            grad = np.empty_like(p)
            grad[target == 1] = g_pos
            grad[target == 0] = g_neg
            pair.optimizer.step(pair.live, pair.live.backward(cache, grad))
    pair.target = pair.live.copy()
    return state


def evaluate(classifier, test, policy=None, train=None, kind=None):
    """Test-set metrics from the classifier and, if a policy is given, its
    deterministic assignment rate on the training unlabeled set."""
    scores = classifier.predict(test.features)
    report = {
        "accuracy": metrics.accuracy(scores, test.y),
        "roc_auc": metrics.roc_auc(scores, test.y),
        "pr_auc": metrics.pr_auc(scores, test.y),
        "assignment_rate": float("nan"),
    }
    if policy is not None and train is not None:
        u = train.unlabeled_indices
        actions = deterministic_action(policy.predict(train.features[u]), kind)
        report["assignment_rate"] = metrics.assignment_rate(actions, train.reveal_labels()[u])
    return report


def _epoch_row(state, data, config, epoch, stats):
    pair = state.policies
    report = evaluate(state.classifier, data.test,
                      pair.live if pair else None, data.train, config.variant)
    row = {"epoch": epoch, "split": "test", "variant": config.variant, **report}
    if stats:
        row["mean_reward"] = float(np.mean([s.mean_reward for s in stats])) if pair else float("nan")
        row["loss_total"] = float(np.mean([s.loss.total for s in stats]))
        row["loss_pos"] = float(np.mean([s.loss.positive_term for s in stats]))
        row["loss_unl"] = float(np.mean([s.loss.unlabeled_or_negative_term for s in stats]))
        row["nn_correction_rate"] = (float(np.mean([s.loss.correction_active for s in stats]))
                                     if config.variant == "nnpu" else float("nan"))
    else:
        for key in ("mean_reward", "loss_total", "loss_pos", "loss_unl", "nn_correction_rate"):
            row[key] = float("nan")
    row["threshold"] = state.threshold.threshold if pair else float("nan")
    return row


@dataclass
class RunResult:
    config: TrainConfig
    history: list
    classifier: MLP
    policy: MLP | None

    def final(self):
        return self.history[-1]

    def metrics_csv(self):
        return format_metrics_csv(self.history)


def run(config, data: PreparedData, trace=None):
    """Pretrain, then ``config.epochs`` shuffled passes with periodic target sync."""
    config.validate()
    state = init_state(config, data.train.features.shape[1])
    state.trace = trace
    pretrain(state, data, config)
    state.history.append(_epoch_row(state, data, config, 0, None))
    _, shuffle_seed, _ = config.seeds()
    n = len(data.train)
    for epoch in range(1, config.epochs + 1):
        stats = []
        for b, batch in enumerate(minibatches(n, config.batch_size, (shuffle_seed, 3, epoch))):
            try:
                stats.append(train_step(state, data, batch, config))
            except NonFiniteError as exc:
                raise NonFiniteError(f"epoch {epoch}, batch {b}: {exc}") from exc
        if state.policies is not None:
            sync_target(state.policies, epoch)
        state.epoch = epoch
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            row = _epoch_row(state, data, config, epoch, stats)
            state.history.append(row)
            log.debug("epoch %d acc=%.4f", epoch, row["accuracy"])
    policy = state.policies.live if state.policies else None
    return RunResult(config, state.history, state.classifier, policy)


def _fmt(value):
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def format_metrics_csv(history):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(METRIC_COLUMNS)
    for row in history:
        writer.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])
    return buf.getvalue()


def config_dict(config):
    return asdict(config)
