"""Dense feed-forward network with hand-written backprop and Adam.

Hidden layers use ReLU, the single output unit uses a sigmoid. Everything is
float64 so that finite-difference gradient checks are meaningful.
"""

from __future__ import annotations

import copy
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CacheMismatchError, ConfigError, NonFiniteError

PROB_EPS = 1e-7

CHECKPOINT_MAGIC = b"PUPN"
CHECKPOINT_VERSION = 1


def sigmoid(z):
    # split by sign so that exp never overflows
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def clip_prob(p):
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


@dataclass
class ForwardCache:
    model_id: int
    version: int
    activations: list  # inputs to each layer, activations[0] is the batch
    pre_activations: list
    prob: np.ndarray  # unclipped sigmoid output


class MLP:
    """ReLU MLP ending in one sigmoid unit.

    ``layer_dims`` runs from input width to 1, e.g. ``[10, 64, 32, 1]``.
    Weights are stored as ``(fan_in, fan_out)`` matrices.
    """

    def __init__(self, layer_dims, rng=None, zero=False):
        dims = [int(d) for d in layer_dims]
        if len(dims) < 2 or dims[-1] != 1 or min(dims) < 1:
            raise ConfigError(f"layer_dims must be positive and end in 1, got {layer_dims!r}")
        self.layer_dims = dims
        self.weights = []
        self.biases = []
        self.version = 0
        rng = rng if rng is not None else np.random.default_rng(0)
        n_layers = len(dims) - 1
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            if zero:
                w = np.zeros((fan_in, fan_out))
            elif i < n_layers - 1:
                limit = np.sqrt(6.0 / fan_in)  # He-uniform
                w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            else:
                limit = np.sqrt(6.0 / (fan_in + fan_out))  # Xavier-uniform
                w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    @property
    def n_params(self):
        return sum(p.size for p in self.params)

    def copy(self):
        return copy.deepcopy(self)

    def same_params(self, other):
        return self.layer_dims == other.layer_dims and all(
            np.array_equal(a, b) for a, b in zip(self.params, other.params)
        )

    def forward(self, batch):
        """Return ``(probabilities, cache)``; probabilities are clipped to [eps, 1-eps]."""
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ConfigError(f"batch has shape {x.shape}, model expects {self.input_dim} columns")
        activations = [x]
        pre = []
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            if i < last:
                h = np.maximum(z, 0.0)
                activations.append(h)
        prob = sigmoid(pre[-1][:, 0])
        cache = ForwardCache(id(self), self.version, activations, pre, prob)
        return clip_prob(prob), cache

    def predict(self, batch):
        return self.forward(batch)[0]

    def backward(self, cache, output_gradient):
        """Gradients of a scalar loss given dL/d(clipped probability) per row.

        Returns a list shaped like ``params`` (w0, b0, w1, b1, ...).
        """
        if cache.model_id != id(self) or cache.version != self.version:
            raise CacheMismatchError("forward cache does not belong to this model state")
        g = np.asarray(output_gradient, dtype=np.float64).reshape(-1)
        prob = cache.prob
        if g.shape != prob.shape:
            raise CacheMismatchError(f"output gradient has shape {g.shape}, expected {prob.shape}")
        # clip has zero derivative outside [eps, 1-eps]
        inside = (prob >= PROB_EPS) & (prob <= 1.0 - PROB_EPS)
        delta = (g * prob * (1.0 - prob) * inside).reshape(-1, 1)
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = cache.activations[i]
            grads[2 * i] = a_in.T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (cache.pre_activations[i - 1] > 0)
        return grads

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    def to_bytes(self):
        chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(self.weights))]
        for w, b in zip(self.weights, self.biases):
            chunks.append(struct.pack("<II", *w.shape))
            chunks.append(w.astype("<f8").tobytes())
            chunks.append(b.astype("<f8").tobytes())
        return b"".join(chunks)

    @classmethod
    def from_bytes(cls, data):
        if data[:4] != CHECKPOINT_MAGIC:
            raise ValueError("not a PUPN checkpoint")
        version, n_layers = struct.unpack_from("<II", data, 4)
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        offset = 12
        weights, biases, dims = [], [], []
        for _ in range(n_layers):
            fan_in, fan_out = struct.unpack_from("<II", data, offset)
            offset += 8
            n = fan_in * fan_out
            w = np.frombuffer(data, dtype="<f8", count=n, offset=offset).reshape(fan_in, fan_out)
            offset += 8 * n
            b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=offset)
            offset += 8 * fan_out
            weights.append(w.astype(np.float64))
            biases.append(b.astype(np.float64))
            if not dims:
                dims.append(fan_in)
            dims.append(fan_out)
        if offset != len(data):
            raise ValueError(f"trailing bytes in checkpoint ({len(data) - offset})")
        model = cls(dims, zero=True)
        model.weights, model.biases = weights, biases
        return model

    @classmethod
    def load(cls, path):
        return cls.from_bytes(Path(path).read_bytes())


@dataclass
class Adam:
    """Adam with decoupled weight decay.

    After the usual bias-corrected step every parameter is multiplied by
    ``1 - lr * weight_decay``.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, model, grads):
        params = model.params
        if len(grads) != len(params):
            raise ConfigError("gradient list does not match model parameters")
        for p, g in zip(params, grads):
            if g.shape != p.shape:
                raise ConfigError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for parameter of shape {p.shape} at step {self.step_count + 1}")
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        decay = 1.0 - self.lr * self.weight_decay
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            if decay != 1.0:
                p *= decay
        model.version += 1
        return model
