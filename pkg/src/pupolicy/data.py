"""Datasets: IDX parsing, synthetic Gaussians, PU split construction, batching."""

from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, IDXParseError

IDX_LABELS_MAGIC = 0x00000801
IDX_IMAGES_MAGIC = 0x00000803

EVEN_DIGITS = frozenset({0, 2, 4, 6, 8})


def parse_idx(data):
    """Decode an IDX byte string (labels: 1-D uint8, images: 3-D uint8).

    Images come back flattened to ``(n, rows*cols)`` and scaled to [0, 1];
    labels come back as an int64 vector.
    """
    data = bytes(data)
    if len(data) < 4:
        raise IDXParseError("truncated magic number", len(data))
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic == IDX_LABELS_MAGIC:
        ndim = 1
    elif magic == IDX_IMAGES_MAGIC:
        ndim = 3
    else:
        raise IDXParseError(f"bad magic 0x{magic:08x}", 0)
    header_len = 4 + 4 * ndim
    if len(data) < header_len:
        raise IDXParseError("truncated header", len(data))
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    count = math.prod(dims)
    if count > 2**31:
        raise IDXParseError(f"dimensions {dims} overflow", 4)
    if len(data) < header_len + count:
        raise IDXParseError(f"payload needs {count} bytes, found {len(data) - header_len}", len(data))
    payload = np.frombuffer(data, dtype=np.uint8, count=count, offset=header_len)
    if ndim == 1:
        return payload.astype(np.int64)
    return payload.reshape(dims[0], dims[1] * dims[2]).astype(np.float64) / 255.0


def read_idx(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"IDX file not found: {path}")
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return parse_idx(raw)


def encode_idx(array):
    """Inverse of ``parse_idx`` for uint8 arrays (1-D labels or 3-D images)."""
    a = np.asarray(array, dtype=np.uint8)
    if a.ndim == 1:
        magic = IDX_LABELS_MAGIC
    elif a.ndim == 3:
        magic = IDX_IMAGES_MAGIC
    else:
        raise ValueError("IDX encoding supports 1-D labels or 3-D images only")
    return struct.pack(f">I{a.ndim}I", magic, *a.shape) + a.tobytes()


def binarize(labels, positive_set):
    positive = np.asarray(sorted(positive_set), dtype=np.int64)
    return np.isin(np.asarray(labels), positive).astype(np.int64)


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if len(self.features) != len(self.y):
            raise ConfigError("features and labels differ in length")

    def __len__(self):
        return len(self.y)


def gen_gaussians(n_per_class, d=10, separation=4.0, seed=0):
    """Two unit-covariance Gaussians centred at +/- separation/2 on every axis."""
    rng = np.random.default_rng(seed)
    mu = np.full(d, separation / 2.0)
    pos = rng.standard_normal((n_per_class, d)) + mu
    neg = rng.standard_normal((n_per_class, d)) - mu
    x = np.vstack([pos, neg])
    y = np.concatenate([np.ones(n_per_class, dtype=np.int64), np.zeros(n_per_class, dtype=np.int64)])
    order = rng.permutation(len(y))
    return LabeledDataset(x[order], y[order])


@dataclass(frozen=True)
class PUSplitSpec:
    n_l: int
    rho: float
    u_multiplier: int = 3
    seed: int = 0

    @property
    def n_unlabeled(self):
        return self.u_multiplier * self.n_l

    @property
    def n_hidden_positive(self):
        # round half up
        return int(math.floor(self.rho * self.n_unlabeled + 0.5))


class PUDataset:
    """Features with observed labels ``s``; true labels are kept behind ``reveal_labels``.

    Rows ``[0, n_p)`` are the labeled positives and the rest are unlabeled,
    so ``s`` is 1 on exactly the first ``n_p`` rows.
    """

    def __init__(self, features, s, hidden_y):
        self.features = np.asarray(features, dtype=np.float64)
        self.s = np.asarray(s, dtype=np.int64)
        self._hidden_y = np.asarray(hidden_y, dtype=np.int64)
        if not (len(self.features) == len(self.s) == len(self._hidden_y)):
            raise ConfigError("features, s and hidden_y differ in length")
        if np.any((self.s == 1) & (self._hidden_y != 1)):
            raise ConfigError("a labeled example has hidden_y = 0")
        self.positive_indices = np.flatnonzero(self.s == 1)
        self.unlabeled_indices = np.flatnonzero(self.s == 0)

    def __len__(self):
        return len(self.s)

    def reveal_labels(self):
        """Ground truth. Only evaluation code and the PN oracle may call this."""
        return self._hidden_y

    def with_features(self, features):
        return PUDataset(features, self.s, self._hidden_y)

    def to_csv(self, path):
        d = self.features.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"feature_{j}" for j in range(d)] + ["s", "hidden_y"])
            for row, s, y in zip(self.features, self.s, self._hidden_y):
                writer.writerow([repr(float(v)) for v in row] + [int(s), int(y)])


def make_pu(source, spec):
    """Draw a SCAR PU training set from a fully labeled pool.

    ``n_l`` positives are labeled uniformly at random; the unlabeled set holds
    ``round(rho * |U|)`` further positives plus negatives, disjoint from P.
    """
    if spec.n_l < 1 or not 0.0 <= spec.rho <= 1.0 or spec.u_multiplier < 1:
        raise ConfigError(f"invalid split spec {spec}")
    rng = np.random.default_rng(spec.seed)
    pos = np.flatnonzero(source.y == 1)
    neg = np.flatnonzero(source.y == 0)
    n_u = spec.n_unlabeled
    n_up = spec.n_hidden_positive
    n_un = n_u - n_up
    need_pos = spec.n_l + n_up
    if len(pos) < need_pos or len(neg) < n_un:
        raise ConfigError(
            f"source too small: need {need_pos} positives and {n_un} negatives, "
            f"have {len(pos)} and {len(neg)} (shortfall {max(0, need_pos - len(pos))} positives, "
            f"{max(0, n_un - len(neg))} negatives)"
        )
    chosen_pos = rng.permutation(pos)[:need_pos]
    labeled = chosen_pos[: spec.n_l]
    unl_pos = chosen_pos[spec.n_l :]
    unl_neg = rng.permutation(neg)[:n_un]
    unlabeled = rng.permutation(np.concatenate([unl_pos, unl_neg]))
    idx = np.concatenate([labeled, unlabeled])
    s = np.concatenate([np.ones(spec.n_l, dtype=np.int64), np.zeros(n_u, dtype=np.int64)])
    return PUDataset(source.features[idx], s, source.y[idx])


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        safe = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, (x - self.mean) / safe, 0.0)


def fit_standardizer(train_features):
    x = np.asarray(train_features, dtype=np.float64)
    return Standardizer(x.mean(axis=0), x.std(axis=0))


def standardize(train_features, apply_to=None):
    """Standardize with training statistics; returns (train, apply_to, record)."""
    record = fit_standardizer(train_features)
    other = None if apply_to is None else record.apply(apply_to)
    return record.apply(train_features), other, record


def minibatches(n, m, epoch_seed):
    if m < 1:
        raise ConfigError("batch size must be >= 1")
    perm = np.random.default_rng(epoch_seed).permutation(n)
    return [perm[i : i + m] for i in range(0, n, m)]


@dataclass
class PreparedData:
    """A standardized PU training set plus a held-out labeled test set."""

    train: PUDataset
    test: LabeledDataset
    standardizer: Standardizer
    manifest: dict = field(default_factory=dict)


def prepare(train_pool, test, split, standardize_features=True):
    pu = make_pu(train_pool, split)
    if standardize_features:
        record = fit_standardizer(pu.features)
        pu = pu.with_features(record.apply(pu.features))
        test = LabeledDataset(record.apply(test.features), test.y)
    else:
        record = Standardizer(np.zeros(pu.features.shape[1]), np.ones(pu.features.shape[1]))
    manifest = {
        "n_l": split.n_l,
        "rho": split.rho,
        "u_multiplier": split.u_multiplier,
        "split_seed": split.seed,
        "n_train": len(pu),
        "n_unlabeled": len(pu.unlabeled_indices),
        "n_hidden_positive_in_u": split.n_hidden_positive,
        "n_test": len(test),
    }
    return PreparedData(pu, test, record, manifest)
