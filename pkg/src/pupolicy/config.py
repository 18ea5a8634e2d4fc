"""Experiment specs: sectioned ``key = value`` files and dataset construction."""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .data import (
    EVEN_DIGITS,
    LabeledDataset,
    PUSplitSpec,
    binarize,
    gen_gaussians,
    prepare,
    read_idx,
)
from .errors import ConfigError
from .trainer import TrainConfig

DATA_DIR_ENV = "PUPOLICY_DATA_DIR"


@dataclass
class DatasetSpec:
    source: str = "gaussians"
    # gaussians
    n_per_class: int = 1000
    test_n_per_class: int = 1000
    d: int = 10
    separation: float = 4.0
    data_seed: int = 0
    # mnist
    train_images: str = "train-images-idx3-ubyte.gz"
    train_labels: str = "train-labels-idx1-ubyte.gz"
    test_images: str = "t10k-images-idx3-ubyte.gz"
    test_labels: str = "t10k-labels-idx1-ubyte.gz"
    positive_digits: tuple = tuple(sorted(EVEN_DIGITS))
    # PU split
    n_l: int = 300
    rho: float = 0.3
    u_multiplier: int = 3
    split_seed: int = 0
    standardize: bool = True

    def split(self):
        return PUSplitSpec(self.n_l, self.rho, self.u_multiplier, self.split_seed)


@dataclass
class ExperimentSpec:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    alpha_known: bool = False
    grid_seeds: tuple = ()
    out_dir: str = "runs/experiment"
    base_dir: str = "."

    def resolved_train(self):
        """TrainConfig with ``alpha = known`` replaced by the split's positive ratio."""
        cfg = dataclasses.replace(self.train)
        if self.alpha_known:
            cfg.alpha = self.dataset.rho
        return cfg

    def child(self, variant, seed):
        spec = dataclasses.replace(self, train=dataclasses.replace(self.train, variant=variant, seed=seed))
        spec.dataset = dataclasses.replace(self.dataset)
        return spec


# key -> (section, field owner, converter)
def _int_list(text):
    text = text.strip()
    return tuple(int(v) for v in text.split(",") if v.strip()) if text else ()


def _bool(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt(conv):
    def inner(text):
        return None if text.strip().lower() in ("", "none") else conv(text)
    return inner


DATASET_KEYS = {
    "source": str, "n_per_class": int, "test_n_per_class": int, "d": int, "separation": float,
    "data_seed": int, "train_images": str, "train_labels": str, "test_images": str,
    "test_labels": str, "positive_digits": _int_list, "n_l": int, "rho": float,
    "u_multiplier": int, "split_seed": int, "standardize": _bool,
}
MODEL_KEYS = {"classifier_hidden": _int_list, "policy_hidden": _int_list}
TRAIN_KEYS = {
    "variant": str, "epochs": int, "batch_size": int, "lr": float, "policy_lr": _opt(float),
    "sync_period": int, "pretrain_classifier_epochs": int, "pretrain_policy_epochs": int,
    "classifier_weight_decay": float, "policy_weight_decay": float, "concentration": float,
    "weighter_sampled_weights": _bool, "loss_normalization": str, "alpha": str, "seed": int,
    "init_seed": _opt(int), "shuffle_seed": _opt(int), "action_seed": _opt(int),
    "eval_every": int, "grid_seeds": _int_list,
}
OUTPUT_KEYS = {"dir": str}
SECTIONS = {"dataset": DATASET_KEYS, "model": MODEL_KEYS, "train": TRAIN_KEYS, "output": OUTPUT_KEYS}


def _line_of(text, section, key):
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
        elif current == section and "=" in line and line.split("=", 1)[0].strip() == key:
            return lineno
    return None


def _where(text, section, key):
    line = _line_of(text, section, key)
    return f"line {line}, [{section}] {key}" if line else f"[{section}] {key}"


def parse_config(text, base_dir="."):
    """Parse an experiment config; raises ConfigError naming the offending line/key."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
    values = {}
    for section, keys in SECTIONS.items():
        if not parser.has_section(section):
            continue
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigError(f"{_where(text, section, key)}: unknown key")
            try:
                values[(section, key)] = keys[key](raw)
            except ValueError as exc:
                raise ConfigError(f"{_where(text, section, key)}: {exc}") from exc

    ds = DatasetSpec(**{k: v for (s, k), v in values.items() if s == "dataset"})
    if ds.source not in ("gaussians", "mnist"):
        raise ConfigError(f"{_where(text, 'dataset', 'source')}: expected gaussians or mnist")
    train_kwargs = {k: v for (s, k), v in values.items() if s == "train" and k not in ("alpha", "grid_seeds")}
    alpha_raw = values.get(("train", "alpha"))
    alpha_known = False
    if alpha_raw is not None:
        if alpha_raw.strip().lower() == "known":
            alpha_known = True
        else:
            try:
                train_kwargs["alpha"] = float(alpha_raw)
            except ValueError:
                raise ConfigError(f"{_where(text, 'train', 'alpha')}: expected a number or 'known'") from None
    if ("model", "classifier_hidden") in values:
        train_kwargs["classifier_dims"] = values[("model", "classifier_hidden")]
    if ("model", "policy_hidden") in values:
        train_kwargs["policy_dims"] = values[("model", "policy_hidden")]
    spec = ExperimentSpec(
        dataset=ds,
        train=TrainConfig(**train_kwargs),
        alpha_known=alpha_known,
        grid_seeds=values.get(("train", "grid_seeds"), ()),
        out_dir=values.get(("output", "dir"), ExperimentSpec.out_dir),
        base_dir=str(base_dir),
    )
    validate_spec(spec, text)
    return spec


def validate_spec(spec, text=""):
    try:
        spec.resolved_train().validate()
    except ConfigError as exc:
        raise ConfigError(f"[train]: {exc}") from None
    if spec.alpha_known and not 0.0 < spec.dataset.rho < 1.0:
        raise ConfigError("[train] alpha = known needs 0 < rho < 1")
    return spec


def load_config(path):
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_config_text(spec):
    lines = ["[dataset]"]
    for f in dataclasses.fields(DatasetSpec):
        lines.append(f"{f.name} = {_fmt(getattr(spec.dataset, f.name))}")
    lines += ["", "[model]",
              f"classifier_hidden = {_fmt(spec.train.classifier_dims)}",
              f"policy_hidden = {_fmt(spec.train.policy_dims)}",
              "", "[train]"]
    for key in TRAIN_KEYS:
        if key == "alpha":
            value = "known" if spec.alpha_known else _fmt(spec.train.alpha)
        elif key == "grid_seeds":
            value = _fmt(spec.grid_seeds)
        else:
            value = _fmt(getattr(spec.train, key))
        lines.append(f"{key} = {value}")
    lines += ["", "[output]", f"dir = {spec.out_dir}", ""]
    return "\n".join(lines)


def _data_path(name, base_dir):
    p = Path(name)
    if p.is_absolute():
        return p
    root = os.environ.get(DATA_DIR_ENV)
    candidates = [Path(base_dir) / p]
    if root:
        candidates.insert(0, Path(root) / p)
    for c in candidates:
        if c.exists():
            return c
    where = " or ".join(str(c) for c in candidates)
    raise FileNotFoundError(
        f"IDX file {name!r} not found (looked in {where}); set {DATA_DIR_ENV} to the directory "
        "holding the MNIST files, or create a sample with `python -m pupolicy.mnist_subset DIR`"
    )


def load_sources(ds, base_dir="."):
    """Return (train pool, test set) as LabeledDatasets."""
    if ds.source == "gaussians":
        pool = gen_gaussians(ds.n_per_class, ds.d, ds.separation, seed=(ds.data_seed, 0))
        test = gen_gaussians(ds.test_n_per_class, ds.d, ds.separation, seed=(ds.data_seed, 1))
        return pool, test
    paths = {k: _data_path(getattr(ds, k), base_dir)
             for k in ("train_images", "train_labels", "test_images", "test_labels")}
    positive = set(ds.positive_digits)
    pool = LabeledDataset(read_idx(paths["train_images"]), binarize(read_idx(paths["train_labels"]), positive))
    test = LabeledDataset(read_idx(paths["test_images"]), binarize(read_idx(paths["test_labels"]), positive))
    return pool, test


def build_data(spec):
    ds = spec.dataset
    pool, test = load_sources(ds, spec.base_dir)
    data = prepare(pool, test, ds.split(), standardize_features=ds.standardize)
    data.manifest.update({"source": ds.source, "data_seed": ds.data_seed})
    if ds.source == "mnist":
        data.manifest["positive_digit_set"] = sorted(ds.positive_digits)
    else:
        data.manifest.update({"d": ds.d, "separation": ds.separation})
    return data
