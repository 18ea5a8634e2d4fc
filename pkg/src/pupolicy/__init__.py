"""Positive-unlabeled learning with a policy network that assigns labels to unlabeled data."""

from .data import LabeledDataset, PUDataset, PUSplitSpec, gen_gaussians, make_pu, parse_idx
from .losses import (
    LossBreakdown,
    PriorSpec,
    elkan_adjust,
    loss_biased,
    loss_nnpu,
    loss_pn,
    loss_separator,
    loss_weighter,
)
from .nn import MLP, Adam
from .trainer import TrainConfig, evaluate, run

__version__ = "0.1.0"
