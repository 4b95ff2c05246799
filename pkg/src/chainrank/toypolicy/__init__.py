"""Desk-scale differentiable policy used to exercise the ranking objectives."""

from .checkpoint import load_policy, save_policy
from .data import SynthExample, load_dataset, make_synth_dataset, save_dataset, split_dataset
from .estimator import ChainRanker, chain_scores
from .policy import (
    BOS,
    PolicyGrad,
    ToyPolicy,
    rank_chain,
    score_gradient,
    score_sequence,
)
from .train import AdamW, LossTrace, TrainConfig, train

__all__ = [
    "AdamW",
    "BOS",
    "ChainRanker",
    "LossTrace",
    "PolicyGrad",
    "SynthExample",
    "ToyPolicy",
    "TrainConfig",
    "chain_scores",
    "load_dataset",
    "load_policy",
    "make_synth_dataset",
    "rank_chain",
    "save_dataset",
    "save_policy",
    "score_gradient",
    "score_sequence",
    "split_dataset",
    "train",
]
