"""AdamW training of a ToyPolicy on ranking objectives."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import rankloss
from .._io import atomic_write_text
from ..exceptions import InvalidInputError, NonFiniteLossError
from .policy import PARAM_NAMES, batch_backward, batch_forward

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    steps: int = 500
    batch_size: int = 8
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.learning_rate < 0:
            raise InvalidInputError("learning_rate must be >= 0")
        if self.steps < 1 or self.batch_size < 1:
            raise InvalidInputError("steps and batch_size must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.eps <= 0:
            raise InvalidInputError("invalid AdamW hyperparameters")
        if self.weight_decay < 0:
            raise InvalidInputError("weight_decay must be >= 0")


class AdamW:
    """Adam with decoupled weight decay, operating in place on numpy arrays."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.01):
        self.params = params
        self.lr, self.beta1, self.beta2 = lr, beta1, beta2
        self.eps, self.weight_decay = eps, weight_decay
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            update = (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            p -= self.lr * (update + self.weight_decay * p)


@dataclass
class LossTrace:
    step: list = field(default_factory=list)
    chain_loss: list = field(default_factory=list)
    ntp_loss: list = field(default_factory=list)
    total: list = field(default_factory=list)

    def append(self, step, chain, ntp, total):
        self.step.append(step)
        self.chain_loss.append(chain)
        self.ntp_loss.append(ntp)
        self.total.append(total)

    def __len__(self):
        return len(self.step)

    def to_csv(self, path):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "chain_loss", "ntp_loss", "total"])
        for row in zip(self.step, self.chain_loss, self.ntp_loss, self.total):
            w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])
        atomic_write_text(path, buf.getvalue())

    @classmethod
    def from_csv(cls, path):
        trace = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                trace.append(
                    int(row["step"]), float(row["chain_loss"]), float(row["ntp_loss"]), float(row["total"])
                )
        return trace


def _stack(batch, indices):
    contexts = np.stack([ex.context for ex in batch])
    tokens = np.stack([np.stack([ex.chain_tokens[i] for i in indices]) for ex in batch])
    return contexts, tokens


def batch_loss_and_grad(policy, reference_logprobs, batch, loss_config, indices):
    """Mean combined loss over a batch of chains and its parameter gradient.

    ``reference_logprobs`` is a (B, K) array of frozen reference sequence
    log-probs for the selected chain members. Non-finite policy log-probs
    give NaN losses and a None gradient so the caller can abort.
    """
    contexts, tokens = _stack(batch, indices)
    tlp, probs = batch_forward(policy, contexts, tokens)
    if not np.all(np.isfinite(tlp)):
        return (math.nan, math.nan, math.nan), None
    seq_lp = tlp.sum(axis=-1)
    B, K, L = tlp.shape
    weights = np.zeros_like(tlp)
    chain_vals, ntp_vals, totals = [], [], []
    for b in range(B):
        chain = rankloss.ScoredChain(seq_lp[b], reference_logprobs[b])
        res = rankloss.combined_loss(loss_config, chain, tlp[b, 0])
        chain_vals.append(res.chain_value)
        ntp_vals.append(res.ntp_value)
        totals.append(res.value)
        weights[b] += res.grad_policy_logprobs[:, None] / B
        weights[b, 0] += res.grad_token_logprobs / B
    grad = batch_backward(policy, contexts, tokens, probs, weights)
    return (float(np.mean(chain_vals)), float(np.mean(ntp_vals)), float(np.mean(totals))), grad


def reference_logprobs(reference, dataset, indices):
    contexts, tokens = _stack(dataset, indices)
    tlp, _ = batch_forward(reference, contexts, tokens)
    return tlp.sum(axis=-1)


def _check_dataset(dataset, indices):
    if not dataset:
        raise InvalidInputError("training dataset is empty")
    lengths = {len(seq) for ex in dataset for seq in ex.chain_tokens}
    if len(lengths) != 1:
        raise InvalidInputError("all training sequences must share one length")
    need = max(indices) + 1
    short = [i for i, ex in enumerate(dataset) if ex.chain_size < need]
    if short:
        raise InvalidInputError(f"{len(short)} chains are shorter than {need} members")


def train(policy, dataset, loss_config, train_config, reference=None, callback=None):
    """Train a copy of ``policy``; returns ``(trained_policy, LossTrace)``.

    The reference policy defaults to a frozen copy of the initial policy. The
    trace records the pre-update batch loss of every step. ``callback`` (if
    given) is called as ``callback(step, policy)`` before each update and once
    more after the final one.
    """
    cfg = train_config
    objective = loss_config.objective
    chain_size = min(ex.chain_size for ex in dataset) if dataset else 0
    indices = rankloss.select_responses(objective, chain_size)
    _check_dataset(dataset, indices)
    reference = (reference or policy).copy()
    trained = policy.copy()
    ref_lp = reference_logprobs(reference, dataset, indices)
    opt = AdamW(
        trained.params(),
        cfg.learning_rate,
        cfg.beta1,
        cfg.beta2,
        cfg.eps,
        cfg.weight_decay,
    )
    rng = np.random.default_rng(cfg.seed)
    trace = LossTrace()
    order = rng.permutation(len(dataset))
    cursor = 0
    bs = min(cfg.batch_size, len(dataset))
    for step in range(cfg.steps):
        if cursor + bs > len(order):
            order = rng.permutation(len(dataset))
            cursor = 0
        idx = order[cursor : cursor + bs]
        cursor += bs
        batch = [dataset[i] for i in idx]
        if callback is not None:
            callback(step, trained)
        (chain_v, ntp_v, total), grad = batch_loss_and_grad(
            trained, ref_lp[idx], batch, loss_config, indices
        )
        if not math.isfinite(total):
            raise NonFiniteLossError(
                f"non-finite loss {total!r} at step {step} (learning rate {cfg.learning_rate})", step=step
            )
        trace.append(step, chain_v, ntp_v, total)
        opt.step({k: getattr(grad, k) for k in PARAM_NAMES})
    if callback is not None:
        callback(cfg.steps, trained)
    return trained, trace
