"""Ranking and preference objectives with hand-derived gradients.

Every loss takes sequence log-probabilities of responses listed best-first
and returns a :class:`LossResult` holding the scalar value and the exact
gradient with respect to the *policy* log-probabilities. Reference
log-probabilities are treated as constants.

Implicit DPO rewards are ``beta * (log pi_theta(y|x) - log pi_ref(y|x))``.
All normalizers go through log-sum-exp so inputs of magnitude ~700 stay finite.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._validation import check_scalar, check_vector
from .exceptions import InvalidInputError

__all__ = [
    "Objective",
    "ScoredChain",
    "LossConfig",
    "LossResult",
    "CombinedLoss",
    "pl_probability",
    "pl_log_probability",
    "pl_dpo_loss",
    "bt_dpo_loss",
    "mpo_loss",
    "hinge_loss",
    "ranknet_loss",
    "ntp_loss",
    "combined_loss",
]


class Objective(str, enum.Enum):
    PL_DPO = "PL_DPO"
    BT_DPO = "BT_DPO"
    MPO = "MPO"
    HINGE = "HINGE"
    RANKNET = "RANKNET"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("-", "_")
        aliases = {"RANK": "PL_DPO", "PL": "PL_DPO", "DPO": "BT_DPO"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise InvalidInputError(f"unknown objective {value!r}") from None


@dataclass(frozen=True)
class ScoredChain:
    """Policy and reference log-probs of n responses, ordered best-first."""

    policy_logprobs: np.ndarray
    ref_logprobs: np.ndarray

    def __post_init__(self):
        p = check_vector(self.policy_logprobs, "policy_logprobs")
        r = check_vector(self.ref_logprobs, "ref_logprobs")
        if p.shape != r.shape:
            raise InvalidInputError(
                f"policy_logprobs and ref_logprobs differ in length ({p.size} vs {r.size})"
            )
        object.__setattr__(self, "policy_logprobs", p)
        object.__setattr__(self, "ref_logprobs", r)

    @property
    def n(self):
        return self.policy_logprobs.shape[0]

    def log_ratios(self):
        return self.policy_logprobs - self.ref_logprobs

    def take(self, indices):
        idx = list(indices)
        return ScoredChain(self.policy_logprobs[idx], self.ref_logprobs[idx])


@dataclass(frozen=True)
class LossConfig:
    objective: Objective = Objective.PL_DPO
    beta: float = 0.3
    ntp_weight: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective.parse(self.objective))
        object.__setattr__(self, "beta", check_scalar(self.beta, "beta", positive=True))
        object.__setattr__(
            self, "ntp_weight", check_scalar(self.ntp_weight, "ntp_weight", non_negative=True)
        )


@dataclass(frozen=True)
class LossResult:
    value: float
    grad_policy_logprobs: np.ndarray


@dataclass(frozen=True)
class CombinedLoss:
    """Ranking term plus weighted next-token term, with both gradients."""

    value: float
    chain_value: float
    ntp_value: float
    grad_policy_logprobs: np.ndarray
    grad_token_logprobs: np.ndarray


def _suffix_logsumexp(x):
    # out[i] = log sum_{j >= i} exp(x[j])
    return np.logaddexp.accumulate(x[::-1])[::-1]


def pl_log_probability(rewards):
    """Log of the Plackett-Luce probability of the order ``0 > 1 > ... > n-1``."""
    r = check_vector(rewards, "rewards")
    return float(np.sum(r - _suffix_logsumexp(r)))


def pl_probability(rewards):
    """Plackett-Luce probability that items are ranked in the given order.

    >>> round(pl_probability([math.log(2), 0.0, 0.0]), 12)
    0.25
    """
    return math.exp(pl_log_probability(rewards))


def _pl_nll(rewards):
    """Negative PL log-likelihood and its gradient w.r.t. the rewards."""
    lse = _suffix_logsumexp(rewards)
    value = -float(np.sum(rewards - lse))
    # d/dr_k sum_i LSE_{j>=i} r_j = sum_{i<=k} softmax_i(r)_k
    probs = np.exp(rewards[None, :] - lse[:, None])
    probs = np.triu(probs)
    grad = probs.sum(axis=0) - 1.0
    return value, grad


def pl_dpo_loss(chain, beta):
    """Negative log-likelihood of the full ranking under PL with DPO rewards."""
    if not isinstance(chain, ScoredChain):
        raise InvalidInputError("pl_dpo_loss expects a ScoredChain")
    beta = check_scalar(beta, "beta", positive=True)
    value, grad_r = _pl_nll(beta * chain.log_ratios())
    return LossResult(max(value, 0.0), beta * grad_r)


def _bt_terms(z):
    # loss = softplus(-z), dloss/dz = -sigmoid(-z)
    return np.logaddexp(0.0, -z), -expit(-z)


def bt_dpo_loss(winner_lp, loser_lp, winner_ref_lp, loser_ref_lp, beta):
    """Pairwise DPO loss; gradient is ``[d/d winner_lp, d/d loser_lp]``."""
    w, l, wr, lr = check_vector([winner_lp, loser_lp, winner_ref_lp, loser_ref_lp], "bt inputs")
    beta = check_scalar(beta, "beta", positive=True)
    z = beta * ((w - wr) - (l - lr))
    value, dz = _bt_terms(z)
    return LossResult(float(value), np.array([beta * dz, -beta * dz]))


def mpo_loss(chain, beta):
    """Mean pairwise DPO loss of the top response against every other response.

    This is the winner-vs-rest reading of multi-preference optimization; the
    loser weighting is uniform.
    """
    if not isinstance(chain, ScoredChain):
        raise InvalidInputError("mpo_loss expects a ScoredChain")
    if chain.n < 2:
        raise InvalidInputError("mpo_loss needs at least 2 responses")
    beta = check_scalar(beta, "beta", positive=True)
    d = chain.log_ratios()
    z = beta * (d[0] - d[1:])
    values, dz = _bt_terms(z)
    m = chain.n - 1
    grad = np.zeros(chain.n)
    grad[0] = beta * dz.sum() / m
    grad[1:] = -beta * dz / m
    return LossResult(float(values.mean()), grad)


def _pair_scale(n, name):
    if n < 2:
        raise InvalidInputError(f"{name} needs at least 2 scores")
    return 2.0 / (n * (n - 1))


def hinge_loss(scores):
    """Margin-free pairwise hinge loss over best-first scores.

    Only inversions (a lower-ranked score above a higher-ranked one) are
    penalized. The subgradient of ``max(0, x)`` at ``x == 0`` is taken as 0.
    """
    s = check_vector(scores, "scores")
    c = _pair_scale(s.shape[0], "hinge_loss")
    diff = s[None, :] - s[:, None]  # diff[i, j] = s_j - s_i
    upper = np.triu(np.ones_like(diff, dtype=bool), k=1)
    active = upper & (diff > 0)
    value = c * float(diff[active].sum())
    grad = c * (active.sum(axis=0) - active.sum(axis=1)).astype(np.float64)
    return LossResult(value, grad)


def ranknet_loss(scores):
    """Pairwise logistic loss on raw score differences (no reference policy)."""
    s = check_vector(scores, "scores")
    c = _pair_scale(s.shape[0], "ranknet_loss")
    diff = s[:, None] - s[None, :]  # diff[i, j] = s_i - s_j
    upper = np.triu(np.ones_like(diff, dtype=bool), k=1)
    values, dz = _bt_terms(diff)
    value = c * float(values[upper].sum())
    dz = np.where(upper, dz, 0.0)
    grad = c * (dz.sum(axis=1) - dz.sum(axis=0))
    return LossResult(value, grad)


def ntp_loss(token_logprobs):
    """Per-token mean negative log-likelihood of the ground-truth sequence."""
    t = check_vector(token_logprobs, "token_logprobs")
    L = t.shape[0]
    return LossResult(-float(t.mean()), np.full(L, -1.0 / L))


def chain_objective(config, chain):
    """Evaluate the ranking term selected by ``config`` on ``chain``."""
    obj = config.objective
    if obj is Objective.PL_DPO:
        return pl_dpo_loss(chain, config.beta)
    if obj is Objective.BT_DPO:
        if chain.n != 2:
            raise InvalidInputError(f"BT_DPO scores exactly 2 responses, got {chain.n}")
        p, r = chain.policy_logprobs, chain.ref_logprobs
        return bt_dpo_loss(p[0], p[1], r[0], r[1], config.beta)
    if obj is Objective.MPO:
        return mpo_loss(chain, config.beta)
    if obj is Objective.HINGE:
        return hinge_loss(chain.policy_logprobs)
    if obj is Objective.RANKNET:
        return ranknet_loss(chain.policy_logprobs)
    raise InvalidInputError(f"unsupported objective {obj}")


def combined_loss(config, chain, gt_token_logprobs):
    """Ranking objective plus ``ntp_weight`` times the next-token loss."""
    main = chain_objective(config, chain)
    ntp = ntp_loss(gt_token_logprobs)
    w = config.ntp_weight
    return CombinedLoss(
        value=main.value + w * ntp.value,
        chain_value=main.value,
        ntp_value=ntp.value,
        grad_policy_logprobs=main.grad_policy_logprobs,
        grad_token_logprobs=w * ntp.grad_policy_logprobs,
    )


def select_responses(objective, n):
    """Indices of chain members an objective trains on.

    Pairwise DPO sees only the top two responses; the others use the whole chain.
    """
    objective = Objective.parse(objective)
    if n < 2 and objective is not Objective.PL_DPO:
        raise InvalidInputError(f"{objective.value} needs a chain of at least 2 responses")
    if objective is Objective.BT_DPO:
        return [0, 1]
    return list(range(n))
