"""Log-linear conditional sequence model with hand-written backprop.

At position ``t`` the logits over the vocabulary are::

    weights @ context + bigram[prev_token] + bias

where ``prev_token`` is the previous token, or ``BOS`` at position 0. The
begin token shares row ``BOS`` of the bigram table with vocabulary id 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax

from .._validation import check_tokens, check_vector
from ..exceptions import InvalidInputError

BOS = 0

PARAM_NAMES = ("weights", "bigram", "bias")


@dataclass
class ToyPolicy:
    vocab_size: int
    ctx_dim: int
    weights: np.ndarray  # (V, d)
    bigram: np.ndarray  # (V, V), row = previous token
    bias: np.ndarray  # (V,)

    def __post_init__(self):
        V, d = int(self.vocab_size), int(self.ctx_dim)
        if V < 1 or d < 1:
            raise InvalidInputError("vocab_size and ctx_dim must be positive")
        self.vocab_size, self.ctx_dim = V, d
        self.weights = np.array(self.weights, dtype=np.float64).reshape(V, d)
        self.bigram = np.array(self.bigram, dtype=np.float64).reshape(V, V)
        self.bias = np.array(self.bias, dtype=np.float64).reshape(V)
        for name in PARAM_NAMES:
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidInputError(f"parameter {name} has non-finite entries")

    @classmethod
    def zeros(cls, vocab_size, ctx_dim):
        V, d = vocab_size, ctx_dim
        return cls(V, d, np.zeros((V, d)), np.zeros((V, V)), np.zeros(V))

    @classmethod
    def random(cls, vocab_size, ctx_dim, rng, scale=0.01):
        rng = np.random.default_rng(rng)
        V, d = vocab_size, ctx_dim
        return cls(
            V,
            d,
            scale * rng.standard_normal((V, d)),
            scale * rng.standard_normal((V, V)),
            scale * rng.standard_normal(V),
        )

    def copy(self):
        return ToyPolicy(
            self.vocab_size, self.ctx_dim, self.weights.copy(), self.bigram.copy(), self.bias.copy()
        )

    def params(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def flat_params(self):
        return np.concatenate([getattr(self, n).ravel() for n in PARAM_NAMES])

    def with_flat_params(self, flat):
        out = self.copy()
        offset = 0
        for name in PARAM_NAMES:
            arr = getattr(out, name)
            arr[...] = np.asarray(flat[offset : offset + arr.size]).reshape(arr.shape)
            offset += arr.size
        return out

    def step_logits(self, context, prev_tokens):
        """Logits for every position given the context and previous tokens."""
        return self.weights @ context + self.bigram[prev_tokens] + self.bias


@dataclass
class PolicyGrad:
    weights: np.ndarray
    bigram: np.ndarray
    bias: np.ndarray

    def flat(self):
        return np.concatenate([getattr(self, n).ravel() for n in PARAM_NAMES])


def _prev_tokens(tokens):
    prev = np.empty_like(tokens)
    prev[..., 0] = BOS
    prev[..., 1:] = tokens[..., :-1]
    return prev


def batch_forward(policy, contexts, tokens):
    """Score a batch of equal-length sequences.

    Parameters
    ----------
    contexts : (B, d) array
    tokens : (B, K, L) int array, K sequences per context

    Returns
    -------
    token_logprobs : (B, K, L)
    probs : (B, K, L, V) softmax at every position, needed for backprop
    """
    prev = _prev_tokens(tokens)
    ctx_logits = contexts @ policy.weights.T + policy.bias  # (B, V)
    logits = ctx_logits[:, None, None, :] + policy.bigram[prev]
    logp = log_softmax(logits, axis=-1)
    token_logprobs = np.take_along_axis(logp, tokens[..., None], axis=-1)[..., 0]
    return token_logprobs, np.exp(logp)


def batch_backward(policy, contexts, tokens, probs, token_weights):
    """Gradient of ``sum(token_weights * token_logprobs)`` w.r.t. all parameters.

    For one position, d log p(y)/d logits = onehot(y) - softmax.
    """
    V = policy.vocab_size
    dlogits = -probs * token_weights[..., None]
    np.put_along_axis(
        dlogits,
        tokens[..., None],
        np.take_along_axis(dlogits, tokens[..., None], axis=-1) + token_weights[..., None],
        axis=-1,
    )
    per_context = dlogits.sum(axis=(1, 2))  # (B, V)
    g_bias = per_context.sum(axis=0)
    g_weights = per_context.T @ contexts
    g_bigram = np.zeros((V, V))
    np.add.at(g_bigram, _prev_tokens(tokens).ravel(), dlogits.reshape(-1, V))
    return PolicyGrad(g_weights, g_bigram, g_bias)


def _check_context(policy, context):
    ctx = check_vector(context, "context")
    if ctx.shape[0] != policy.ctx_dim:
        raise InvalidInputError(f"context has length {ctx.shape[0]}, policy expects {policy.ctx_dim}")
    return ctx


def score_sequence(policy, context, tokens):
    """Return ``(sequence_logprob, per_token_logprobs)`` for one sequence."""
    ctx = _check_context(policy, context)
    toks = check_tokens(tokens, policy.vocab_size)
    tlp, _ = batch_forward(policy, ctx[None, :], toks[None, None, :])
    per_token = tlp[0, 0]
    return float(per_token.sum()), per_token


def score_gradient(policy, context, tokens):
    """Exact gradient of the sequence log-prob w.r.t. every parameter."""
    ctx = _check_context(policy, context)
    toks = check_tokens(tokens, policy.vocab_size)
    t = toks[None, None, :]
    tlp, probs = batch_forward(policy, ctx[None, :], t)
    return batch_backward(policy, ctx[None, :], t, probs, np.ones_like(tlp))


def rank_chain(policy, context, chain_tokens):
    """Indices of ``chain_tokens`` sorted by descending log-prob, ties by index."""
    if len(chain_tokens) < 2:
        raise InvalidInputError("rank_chain needs at least 2 sequences")
    scores = np.array([score_sequence(policy, context, t)[0] for t in chain_tokens])
    return order_by_score(scores)


def order_by_score(scores):
    scores = np.asarray(scores, dtype=np.float64)
    return [int(i) for i in np.argsort(-scores, kind="stable")]
