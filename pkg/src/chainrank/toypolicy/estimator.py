"""scikit-learn style front end for training and applying a ToyPolicy."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..exceptions import InvalidInputError
from ..rankloss import LossConfig, Objective
from .data import SynthExample
from .policy import ToyPolicy, batch_forward, order_by_score
from .train import TrainConfig, train


def check_chains(X, name="X"):
    """Validate a list of SynthExample and return it as a list."""
    if isinstance(X, SynthExample):
        raise InvalidInputError(f"{name}: expected a sequence of SynthExample, got a single one")
    X = list(X)
    if not X:
        raise InvalidInputError(f"{name}: empty dataset")
    for i, ex in enumerate(X):
        if not isinstance(ex, SynthExample):
            raise InvalidInputError(f"{name}[{i}] is {type(ex).__name__}, not SynthExample")
    return X


def chain_scores(policy, X):
    """Sequence log-probs, one array per chain (chains may differ in size)."""
    groups = {}
    for i, ex in enumerate(X):
        key = (ex.chain_size, len(ex.chain_tokens[0]))
        if any(len(seq) != key[1] for seq in ex.chain_tokens):
            # ragged chain, score members one by one
            key = ("ragged", i)
        groups.setdefault(key, []).append(i)
    out = [None] * len(X)
    for key, idx in groups.items():
        if key[0] == "ragged":
            ex = X[idx[0]]
            out[idx[0]] = np.array(
                [batch_forward(policy, ex.context[None], np.asarray(s)[None, None])[0].sum() for s in ex.chain_tokens]
            )
            continue
        contexts = np.stack([X[i].context for i in idx])
        tokens = np.stack([np.stack(X[i].chain_tokens) for i in idx])
        seq = batch_forward(policy, contexts, tokens)[0].sum(axis=-1)
        for row, i in zip(seq, idx):
            out[i] = row
    return out


class ChainRanker(BaseEstimator):
    """Learn to rank chain members with one of the ranking objectives.

    ``fit`` trains a ToyPolicy on best-first chains; ``predict`` returns the
    predicted order of each chain; ``score`` is held-out pairwise accuracy.

    Parameters mirror :class:`LossConfig` and :class:`TrainConfig`; ``init_scale``
    is the standard deviation of the random initial parameters, and the frozen
    reference policy is the initial policy. With ``vocab_size=None`` the
    vocabulary is inferred from the largest token id seen by ``fit``.
    """

    def __init__(
        self,
        objective="PL_DPO",
        beta=0.3,
        ntp_weight=0.1,
        learning_rate=1e-2,
        steps=500,
        batch_size=8,
        beta1=0.9,
        beta2=0.999,
        eps=1e-8,
        weight_decay=0.01,
        init_scale=0.01,
        vocab_size=None,
        random_state=0,
    ):
        self.objective = objective
        self.beta = beta
        self.ntp_weight = ntp_weight
        self.learning_rate = learning_rate
        self.steps = steps
        self.batch_size = batch_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.init_scale = init_scale
        self.vocab_size = vocab_size
        self.random_state = random_state

    def _configs(self):
        loss = LossConfig(Objective.parse(self.objective), self.beta, self.ntp_weight)
        tc = TrainConfig(
            self.learning_rate,
            self.steps,
            self.batch_size,
            int(self.random_state),
            self.beta1,
            self.beta2,
            self.eps,
            self.weight_decay,
        )
        return loss, tc

    def fit(self, X, y=None, init_policy=None):
        X = check_chains(X)
        loss, tc = self._configs()
        V = self.vocab_size or 1 + max(int(np.max(seq)) for ex in X for seq in ex.chain_tokens)
        d = X[0].context.shape[0]
        if init_policy is None:
            rng = np.random.default_rng([int(self.random_state), 1])
            init_policy = ToyPolicy.random(V, d, rng, self.init_scale)
        self.reference_ = init_policy.copy()
        self.policy_, self.loss_trace_ = train(init_policy, X, loss, tc)
        self.n_features_in_ = d
        return self

    def decision_function(self, X):
        check_is_fitted(self, "policy_")
        return chain_scores(self.policy_, check_chains(X))

    def predict(self, X):
        return [order_by_score(s) for s in self.decision_function(X)]

    def score(self, X, y=None):
        from ..evalkit.ranking import ranking_accuracy_from_scores

        return ranking_accuracy_from_scores(self.decision_function(X)).pairwise_rate
