"""Ordering accuracy of model scores against ground-truth chain order."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import InvalidInputError


@dataclass(frozen=True)
class RankingAccuracy:
    """``degenerate`` is set when every compared pair was a score tie.

    Ties are resolved by the stable tie-break (lower index first), so tied
    pairs count as correctly ordered; ``tie_count`` says how many there were.
    """

    exact_order_rate: float
    pairwise_rate: float
    n_chains: int
    n_pairs: int
    tie_count: int
    degenerate: bool

    def to_record(self):
        return {
            "exact_order_rate": self.exact_order_rate,
            "pairwise_rate": self.pairwise_rate,
            "n_chains": self.n_chains,
            "n_pairs": self.n_pairs,
            "tie_count": self.tie_count,
            "degenerate": self.degenerate,
        }


def ranking_accuracy_from_scores(score_lists):
    """Accuracy of best-first score lists (index 0 should score highest)."""
    score_lists = [np.asarray(s, dtype=np.float64) for s in score_lists]
    if not score_lists:
        raise InvalidInputError("ranking accuracy needs at least one chain")
    exact = pairs = consistent = ties = 0
    for s in score_lists:
        if s.ndim != 1 or s.size < 2:
            raise InvalidInputError("every chain needs at least 2 scored members")
        if not np.all(np.isfinite(s)):
            raise InvalidInputError("chain scores must be finite")
        i, j = np.triu_indices(s.size, k=1)
        diff = s[i] - s[j]
        n_bad = int(np.count_nonzero(diff < 0))
        pairs += diff.size
        consistent += diff.size - n_bad
        ties += int(np.count_nonzero(diff == 0))
        exact += n_bad == 0
    return RankingAccuracy(
        exact / len(score_lists),
        consistent / pairs,
        len(score_lists),
        pairs,
        ties,
        ties == pairs,
    )


def ranking_accuracy(policy, dataset):
    """Score every chain of ``dataset`` (SynthExample list) with ``policy``."""
    from ..toypolicy.estimator import chain_scores, check_chains

    return ranking_accuracy_from_scores(chain_scores(policy, check_chains(dataset, "dataset")))
