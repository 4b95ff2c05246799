"""Scoring math for on-policy preference data: RLAIF-V F1 and response comparison."""

from __future__ import annotations

import enum
import itertools
from collections import Counter
from dataclasses import dataclass

from ..exceptions import InvalidInputError, ParseError
from ..llmgateway.client import JUDGE_TEMPERATURE, CompletionRequest


class Verdict(str, enum.Enum):
    FIRST = "FIRST"
    SECOND = "SECOND"
    TIE = "TIE"


@dataclass(frozen=True)
class PairwiseVerdict:
    video_id: str
    i: int
    j: int
    verdict: Verdict

    def __post_init__(self):
        if self.i == self.j:
            raise InvalidInputError("a pairwise verdict needs two different responses")
        object.__setattr__(self, "verdict", Verdict(self.verdict))


@dataclass(frozen=True)
class PreferencePair:
    video_id: str
    chosen: int
    rejected: int


def rlaifv_f1(precision, recall):
    """Harmonic mean of claim precision and recall; 0 when both are 0."""
    for name, v in (("precision", precision), ("recall", recall)):
        if not 0.0 <= v <= 1.0:
            raise InvalidInputError(f"{name} must lie in [0, 1], got {v!r}")
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def candidate_pairs(n_responses):
    """All unordered index pairs ``(i, j)`` with ``i < j``."""
    if n_responses < 2:
        raise InvalidInputError("need at least 2 responses to form pairs")
    return list(itertools.combinations(range(n_responses), 2))


def compare_responses(video_id, i, j, first, second, reference, client):
    """Ask the judge which of two responses better matches ``reference``."""
    text = client.complete(
        CompletionRequest(
            "compare_responses",
            {"reference": reference, "first": first, "second": second},
            max_tokens=8,
            temperature=JUDGE_TEMPERATURE,
        )
    )
    word = (text or "").strip().split()
    word = word[0].strip(".,!:;\"'").upper() if word else ""
    if word not in Verdict.__members__:
        raise ParseError(f"comparison judge replied {text[:60]!r}")
    return PairwiseVerdict(video_id, i, j, Verdict(word))


def build_comparison_pairs(verdicts, per_video_quota, rng):
    """Preference pairs from judged comparisons, exactly ``per_video_quota`` per kept video.

    TIE verdicts are dropped; videos left with fewer non-tie verdicts than
    the quota are skipped. Returns ``(pairs, report)``.
    """
    if per_video_quota < 1:
        raise InvalidInputError("per_video_quota must be >= 1")
    by_video = {}
    for v in verdicts:
        by_video.setdefault(v.video_id, []).append(v)
    pairs, kept, skipped = [], [], []
    for vid, vs in by_video.items():
        decisive = [v for v in vs if v.verdict is not Verdict.TIE]
        if len(decisive) < per_video_quota:
            skipped.append(vid)
            continue
        kept.append(vid)
        idx = sorted(int(k) for k in rng.choice(len(decisive), per_video_quota, replace=False))
        for k in idx:
            v = decisive[k]
            if v.verdict is Verdict.FIRST:
                pairs.append(PreferencePair(vid, v.i, v.j))
            else:
                pairs.append(PreferencePair(vid, v.j, v.i))
    report = {
        "videos": len(by_video),
        "kept": len(kept),
        "skipped": len(skipped),
        "skipped_ids": skipped,
        "ties_dropped": sum(v.verdict is Verdict.TIE for v in verdicts),
        "pairs": len(pairs),
    }
    return pairs, report


def head_to_head(preferences):
    """Win rates ``(rate_A, rate_B)`` from a list of "A"/"B" preferences."""
    prefs = [str(p).upper() for p in preferences]
    if not prefs:
        raise InvalidInputError("head_to_head needs at least one preference")
    bad = set(prefs) - {"A", "B"}
    if bad:
        raise InvalidInputError(f"preferences must be 'A' or 'B', got {sorted(bad)}")
    counts = Counter(prefs)
    return counts["A"] / len(prefs), counts["B"] / len(prefs)
