"""Reference-based LLM-as-judge caption scoring."""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import astuple, dataclass, fields

import numpy as np

from ..exceptions import InvalidInputError, JudgeParseError
from ..llmgateway.client import JUDGE_TEMPERATURE, CompletionRequest

log = logging.getLogger(__name__)

AXES = ("relevance", "descriptiveness", "temporal_consistency", "fluency")
_LABELLED = {
    "relevance": re.compile(r"relevance\s*[:=]\s*(-?\d+)", re.IGNORECASE),
    "descriptiveness": re.compile(r"descriptiveness\s*[:=]\s*(-?\d+)", re.IGNORECASE),
    "temporal_consistency": re.compile(r"temporal[\s_]*consistency\s*[:=]\s*(-?\d+)", re.IGNORECASE),
    "fluency": re.compile(r"fluency\s*[:=]\s*(-?\d+)", re.IGNORECASE),
}
_INT_RE = re.compile(r"-?\d+")


@dataclass(frozen=True)
class JudgeScore:
    relevance: int
    descriptiveness: int
    temporal_consistency: int
    fluency: int

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, np.integer)) or not 1 <= v <= 10:
                raise InvalidInputError(f"{f.name} must be an integer in [1, 10], got {v!r}")

    def to_record(self):
        return {a: int(getattr(self, a)) for a in AXES}


def parse_judge_reply(text):
    """Four labelled scores, or four bare integers in axis order."""
    text = text or ""
    found = {a: rx.search(text) for a, rx in _LABELLED.items()}
    if all(found.values()):
        values = [int(found[a].group(1)) for a in AXES]
    else:
        ints = _INT_RE.findall(text)
        if len(ints) != 4:
            raise JudgeParseError(f"cannot find four scores in {text[:80]!r}")
        values = [int(x) for x in ints]
    try:
        return JudgeScore(*values)
    except InvalidInputError as exc:
        raise JudgeParseError(str(exc)) from None


def judge_caption(predicted, reference, client, max_attempts=3):
    """Score ``predicted`` against ``reference``; re-asks on unparseable replies."""
    if not predicted or not predicted.strip() or not reference or not reference.strip():
        raise InvalidInputError("judge_caption needs non-empty predicted and reference captions")
    request = CompletionRequest(
        "judge_caption",
        {"reference": reference, "predicted": predicted},
        max_tokens=64,
        temperature=JUDGE_TEMPERATURE,
    )
    last = None
    for attempt in range(max_attempts):
        try:
            return parse_judge_reply(client.complete(request))
        except JudgeParseError as exc:
            last = exc
            log.debug("judge reply unparseable (attempt %d): %s", attempt + 1, exc)
    raise JudgeParseError(f"judge reply unparseable after {max_attempts} attempts: {last}")


def judge_many(pairs, client, concurrency=4, max_attempts=3):
    """Judge ``(predicted, reference)`` pairs concurrently, results in input order."""
    pairs = list(pairs)

    def one(pr):
        return judge_caption(pr[0], pr[1], client, max_attempts)

    if concurrency <= 1:
        return [one(p) for p in pairs]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(one, pairs))


def mean_scores(scores):
    if not scores:
        raise InvalidInputError("no judge scores to average")
    arr = np.array([astuple(s) for s in scores], dtype=np.float64)
    return dict(zip(AXES, arr.mean(axis=0).tolist()))
