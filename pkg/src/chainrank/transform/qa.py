"""Reformat caption chains as MCQ items and yes/no question chains.

YNQ chains feed a ranking objective with the fixed response ``"no"`` scored
against each question as the prompt, in list order: the prompt varies while
the response stays fixed, the inverse of caption ranking.
"""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from .._io import read_jsonl, write_jsonl
from ..chaingen.generate import format_changes, parse_json_reply
from ..exceptions import InvalidInputError, ParseError
from ..llmgateway.client import GENERATION_TEMPERATURE, CompletionRequest
from ..llmgateway.mock import numbered

YNQ_TARGET = "no"


@dataclass(frozen=True)
class McqItem:
    """``quality_rank[p]`` is the chain rank (0 = best) of the choice shown at position ``p``."""

    video_id: str
    question: str
    choices: tuple  # ((letter, text), ...)
    quality_rank: tuple

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple((str(l), str(t)) for l, t in self.choices))
        object.__setattr__(self, "quality_rank", tuple(int(r) for r in self.quality_rank))
        letters = [l for l, _ in self.choices]
        if len(set(letters)) != len(letters):
            raise InvalidInputError("MCQ letters must be unique")
        if sorted(self.quality_rank) != list(range(len(self.choices))):
            raise InvalidInputError("quality_rank must be a permutation of the choice positions")

    def to_record(self):
        return {
            "video_id": self.video_id,
            "question": self.question,
            "choices": [[l, t] for l, t in self.choices],
            "quality_rank": list(self.quality_rank),
        }

    @classmethod
    def from_record(cls, rec):
        return cls(rec["video_id"], rec["question"], rec["choices"], rec["quality_rank"])


@dataclass(frozen=True)
class YnqChain:
    """Yes/no questions ordered most-erroneous-first, all with target ``"no"``.

    ``caption_ranks[i]`` is the chain rank of the caption behind ``questions[i]``.
    """

    video_id: str
    questions: tuple
    target_response: str = YNQ_TARGET
    caption_ranks: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "questions", tuple(self.questions))
        object.__setattr__(self, "caption_ranks", tuple(int(r) for r in self.caption_ranks))

    def to_record(self):
        return {
            "video_id": self.video_id,
            "questions": list(self.questions),
            "target_response": self.target_response,
            "caption_ranks": list(self.caption_ranks),
        }

    @classmethod
    def from_record(cls, rec):
        return cls(
            rec["video_id"],
            rec["questions"],
            rec.get("target_response", YNQ_TARGET),
            rec.get("caption_ranks", ()),
        )


def _check_chain(chain):
    if len(chain.captions) < 2:
        raise InvalidInputError(f"chain {chain.video_id!r} needs at least 2 captions")
    if len(chain.captions) > len(string.ascii_uppercase):
        raise InvalidInputError("MCQ supports at most 26 choices")


def _bindings(chain):
    return {"captions": numbered(chain.captions), "changes": format_changes(chain.steps)}


def chain_to_mcq(chain, client, rng=None, shuffle=True, temperature=GENERATION_TEMPERATURE):
    """One MCQ whose answers, one per caption, decrease in quality along the chain.

    Presentation order is a seeded shuffle (``rng``) unless ``shuffle`` is
    False; the source chain is left untouched.
    """
    _check_chain(chain)
    data = parse_json_reply(
        client.complete(CompletionRequest("chain_to_mcq", _bindings(chain), temperature=temperature))
    )
    question, answers = data.get("question"), data.get("answers")
    if not isinstance(question, str) or not question.strip():
        raise ParseError("MCQ reply has no question")
    n = len(chain.captions)
    if not isinstance(answers, list) or len(answers) != n or not all(isinstance(a, str) for a in answers):
        raise ParseError(f"MCQ reply must list exactly {n} string answers")
    if shuffle:
        rng = np.random.default_rng() if rng is None else rng
        perm = [int(p) for p in rng.permutation(n)]
    else:
        perm = list(range(n))
    letters = string.ascii_uppercase[:n]
    choices = [(letters[p], answers[perm[p]]) for p in range(n)]
    return McqItem(chain.video_id, question.strip(), choices, perm)


def chain_to_ynq(chain, client, temperature=GENERATION_TEMPERATURE):
    """One yes/no question per erroneous caption, worst caption first."""
    _check_chain(chain)
    data = parse_json_reply(
        client.complete(CompletionRequest("chain_to_ynq", _bindings(chain), temperature=temperature))
    )
    questions = data.get("questions")
    n = len(chain.captions)
    if not isinstance(questions, list) or len(questions) != n - 1 or not all(
        isinstance(q, str) and q.strip() for q in questions
    ):
        raise ParseError(f"YNQ reply must list exactly {n - 1} questions")
    return YnqChain(
        chain.video_id,
        [q.strip() for q in reversed(questions)],
        YNQ_TARGET,
        list(range(n - 1, 0, -1)),
    )


def mcq_rank_target(item):
    """Choice letters ordered best-first."""
    order = np.argsort(item.quality_rank, kind="stable")
    return [item.choices[int(p)][0] for p in order]


def write_mcq(path, items):
    write_jsonl(path, [i.to_record() for i in items])


def read_mcq(path):
    return [McqItem.from_record(r) for r in read_jsonl(path)]


def write_ynq(path, items):
    write_jsonl(path, [i.to_record() for i in items])


def read_ynq(path):
    return [YnqChain.from_record(r) for r in read_jsonl(path)]
