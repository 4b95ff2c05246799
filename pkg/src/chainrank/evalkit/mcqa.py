"""Multiple-choice answering by letter log-probability."""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from ..exceptions import InvalidInputError


def letter_token(letter):
    """Token id of a choice letter in the toy vocabulary: A -> 0, B -> 1, ..."""
    if len(letter) != 1 or not letter.isalpha():
        raise InvalidInputError(f"choice letters must be single characters, got {letter!r}")
    return ord(letter.upper()) - ord("A")


def letter_logprobs(policy, context, choice_letters, prompt):
    """log p(letter | prompt, context) for each letter under a ToyPolicy."""
    from ..toypolicy.policy import score_sequence

    prompt = [int(t) for t in prompt]
    out = []
    for letter in choice_letters:
        _, per_token = score_sequence(policy, context, prompt + [letter_token(letter)])
        out.append(float(per_token[-1]))
    return np.array(out)


def mcqa_answer(policy, context, choice_letters, prompt=()):
    """Letter with the highest log-prob; ties go to the earliest letter.

    ``policy`` is either a mapping letter -> log-prob (context and prompt are
    then ignored) or a ToyPolicy scoring each letter after ``prompt`` tokens.
    """
    letters = list(choice_letters)
    if len(letters) < 2:
        raise InvalidInputError("mcqa_answer needs at least 2 choice letters")
    if isinstance(policy, Mapping):
        try:
            scores = np.array([float(policy[l]) for l in letters])
        except KeyError as exc:
            raise InvalidInputError(f"no log-prob for letter {exc.args[0]!r}") from None
    else:
        scores = letter_logprobs(policy, context, letters, prompt)
    return letters[int(np.argmax(scores))]


def mcqa_accuracy(predicted, correct):
    predicted, correct = list(predicted), list(correct)
    if not correct or len(predicted) != len(correct):
        raise InvalidInputError("mcqa_accuracy needs equal-length, non-empty answer lists")
    return sum(p == c for p, c in zip(predicted, correct)) / len(correct)
