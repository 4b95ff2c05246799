"""Error taxonomy and the keyword heuristics that decide applicability."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .._text import WORD_RE, tokenize
from ..exceptions import InvalidInputError, NoApplicableErrorError

COUNT_WORDS = frozenset(
    """one two three four five six seven eight nine ten eleven twelve thirteen fourteen
    fifteen sixteen seventeen eighteen nineteen twenty thirty forty fifty hundred dozen
    several few couple pair both single multiple many numerous once twice first second
    third fourth fifth""".split()
)

TEMPORAL_MARKERS = frozenset(
    """then before after afterwards afterward later earlier while during when until
    finally first next meanwhile subsequently eventually initially once soon""".split()
)

SPATIAL_PREPOSITIONS = frozenset(
    """on under above below behind beside near inside outside between over underneath
    beneath atop across through into onto toward towards around along against left
    right front back top bottom in""".split()
)

CLAUSE_SPLIT_RE = re.compile(r"[,;:]|\b(?:and|but|while|whereas|then)\b", re.IGNORECASE)
SENTENCE_SPLIT_RE = re.compile(r"[.!?]+(?:\s+|$)")


def count_sentences(text):
    return sum(1 for s in SENTENCE_SPLIT_RE.split(text) if WORD_RE.search(s))


def count_clauses(text):
    return sum(1 for c in CLAUSE_SPLIT_RE.split(text) if WORD_RE.search(c))


def _has_count_word(caption):
    return any(tok.isdigit() or tok in COUNT_WORDS for tok in tokenize(caption))


def _has_temporal_structure(caption):
    # A second sentence, or several clauses with at least one temporal marker.
    if count_sentences(caption) >= 2:
        return True
    return count_clauses(caption) >= 2 and any(t in TEMPORAL_MARKERS for t in tokenize(caption))


def _has_spatial_preposition(caption):
    return any(t in SPATIAL_PREPOSITIONS for t in tokenize(caption))


RULES = {
    "always": lambda caption: True,
    "has_count_word": _has_count_word,
    "has_temporal_structure": _has_temporal_structure,
    "has_spatial_preposition": _has_spatial_preposition,
}


@dataclass(frozen=True)
class ErrorType:
    id: str
    description: str
    applicability_rules: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "applicability_rules", tuple(self.applicability_rules))
        unknown = [r for r in self.applicability_rules if r not in RULES]
        if unknown:
            raise InvalidInputError(f"error type {self.id!r}: unknown applicability rules {unknown}")

    def applies_to(self, caption):
        return all(RULES[r](caption) for r in self.applicability_rules)

    def to_record(self):
        return {
            "id": self.id,
            "description": self.description,
            "applicability_rules": list(self.applicability_rules),
        }


_DEFAULT = [
    ("object_substitution", "Replace one object or entity with a different, plausible object.", ()),
    ("attribute_change", "Change an attribute (color, size, material, weather, mood) of something described.", ()),
    ("action_change", "Change an action or motion performed by a subject to a different action.", ()),
    (
        "spatial_relation_change",
        "Change a spatial relation between entities (e.g. on to under, left to right).",
        ("has_spatial_preposition",),
    ),
    (
        "temporal_order_swap",
        "Swap the order in which two events happen.",
        ("has_temporal_structure",),
    ),
    ("count_change", "Change the number of some entity.", ("has_count_word",)),
    ("setting_change", "Change the location, scene or time-of-day setting.", ()),
    ("subject_swap", "Swap which subject performs an action, or who is described.", ()),
]


def default_taxonomy():
    """The built-in 8-type error taxonomy."""
    return [ErrorType(i, d, r) for i, d, r in _DEFAULT]


def validate_taxonomy(taxonomy):
    ids = [t.id for t in taxonomy]
    if len(set(ids)) != len(ids):
        raise InvalidInputError("error type ids must be unique")
    if not ids:
        raise InvalidInputError("taxonomy is empty")
    return list(taxonomy)


def load_taxonomy(path):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return validate_taxonomy(
        [ErrorType(d["id"], d.get("description", ""), d.get("applicability_rules", ())) for d in data]
    )


def save_taxonomy(path, taxonomy):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([t.to_record() for t in taxonomy], fh, indent=2)
        fh.write("\n")


def applicable_errors(caption, taxonomy=None):
    """Error types whose applicability rules all hold for ``caption``."""
    if not isinstance(caption, str) or not caption.strip():
        raise InvalidInputError("caption must be a non-empty string")
    taxonomy = default_taxonomy() if taxonomy is None else taxonomy
    return [t for t in taxonomy if t.applies_to(caption)]


def sample_error(applicable, rng, weights=None):
    """Draw one error type, uniformly unless ``weights`` (id -> weight) is given.

    Types missing from ``weights`` keep weight 1; zero-weight types are never drawn.
    """
    applicable = list(applicable)
    if not applicable:
        raise NoApplicableErrorError("no applicable error types to sample from")
    if weights is None:
        return applicable[int(rng.integers(len(applicable)))]
    w = np.array([float(weights.get(t.id, 1.0)) for t in applicable])
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidInputError("error-type weights must be finite and non-negative")
    if w.sum() <= 0:
        raise NoApplicableErrorError("all applicable error types have zero weight")
    return applicable[int(rng.choice(len(applicable), p=w / w.sum()))]
