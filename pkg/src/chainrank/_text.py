"""Word tokenization shared by the heuristics, the mock backend and metrics."""

import re

WORD_RE = re.compile(r"[A-Za-z0-9]+(?:'[A-Za-z]+)?")
CHANGE_RE = re.compile(r"'([^']*)'\s*->\s*'([^']*)'")


def tokenize(text):
    return [m.group(0).lower() for m in WORD_RE.finditer(text)]


def word_spans(text):
    return [(m.start(), m.end(), m.group(0)) for m in WORD_RE.finditer(text)]


def parse_change(summary):
    """``("old", "new")`` from a summary like ``"'winter' -> 'sunny'"``, else None."""
    m = CHANGE_RE.search(summary or "")
    return (m.group(1), m.group(2)) if m else None
