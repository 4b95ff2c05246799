"""Deterministic in-process backends for tests and offline runs.

A mock backend is any object with ``send(call) -> str``. :func:`mock_script`
builds one that replays behaviors in order, cycling; :func:`faithful_mock`
builds one that answers every built-in template with rule-based output that
is faithful to how the chain data was constructed.
"""

from __future__ import annotations

import json
import re
import threading
import time

from .._text import parse_change, tokenize, word_spans
from ..exceptions import ConfigurationError
from .client import BackendHTTPError, BackendUnavailable

NUMBERED_RE = re.compile(r"^\s*(\d+)\.\s?(.*)$")


def numbered(items):
    """Format ``items`` as ``1. a`` lines, the layout the mock parses back."""
    return "\n".join(f"{i}. {item}" for i, item in enumerate(items, 1))


def parse_numbered(text):
    out = []
    for line in (text or "").splitlines():
        m = NUMBERED_RE.match(line)
        if m:
            out.append(m.group(2).strip())
    return out


# ---------------------------------------------------------------- behaviors


class Text:
    """Return a fixed string."""

    def __init__(self, text):
        self.text = text

    def __call__(self, call):
        return self.text


class Echo:
    """Return the rendered user message."""

    def __call__(self, call):
        return call.user


class Reject:
    def __init__(self, reason="error type not applicable"):
        self.reason = reason

    def __call__(self, call):
        return json.dumps({"status": "reject", "reason": self.reason})


class Fail:
    """Raise an HTTP error (``status``) or a connection failure (``status=None``)."""

    def __init__(self, status=500, body="simulated failure"):
        self.status = status
        self.body = body

    def __call__(self, call):
        if self.status is None:
            raise BackendUnavailable(self.body)
        raise BackendHTTPError(self.status, self.body)


class Delay:
    """Sleep, then defer to another behavior (faithful dispatch by default)."""

    def __init__(self, seconds, then=None):
        self.seconds = seconds
        self.then = then or Faithful()

    def __call__(self, call):
        time.sleep(self.seconds)
        return self.then(call)


class Mutate:
    """Rule-based single-word mutation answering the mutation template."""

    def __call__(self, call):
        b = call.bindings
        result = mutate_text(b["caption"], b["error_type"], b.get("prior_changes", ""))
        if result is None:
            return json.dumps({"status": "reject", "reason": "nothing to change for this error type"})
        caption, summary = result
        return json.dumps({"status": "ok", "caption": caption, "summary": summary})


class Faithful:
    """Dispatch on template id to the rule-based responders below."""

    def __call__(self, call):
        handler = _HANDLERS.get(call.template_id)
        if handler is None:
            raise ConfigurationError(f"faithful mock has no rule for template {call.template_id!r}")
        return handler(call.bindings)


_NAMED = {
    "echo": Echo,
    "reject": Reject,
    "mutate": Mutate,
    "fail": Fail,
    "faithful": Faithful,
}


def _coerce(behavior):
    if callable(behavior):
        return behavior
    if isinstance(behavior, str):
        return _NAMED[behavior]() if behavior in _NAMED else Text(behavior)
    raise ConfigurationError(f"unsupported mock behavior {behavior!r}")


class MockBackend:
    """Replays behaviors in order, cycling, and records call statistics.

    ``calls`` holds every RenderedCall received; ``max_concurrent`` is the
    peak number of ``send`` calls observed in flight at once.
    """

    def __init__(self, behaviors):
        behaviors = [_coerce(b) for b in behaviors]
        if not behaviors:
            raise ConfigurationError("mock script must contain at least one behavior")
        self.behaviors = behaviors
        self.calls = []
        self.max_concurrent = 0
        self._active = 0
        self._next = 0
        self._lock = threading.Lock()

    def send(self, call):
        with self._lock:
            behavior = self.behaviors[self._next % len(self.behaviors)]
            self._next += 1
            self.calls.append(call)
            self._active += 1
            self.max_concurrent = max(self.max_concurrent, self._active)
        try:
            return behavior(call)
        finally:
            with self._lock:
                self._active -= 1


def mock_script(behaviors):
    """Mock backend replaying ``behaviors`` in order, cycling.

    Each behavior is a callable taking a RenderedCall, one of the names
    ``echo``/``reject``/``mutate``/``fail``/``faithful``, or any other
    string, which is returned verbatim.
    """
    return MockBackend(list(behaviors))


def faithful_mock():
    return MockBackend([Faithful()])


# ------------------------------------------------------------ mutation rules

LEXICON = {
    "object_substitution": {
        "truck": "bus", "bus": "truck", "car": "bicycle", "bicycle": "motorcycle", "dog": "cat",
        "cat": "rabbit", "ball": "frisbee", "table": "bench", "cup": "bottle", "bottle": "cup",
        "phone": "book", "book": "phone", "guitar": "violin", "chair": "stool", "tree": "pole",
        "box": "bag", "bag": "box", "knife": "spoon", "spoon": "fork", "door": "window",
        "window": "door", "hat": "scarf", "horse": "cow", "boat": "raft", "vehicle": "trailer",
        "snowmobile": "tractor", "laptop": "tablet", "pen": "pencil", "plate": "bowl",
    },
    "attribute_change": {
        "winter": "sunny", "harsh": "easy", "red": "blue", "blue": "green", "green": "yellow",
        "yellow": "purple", "black": "white", "white": "black", "big": "small", "small": "large",
        "large": "tiny", "old": "new", "new": "old", "young": "elderly", "happy": "angry",
        "snowy": "dry", "wet": "dry", "bright": "dim", "dark": "bright", "tall": "short",
        "long": "short", "heavy": "light", "wooden": "metal", "sunny": "rainy", "cold": "hot",
        "hot": "cold", "powerful": "weak", "empty": "crowded", "crowded": "empty", "fast": "slow",
        "slow": "fast", "loud": "quiet", "quiet": "loud",
    },
    "action_change": {
        "runs": "walks", "walks": "runs", "running": "walking", "walking": "running",
        "sits": "stands", "stands": "sits", "jumps": "falls", "opens": "closes",
        "closes": "opens", "picks": "drops", "throws": "catches", "catches": "throws",
        "eats": "drinks", "drinks": "eats", "drives": "parks", "navigates": "abandons",
        "plays": "watches", "talks": "sings", "sings": "talks", "leaves": "arrives",
        "arrives": "leaves", "pushes": "pulls", "pulls": "pushes", "holds": "drops",
        "climbs": "descends", "rides": "pushes", "cuts": "folds", "pours": "spills",
        "moving": "resting", "moves": "rests", "speeding": "crawling",
    },
    "spatial_relation_change": {
        "on": "under", "under": "on", "above": "below", "below": "above", "behind": "beside",
        "beside": "behind", "near": "behind", "inside": "outside", "outside": "inside",
        "left": "right", "right": "left", "over": "under", "into": "onto", "onto": "into",
        "top": "bottom", "bottom": "top", "front": "back", "back": "front", "in": "beside",
        "across": "along", "along": "across", "towards": "past", "toward": "past",
        "underneath": "atop", "beneath": "atop", "atop": "beneath", "through": "around",
        "around": "through", "between": "beside", "against": "beside",
    },
    "temporal_order_swap": {
        "then": "before", "before": "after", "after": "before", "first": "finally",
        "finally": "first", "later": "earlier", "earlier": "later", "while": "after",
        "during": "after", "when": "before", "next": "previously", "afterwards": "beforehand",
        "until": "since", "initially": "eventually", "eventually": "initially",
    },
    "count_change": {
        "one": "two", "two": "three", "three": "four", "four": "five", "five": "six",
        "six": "seven", "seven": "eight", "eight": "nine", "nine": "ten", "ten": "eleven",
        "several": "two", "few": "many", "many": "few", "single": "double", "both": "three",
        "pair": "trio", "multiple": "single", "twice": "once", "once": "twice", "couple": "dozen",
        "dozen": "couple", "numerous": "few", "first": "second", "second": "third",
        "third": "fourth", "eleven": "twelve", "twelve": "thirteen", "twenty": "thirty",
        "hundred": "thousand",
    },
    "setting_change": {
        "winter": "summer", "summer": "winter", "day": "night", "night": "day",
        "indoor": "outdoor", "outdoor": "indoor", "indoors": "outdoors", "outdoors": "indoors",
        "street": "beach", "beach": "street", "park": "garden", "kitchen": "garage",
        "forest": "desert", "desert": "forest", "city": "village", "village": "city",
        "snow": "sand", "industrial": "residential", "morning": "evening", "evening": "morning",
        "room": "yard", "road": "river", "field": "parkland", "environments": "stadiums",
        "environment": "stadium", "office": "library", "mountain": "valley", "lake": "pond",
    },
    "subject_swap": {
        "man": "woman", "woman": "man", "boy": "girl", "girl": "boy", "he": "she", "she": "he",
        "his": "her", "her": "his", "person": "child", "child": "adult", "people": "children",
        "men": "women", "women": "men", "player": "referee", "driver": "passenger",
        "teacher": "student", "student": "teacher", "chef": "waiter", "rider": "spectator",
    },
}

FALLBACK_POOL = {
    "object_substitution": ["lamp", "umbrella", "kettle", "ladder", "basket"],
    "attribute_change": ["striped", "rusty", "glossy", "muddy", "faded"],
    "action_change": ["waves", "stumbles", "pauses", "spins", "kneels"],
    "spatial_relation_change": ["beside", "behind", "under", "above"],
    "temporal_order_swap": ["before", "after", "later", "earlier"],
    "count_change": ["three", "five", "seven", "nine"],
    "setting_change": ["harbor", "meadow", "warehouse", "canyon", "rooftop"],
    "subject_swap": ["stranger", "toddler", "soldier", "farmer", "tourist"],
}

STOPWORDS = frozenset(
    """a an the and or but of to is are was were be been being it its this that these those
    with for as at by from up down out off so than very just also there their they them
    has have had do does did can could will would should may might must not no yes""".split()
)


def _case_like(template, word):
    if template.isupper() and len(template) > 1:
        return word.upper()
    if template[:1].isupper():
        return word[:1].upper() + word[1:]
    return word


def _protected(prior_changes):
    words = set()
    for line in (prior_changes or "").splitlines():
        change = parse_change(line)
        if change:
            words.update(tokenize(change[1]))
    return words


def _count_replacement(token):
    return str(int(token) + 1) if token.isdigit() else None


def mutate_text(caption, error_type, prior_changes=""):
    """Single-word edit of ``caption`` for ``error_type``.

    Returns ``(new_caption, "'old' -> 'new'")`` or None when no word can be
    changed. Replacements are single words, so positions stay aligned with
    the seed caption. Words introduced by earlier edits (the right-hand sides in
    ``prior_changes``) are never touched, so earlier errors survive.
    """
    protected = _protected(prior_changes)
    spans = [s for s in word_spans(caption) if s[2].lower() not in protected]
    lexicon = LEXICON.get(error_type, {})
    choice = None
    for start, end, word in spans:
        low = word.lower()
        new = lexicon.get(low)
        if new is None and error_type == "count_change":
            new = _count_replacement(low)
        if new is not None and new != low:
            choice = (start, end, word, new)
            break
    if choice is None:
        candidates = [
            s for s in spans if s[2].isalpha() and len(s[2]) >= 4 and s[2].lower() not in STOPWORDS
        ]
        pool = FALLBACK_POOL.get(error_type, FALLBACK_POOL["object_substitution"])
        if not candidates:
            return None
        n_prior = len([ln for ln in (prior_changes or "").splitlines() if parse_change(ln)])
        start, end, word = candidates[(7 * n_prior) % len(candidates)]
        present = set(tokenize(caption))
        new = next((p for p in pool if p != word.lower() and p not in present), None)
        if new is None:
            return None
        choice = (start, end, word, new)
    start, end, word, new = choice
    new = _case_like(word, new)
    return caption[:start] + new + caption[end:], f"'{word}' -> '{new}'"


# ---------------------------------------------------------- other templates


def _recaption(b):
    parts = [p.strip().rstrip(".!?").strip() for p in parse_numbered(b["raw_captions"])]
    parts = [p[:1].upper() + p[1:] for p in parts if p]
    return ". ".join(parts) + "."


def _mismatches(text, reference):
    a, r = tokenize(text), tokenize(reference)
    return sum(x != y for x, y in zip(a, r)) + abs(len(a) - len(r))


def _judge_order(b):
    worse = _mismatches(b["later"], b["reference"]) > _mismatches(b["earlier"], b["reference"])
    return "yes" if worse else "no"


def _judge_caption(b):
    from ..evalkit.ngram import rouge_l

    score = rouge_l(b["predicted"], b["reference"])
    relevance = 1 + round(9 * score.value)
    descriptive = 1 + round(9 * score.recall)
    ref, pred = tokenize(b["reference"]), tokenize(b["predicted"])
    in_order = sum(x == y for x, y in zip(pred, ref)) / max(len(ref), 1)
    temporal = 1 + round(9 * in_order)
    fluency = 10 if pred else 1
    return (
        f"Relevance: {relevance}\nDescriptiveness: {descriptive}\n"
        f"Temporal Consistency: {temporal}\nFluency: {fluency}"
    )


def _changed_words(changes):
    out = []
    for line in parse_numbered(changes):
        change = parse_change(line)
        out.append(change[1] if change else line.split()[-1] if line.split() else "object")
    return out


def _mcq(b):
    captions = parse_numbered(b["captions"])
    return json.dumps({"question": "Which description matches the video?", "answers": captions})


def _article(word):
    return "an" if word[:1].lower() in "aeiou" else "a"


def _ynq(b):
    items = _changed_words(b["changes"])
    return json.dumps({"questions": [f"Is there {_article(w)} {w} in the video?" for w in items]})


def _improve(b):
    return b["reference"]


def _compare(b):
    from ..evalkit.ngram import rouge_l

    first = rouge_l(b["first"], b["reference"]).value
    second = rouge_l(b["second"], b["reference"]).value
    if first > second:
        return "FIRST"
    return "SECOND" if second > first else "TIE"


_HANDLERS = {
    "recaption_seed": _recaption,
    "mutate_caption": lambda b: Mutate()(_Bindings(b)),
    "judge_caption": _judge_caption,
    "judge_order": _judge_order,
    "chain_to_mcq": _mcq,
    "chain_to_ynq": _ynq,
    "improve_response": _improve,
    "compare_responses": _compare,
}


class _Bindings:
    # Lets Mutate, which expects a RenderedCall, run on a bare bindings dict.
    def __init__(self, bindings):
        self.bindings = bindings
