"""LLM-backed chain generation: recaptioning, mutation and the chain loop."""

from __future__ import annotations

import difflib
import hashlib
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .._text import tokenize
from ..exceptions import InvalidInputError, NoApplicableErrorError, ParseError
from ..llmgateway.client import GENERATION_TEMPERATURE, CompletionRequest
from ..llmgateway.mock import numbered
from .chain import INDEPENDENT_FLAG, TRUNCATED_FLAG, CaptionChain, CaptionSource, Step
from .taxonomy import applicable_errors, default_taxonomy, sample_error

log = logging.getLogger(__name__)

JSON_OBJECT_RE = re.compile(r"\{.*\}", re.DOTALL)


@dataclass(frozen=True)
class GenerationConfig:
    """Knobs for chain generation.

    ``max_resamples`` bounds how many fresh error types are tried after a
    rejection before the chain is truncated. Seeds with a single caption of
    at least ``min_seed_words`` words skip recaptioning when ``passthrough``
    is set.
    """

    max_resamples: int = 3
    error_weights: dict | None = None
    passthrough: bool = True
    min_seed_words: int = 8
    temperature: float = GENERATION_TEMPERATURE
    max_tokens: int = 1024

    def __post_init__(self):
        if self.max_resamples < 0:
            raise InvalidInputError("max_resamples must be >= 0")
        if self.min_seed_words < 0:
            raise InvalidInputError("min_seed_words must be >= 0")


@dataclass(frozen=True)
class Mutation:
    caption: str
    summary: str
    error_type: str


@dataclass(frozen=True)
class Rejection:
    error_type: str
    reason: str


@dataclass(frozen=True)
class SeedCaption:
    text: str
    source: CaptionSource


def format_meta(video_meta):
    if video_meta is None or video_meta == "":
        return "(none)"
    if isinstance(video_meta, str):
        return video_meta
    return json.dumps(video_meta, sort_keys=True)


def format_changes(steps):
    if not steps:
        return "(none)"
    return numbered(f"{s.error_type}: {s.summary}" for s in steps)


def diff_summary(old, new):
    """``'old words' -> 'new words'`` for the first differing token run."""
    a, b = old.split(), new.split()
    for tag, i1, i2, j1, j2 in difflib.SequenceMatcher(a=a, b=b, autojunk=False).get_opcodes():
        if tag != "equal":
            return f"'{' '.join(a[i1:i2])}' -> '{' '.join(b[j1:j2])}'"
    return "'' -> ''"


def parse_json_reply(text):
    m = JSON_OBJECT_RE.search(text or "")
    if not m:
        raise ParseError(f"expected a JSON object, got {text[:120]!r}")
    try:
        data = json.loads(m.group(0))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in reply: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ParseError("reply JSON is not an object")
    return data


def recaption_seed(raw_captions, video_meta, client, passthrough=False, min_words=8, config=None):
    """Merge human captions into one detailed seed caption.

    With ``passthrough`` a single caption of at least ``min_words`` words is
    returned unchanged as GROUND_TRUTH; otherwise the backend rewrites the
    captions and the result is RECAPTIONED.
    """
    raw = [c for c in (raw_captions or []) if isinstance(c, str) and c.strip()]
    if not raw:
        raise InvalidInputError("recaption_seed needs at least one non-empty caption")
    if passthrough and len(raw) == 1 and len(tokenize(raw[0])) >= min_words:
        return SeedCaption(raw[0], CaptionSource.GROUND_TRUTH)
    config = config or GenerationConfig()
    text = client.complete(
        CompletionRequest(
            "recaption_seed",
            {"raw_captions": numbered(raw), "video_meta": format_meta(video_meta)},
            max_tokens=config.max_tokens,
            temperature=config.temperature,
        )
    ).strip()
    if not text:
        raise ParseError("recaptioning returned an empty caption")
    return SeedCaption(text, CaptionSource.RECAPTIONED)


def mutate_caption(chain_so_far, error_type, video_meta, client, config=None, base_index=None):
    """Ask the backend to add one ``error_type`` error to the latest caption.

    Returns a :class:`Mutation`, or a :class:`Rejection` when the backend
    declines or hands back the caption unchanged. ``base_index`` selects a
    caption other than the last (independent negatives mutate the seed).
    """
    config = config or GenerationConfig()
    idx = len(chain_so_far.captions) - 1 if base_index is None else base_index
    caption = chain_so_far.captions[idx]
    prior = [] if chain_so_far.independent else chain_so_far.steps[:idx]
    text = client.complete(
        CompletionRequest(
            "mutate_caption",
            {
                "video_meta": format_meta(video_meta),
                "caption": caption,
                "prior_changes": format_changes(prior),
                "error_type": error_type.id,
                "error_description": error_type.description,
            },
            max_tokens=config.max_tokens,
            temperature=config.temperature,
        )
    )
    data = parse_json_reply(text)
    status = str(data.get("status", "")).lower()
    if status == "reject":
        return Rejection(error_type.id, str(data.get("reason", "")))
    if status != "ok":
        raise ParseError(f"mutation reply has unknown status {data.get('status')!r}")
    new = data.get("caption")
    if not isinstance(new, str) or not new.strip():
        raise ParseError("mutation reply has no caption")
    new = new.strip()
    if new == caption:
        return Rejection(error_type.id, "no-op mutation")
    summary = data.get("summary")
    if not isinstance(summary, str) or not summary.strip():
        summary = diff_summary(caption, new)
    return Mutation(new, summary.strip(), error_type.id)


def _mutate_with_resamples(chain, base_caption, video_meta, taxonomy, config, client, rng, step, base_index=None):
    """One successful mutation or None after the resample budget; rejections go to ``chain.flags``."""
    applicable = applicable_errors(base_caption, taxonomy)
    tried = set()
    for _ in range(config.max_resamples + 1):
        fresh = [t for t in applicable if t.id not in tried]
        try:
            et = sample_error(fresh, rng, config.error_weights)
        except NoApplicableErrorError:
            return None
        result = mutate_caption(chain, et, video_meta, client, config, base_index=base_index)
        if isinstance(result, Mutation):
            return result
        tried.add(et.id)
        chain.flags.append(f"rejected:{et.id}@{step}")
    return None


def generate_chain(
    seed_caption,
    video_meta,
    chain_len,
    taxonomy=None,
    config=None,
    client=None,
    rng=None,
    video_id="",
    source=CaptionSource.GROUND_TRUTH,
):
    """Grow ``[seed]`` by ``chain_len`` error-conditioned mutations.

    Each step filters the taxonomy by the current caption, samples a type
    and mutates. Rejections are resampled with fresh types up to
    ``config.max_resamples`` times, after which the chain is truncated and
    flagged ``truncated``.
    """
    if chain_len < 1:
        raise InvalidInputError("chain_len must be >= 1")
    if not isinstance(seed_caption, str) or not seed_caption.strip():
        raise InvalidInputError("seed caption must be a non-empty string")
    if client is None:
        raise InvalidInputError("generate_chain needs a client")
    taxonomy = default_taxonomy() if taxonomy is None else taxonomy
    config = config or GenerationConfig()
    rng = np.random.default_rng() if rng is None else rng
    chain = CaptionChain(video_id, [seed_caption], [], source, [])
    for step in range(chain_len):
        result = _mutate_with_resamples(
            chain, chain.captions[-1], video_meta, taxonomy, config, client, rng, step
        )
        if result is None:
            chain.flags.append(TRUNCATED_FLAG)
            log.info("chain %s truncated at %d captions", video_id, len(chain.captions))
            break
        chain.captions.append(result.caption)
        chain.steps.append(Step(result.error_type, result.summary))
    return chain


def generate_independent_negatives(
    seed_caption,
    video_meta,
    count,
    taxonomy=None,
    config=None,
    client=None,
    rng=None,
    video_id="",
    source=CaptionSource.GROUND_TRUTH,
):
    """Seed followed by ``count`` independent single-error mutations of it.

    Negatives may coincide with each other. A negative whose resample budget
    runs out is dropped and the record is flagged ``truncated``.
    """
    if count < 1:
        raise InvalidInputError("count must be >= 1")
    if not isinstance(seed_caption, str) or not seed_caption.strip():
        raise InvalidInputError("seed caption must be a non-empty string")
    if client is None:
        raise InvalidInputError("generate_independent_negatives needs a client")
    taxonomy = default_taxonomy() if taxonomy is None else taxonomy
    config = config or GenerationConfig()
    rng = np.random.default_rng() if rng is None else rng
    chain = CaptionChain(video_id, [seed_caption], [], source, [INDEPENDENT_FLAG])
    for k in range(count):
        result = _mutate_with_resamples(
            chain, seed_caption, video_meta, taxonomy, config, client, rng, k, base_index=0
        )
        if result is None:
            if TRUNCATED_FLAG not in chain.flags:
                chain.flags.append(TRUNCATED_FLAG)
            continue
        chain.captions.append(result.caption)
        chain.steps.append(Step(result.error_type, result.summary))
    return chain


def chain_rng(seed, video_id):
    """Per-chain generator derived from the global seed and the video id."""
    digest = hashlib.sha256(str(video_id).encode("utf-8")).digest()
    return np.random.default_rng([int(seed), int.from_bytes(digest[:8], "little")])


@dataclass
class GenerationReport:
    attempted: int = 0
    completed: int = 0
    truncated: int = 0
    rejections: int = 0
    error_type_counts: dict = field(default_factory=dict)

    def add(self, chain, chain_len):
        self.attempted += 1
        if chain.truncated or len(chain.steps) < chain_len:
            self.truncated += 1
        else:
            self.completed += 1
        self.rejections += sum(f.startswith("rejected:") for f in chain.flags)
        for s in chain.steps:
            self.error_type_counts[s.error_type] = self.error_type_counts.get(s.error_type, 0) + 1

    def to_record(self):
        return {
            "attempted": self.attempted,
            "completed": self.completed,
            "truncated": self.truncated,
            "rejections": self.rejections,
            "error_type_counts": dict(sorted(self.error_type_counts.items())),
            "total_steps": sum(self.error_type_counts.values()),
        }


def generate_chains(
    seeds,
    chain_len,
    client,
    seed=0,
    taxonomy=None,
    config=None,
    concurrency=4,
    independent=False,
):
    """Generate one chain per :class:`SeedRecord`, ``concurrency`` chains at a time.

    Output order follows the input and each chain uses :func:`chain_rng`,
    so results do not depend on scheduling.
    """
    config = config or GenerationConfig()
    if concurrency < 1:
        raise InvalidInputError("concurrency must be >= 1")

    def one(rec):
        rng = chain_rng(seed, rec.video_id)
        sc = recaption_seed(rec.captions, rec.meta, client, config.passthrough, config.min_seed_words, config)
        fn = generate_independent_negatives if independent else generate_chain
        return fn(sc.text, rec.meta, chain_len, taxonomy, config, client, rng, rec.video_id, sc.source)

    seeds = list(seeds)
    if concurrency == 1:
        chains = [one(r) for r in seeds]
    else:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            chains = list(pool.map(one, seeds))
    report = GenerationReport()
    for c in chains:
        report.add(c, chain_len)
    return chains, report
