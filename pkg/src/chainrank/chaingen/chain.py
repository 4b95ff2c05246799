"""Caption chain records and their JSONL persistence."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .._io import read_jsonl, write_jsonl
from ..exceptions import InvalidInputError

INDEPENDENT_FLAG = "independent_negatives"
TRUNCATED_FLAG = "truncated"


class CaptionSource(str, enum.Enum):
    GROUND_TRUTH = "GROUND_TRUTH"
    RECAPTIONED = "RECAPTIONED"


@dataclass(frozen=True)
class Step:
    error_type: str
    summary: str

    def to_record(self):
        return {"error_type": self.error_type, "summary": self.summary}


@dataclass
class CaptionChain:
    """Captions ordered best-first; ``steps[k]`` turned ``captions[k]`` into ``captions[k+1]``.

    For an independent-negatives record (flag ``independent_negatives``)
    every ``steps[k]`` was applied to ``captions[0]`` instead.
    """

    video_id: str
    captions: list
    steps: list = field(default_factory=list)
    source: CaptionSource = CaptionSource.GROUND_TRUTH
    flags: list = field(default_factory=list)

    def __post_init__(self):
        self.source = CaptionSource(self.source)
        self.steps = [s if isinstance(s, Step) else Step(*s) for s in self.steps]
        if not self.captions:
            raise InvalidInputError(f"chain {self.video_id!r} has no captions")
        if len(self.captions) != len(self.steps) + 1:
            raise InvalidInputError(
                f"chain {self.video_id!r}: {len(self.captions)} captions but {len(self.steps)} steps"
            )

    @property
    def independent(self):
        return INDEPENDENT_FLAG in self.flags

    @property
    def truncated(self):
        return TRUNCATED_FLAG in self.flags

    def __len__(self):
        return len(self.captions)

    def errors_of(self, k):
        """Error-type ids carried by ``captions[k]``."""
        if self.independent:
            return [] if k == 0 else [self.steps[k - 1].error_type]
        return [s.error_type for s in self.steps[:k]]

    def to_record(self):
        return {
            "video_id": self.video_id,
            "source": self.source.value,
            "captions": list(self.captions),
            "steps": [s.to_record() for s in self.steps],
            "flags": list(self.flags),
        }

    @classmethod
    def from_record(cls, rec):
        try:
            return cls(
                str(rec["video_id"]),
                list(rec["captions"]),
                [Step(s["error_type"], s.get("summary", "")) for s in rec.get("steps", [])],
                rec.get("source", CaptionSource.GROUND_TRUTH),
                list(rec.get("flags", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed chain record: {exc}") from None


@dataclass(frozen=True)
class SeedRecord:
    """One input video: human caption(s) plus free-form metadata."""

    video_id: str
    captions: tuple
    meta: object = None

    @classmethod
    def from_record(cls, rec):
        caps = rec.get("captions")
        if isinstance(caps, str):
            caps = [caps]
        if "video_id" not in rec or not caps:
            raise InvalidInputError("seed record needs video_id and a non-empty captions list")
        return cls(str(rec["video_id"]), tuple(caps), rec.get("meta"))

    def to_record(self):
        return {"video_id": self.video_id, "captions": list(self.captions), "meta": self.meta}


def write_chains(path, chains):
    write_jsonl(path, [c.to_record() for c in chains])


def read_chains(path):
    return [CaptionChain.from_record(r) for r in read_jsonl(path)]


def read_seeds(path):
    return [SeedRecord.from_record(r) for r in read_jsonl(path)]
