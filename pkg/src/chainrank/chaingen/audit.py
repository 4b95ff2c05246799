"""Structural and judge-based audits of generated chains."""

from __future__ import annotations

from dataclasses import dataclass, field

from .._text import parse_change, tokenize
from ..exceptions import BackendError, ParseError
from ..llmgateway.client import JUDGE_TEMPERATURE, CompletionRequest
from .taxonomy import default_taxonomy

NO_OP = "no-op mutation"


@dataclass
class AuditReport:
    """``order_pass`` is None when no judge ran or the judge could not answer."""

    chain_id: str
    structural_pass: bool
    order_pass: bool | None = None
    reasons: list = field(default_factory=list)

    def to_record(self):
        return {
            "chain_id": self.chain_id,
            "structural_pass": self.structural_pass,
            "order_pass": self.order_pass,
            "reasons": list(self.reasons),
        }


def _pairs(chain):
    # (earlier, later, step index) triples whose order the audit checks.
    if chain.independent:
        return [(0, k, k - 1) for k in range(1, len(chain.captions))]
    return [(k, k + 1, k) for k in range(len(chain.steps))]


def structural_reasons(chain, taxonomy=None):
    """Reasons the chain breaks a construction invariant; empty when it holds."""
    taxonomy = default_taxonomy() if taxonomy is None else taxonomy
    by_id = {t.id: t for t in taxonomy}
    reasons = []
    if len(chain.captions) != len(chain.steps) + 1:
        reasons.append("caption count != step count + 1")
        return reasons
    for k, cap in enumerate(chain.captions):
        if not isinstance(cap, str) or not cap.strip():
            reasons.append(f"caption {k} is empty")
    if reasons:
        return reasons
    for a, b, s in _pairs(chain):
        step = chain.steps[s]
        if chain.captions[a].strip() == chain.captions[b].strip():
            reasons.append(NO_OP)
        et = by_id.get(step.error_type)
        if et is None:
            reasons.append(f"step {s}: unknown error type {step.error_type!r}")
        elif not et.applies_to(chain.captions[a]):
            reasons.append(f"step {s}: {step.error_type} not applicable to caption {a}")
        change = parse_change(step.summary)
        if change and not _contains(chain.captions[b], change[1]):
            reasons.append(f"step {s}: summary replacement {change[1]!r} missing from caption {b}")
    if not chain.independent:
        # every earlier edit must survive into all later captions
        for j, step in enumerate(chain.steps):
            change = parse_change(step.summary)
            if not change:
                continue
            for k in range(j + 2, len(chain.captions)):
                if not _contains(chain.captions[k], change[1]):
                    reasons.append(f"step {j}: edit {change[1]!r} lost in caption {k}")
                    break
    return list(dict.fromkeys(reasons))


def _contains(caption, words):
    want = tokenize(words)
    have = tokenize(caption)
    if not want:
        return True
    n = len(want)
    return any(have[i : i + n] == want for i in range(len(have) - n + 1))


def judge_order(earlier, later, reference, judge):
    """True when the judge says ``later`` is strictly less faithful than ``earlier``."""
    text = judge.complete(
        CompletionRequest(
            "judge_order",
            {"reference": reference, "earlier": earlier, "later": later},
            max_tokens=8,
            temperature=JUDGE_TEMPERATURE,
        )
    )
    word = (text or "").strip().split()
    word = word[0].strip(".,!:;\"'").lower() if word else ""
    if word not in ("yes", "no"):
        raise ParseError(f"order judge replied {text[:60]!r}")
    return word == "yes"


def audit_chain(chain, judge=None, taxonomy=None):
    """Structural checks always; per-pair order judgments when ``judge`` is given.

    The reference for the order judge is the seed caption. A transport or
    parse failure leaves ``order_pass`` unknown (None) and is listed in
    ``reasons``; the structural verdict is still returned.
    """
    reasons = structural_reasons(chain, taxonomy)
    report = AuditReport(chain.video_id, not reasons, None, reasons)
    if judge is None:
        return report
    reference = chain.captions[0]
    verdicts = []
    try:
        for a, b, _ in _pairs(chain):
            verdicts.append(judge_order(chain.captions[a], chain.captions[b], reference, judge))
    except BackendError as exc:
        report.reasons.append(f"order judge unavailable: {exc}")
        return report
    report.order_pass = all(verdicts)
    if not report.order_pass:
        bad = [i for i, v in enumerate(verdicts) if not v]
        report.reasons.append(f"order judge rejected pair(s) {bad}")
    return report
