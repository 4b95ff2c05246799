"""Reference-based n-gram caption metrics: ROUGE-L (F1) and METEOR-lite."""

from __future__ import annotations

from dataclasses import dataclass

ROUGE_L = "ROUGE_L"
METEOR_LITE = "METEOR_LITE"


@dataclass(frozen=True)
class NgramScore:
    metric: str
    precision: float
    recall: float
    value: float


def _tokens(text):
    return (text or "").lower().split()


def lcs_length(a, b):
    """Longest common subsequence length, O(len(a) * len(b)) dynamic programme."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(predicted, reference):
    """LCS-based F1 over lowercased whitespace tokens; 0 if either side is empty."""
    p, r = _tokens(predicted), _tokens(reference)
    ell = lcs_length(p, r)
    if ell == 0:
        return NgramScore(ROUGE_L, 0.0, 0.0, 0.0)
    prec, rec = ell / len(p), ell / len(r)
    return NgramScore(ROUGE_L, prec, rec, 2 * prec * rec / (prec + rec))


def align_exact(pred, ref):
    """Greedy left-to-right exact alignment: pred index -> earliest unused equal ref index."""
    used = set()
    pairs = []
    for i, tok in enumerate(pred):
        for j, other in enumerate(ref):
            if j not in used and other == tok:
                used.add(j)
                pairs.append((i, j))
                break
    return pairs


def count_chunks(pairs):
    """Runs of matches that are adjacent in both sequences."""
    chunks = 0
    last = None
    for i, j in pairs:
        if last is None or i != last[0] + 1 or j != last[1] + 1:
            chunks += 1
        last = (i, j)
    return chunks


def meteor_lite(predicted, reference):
    """METEOR with exact matching only: Fmean = 10PR/(R+9P), penalty 0.5*(chunks/matches)^3."""
    p, r = _tokens(predicted), _tokens(reference)
    pairs = align_exact(p, r)
    m = len(pairs)
    if m == 0:
        return NgramScore(METEOR_LITE, 0.0, 0.0, 0.0)
    prec, rec = m / len(p), m / len(r)
    fmean = 10 * prec * rec / (rec + 9 * prec)
    penalty = 0.5 * (count_chunks(pairs) / m) ** 3
    return NgramScore(METEOR_LITE, prec, rec, fmean * (1 - penalty))
