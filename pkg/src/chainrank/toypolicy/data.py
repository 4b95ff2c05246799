"""Synthetic ordered chains for desk-scale training.

A hidden teacher with the same log-linear form as :class:`ToyPolicy` emits a
clean token sequence for each random context vector. Rank ``k`` of a chain is
the clean sequence with exactly ``k`` positions replaced by other tokens, and
the replaced positions of rank ``k`` contain those of rank ``k - 1``, so the
number of corruptions plays the role of the error count of a caption.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax

from .._io import read_jsonl, write_jsonl
from ..exceptions import InvalidInputError
from .policy import BOS, ToyPolicy


@dataclass
class SynthExample:
    context: np.ndarray
    chain_tokens: list  # list of int arrays, best-first
    corruption_counts: list
    corrupted_positions: list = field(default_factory=list)

    @property
    def chain_size(self):
        return len(self.chain_tokens)

    def truncated(self, size):
        """First ``size`` chain members (the best ones)."""
        if size < 1 or size > self.chain_size:
            raise InvalidInputError(f"cannot truncate a chain of {self.chain_size} to {size}")
        return SynthExample(
            self.context,
            self.chain_tokens[:size],
            self.corruption_counts[:size],
            self.corrupted_positions[:size],
        )

    def to_record(self):
        return {
            "context": [float(x) for x in self.context],
            "chain_tokens": [[int(t) for t in seq] for seq in self.chain_tokens],
            "corruption_counts": [int(c) for c in self.corruption_counts],
            "corrupted_positions": [sorted(int(p) for p in ps) for ps in self.corrupted_positions],
        }

    @classmethod
    def from_record(cls, rec):
        return cls(
            np.asarray(rec["context"], dtype=np.float64),
            [np.asarray(seq, dtype=np.int64) for seq in rec["chain_tokens"]],
            list(rec["corruption_counts"]),
            [list(ps) for ps in rec.get("corrupted_positions", [])],
        )


def make_teacher(vocab_size, ctx_dim, rng, teacher_scale=4.0, bigram_scale=2.0):
    rng = np.random.default_rng(rng)
    V, d = vocab_size, ctx_dim
    return ToyPolicy(
        V,
        d,
        teacher_scale * rng.standard_normal((V, d)) / np.sqrt(d),
        bigram_scale * rng.standard_normal((V, V)),
        np.zeros(V),
    )


def _sample_clean(teacher, context, seq_len, rng, temperature):
    ctx_logits = teacher.weights @ context + teacher.bias
    tokens = np.empty(seq_len, dtype=np.int64)
    prev = BOS
    for t in range(seq_len):
        p = softmax((ctx_logits + teacher.bigram[prev]) / temperature)
        prev = tokens[t] = rng.choice(teacher.vocab_size, p=p)
    return tokens


def _replacement(teacher, context, clean, pos, rng, negatives):
    """A token different from ``clean[pos]``.

    ``negatives`` selects the proposal: ``"uniform"`` over the vocabulary,
    ``"teacher"`` from the teacher's conditional at that position, or
    ``"prior"`` from the context-free bigram alone, i.e. a substitution that
    reads fluently but ignores the context.
    """
    V = teacher.vocab_size
    prev = BOS if pos == 0 else clean[pos - 1]
    if negatives == "uniform":
        p = np.ones(V)
    elif negatives == "teacher":
        p = softmax(teacher.weights @ context + teacher.bias + teacher.bigram[prev])
    elif negatives == "prior":
        p = softmax(teacher.bias + teacher.bigram[prev])
    else:
        raise InvalidInputError(f"unknown negative sampler {negatives!r}")
    p[clean[pos]] = 0.0
    return int(rng.choice(V, p=p / p.sum()))


STRUCTURES = ("nested", "single", "fresh")


def make_synth_dataset(
    count,
    vocab_size=32,
    ctx_dim=16,
    seq_len=24,
    chain_len=4,
    seed=0,
    structure="nested",
    teacher_scale=4.0,
    bigram_scale=2.0,
    negatives="uniform",
    clean_temperature=1.0,
):
    """Generate ``count`` chains of ``chain_len + 1`` sequences, best-first.

    ``structure`` controls how negatives relate to each other:

    ``"nested"``
        rank ``k`` corrupts ``k`` positions, a superset of rank ``k - 1``'s.
    ``"single"``
        every negative corrupts one position of the clean sequence,
        independently of the others (the independent-errors baseline).
    ``"fresh"``
        rank ``k`` corrupts ``k`` positions drawn afresh, not nested.
    """
    if structure not in STRUCTURES:
        raise InvalidInputError(f"structure must be one of {STRUCTURES}")
    if chain_len < 1:
        raise InvalidInputError("chain_len must be >= 1")
    if chain_len > seq_len:
        raise InvalidInputError(f"chain_len ({chain_len}) exceeds seq_len ({seq_len})")
    if count < 0:
        raise InvalidInputError("count must be non-negative")
    rng = np.random.default_rng(seed)
    teacher = make_teacher(vocab_size, ctx_dim, rng, teacher_scale, bigram_scale)
    out = []
    for _ in range(count):
        context = rng.standard_normal(ctx_dim)
        clean = _sample_clean(teacher, context, seq_len, rng, clean_temperature)
        if structure == "nested":
            order = rng.permutation(seq_len)[:chain_len]
            position_sets = [order[:k] for k in range(1, chain_len + 1)]
        elif structure == "fresh":
            position_sets = [rng.permutation(seq_len)[:k] for k in range(1, chain_len + 1)]
        else:
            position_sets = [rng.integers(seq_len, size=1) for _ in range(chain_len)]
        replaced = {}
        chain, positions = [clean], [[]]
        for pset in position_sets:
            seq = clean.copy()
            for pos in (int(p) for p in pset):
                # nested ranks reuse earlier substitutions so errors accumulate
                if structure != "nested" or pos not in replaced:
                    replaced[pos] = _replacement(teacher, context, clean, pos, rng, negatives)
                seq[pos] = replaced[pos]
            chain.append(seq)
            positions.append(sorted(int(p) for p in pset))
        counts = [len(p) for p in positions]
        out.append(SynthExample(context, chain, counts, positions))
    return out


def split_dataset(dataset, heldout_fraction=0.2):
    """Deterministic head/tail split: the last fraction is held out."""
    n_hold = int(round(len(dataset) * heldout_fraction))
    cut = len(dataset) - n_hold
    return dataset[:cut], dataset[cut:]


def save_dataset(path, dataset):
    write_jsonl(path, [ex.to_record() for ex in dataset])


def load_dataset(path):
    return [SynthExample.from_record(rec) for rec in read_jsonl(path)]
