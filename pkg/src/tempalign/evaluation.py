"""Span decoding and TempEval-3 style scoring.

Strict matches need identical boundaries, relaxed matches any token
overlap, and type matches a relaxed match with the same TIMEX3 type.
Relaxed matching is one-to-one and greedy: predicted spans are visited by
start index and each takes the earliest unmatched gold span it overlaps.
"""

import itertools
import json
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .errors import ContractError, DataError
from .labels import SCHEME


class TimexSpan(NamedTuple):
    start: int
    end: int  # inclusive
    type: str

    def overlaps(self, other):
        return self.start <= other.end and other.start <= self.end


def iob2_to_spans(labels):
    """Collect maximal B-X I-X* runs.  A stray I-X opens a new span."""
    spans = []
    start = kind = None
    for i, lab in enumerate(labels):
        if lab not in SCHEME.index:
            raise DataError(f"unknown label {lab!r} at position {i}")
        if lab == "O":
            if kind is not None:
                spans.append(TimexSpan(start, i - 1, kind))
            start = kind = None
            continue
        prefix, typ = lab[:2], lab[2:]
        if prefix == "I-" and kind == typ:
            continue
        if kind is not None:
            spans.append(TimexSpan(start, i - 1, kind))
        start, kind = i, typ
    if kind is not None:
        spans.append(TimexSpan(start, len(labels) - 1, kind))
    return spans


def spans_to_iob2(spans, length):
    labels = ["O"] * length
    last_end = -1
    for s in sorted(spans, key=lambda s: s.start):
        if s.type not in SCHEME.types:
            raise DataError(f"unknown span type {s.type!r}")
        if not 0 <= s.start <= s.end < length:
            raise DataError(f"span {tuple(s)} outside a sentence of length {length}")
        if s.start <= last_end:
            raise DataError(f"span {tuple(s)} overlaps the previous span")
        labels[s.start] = f"B-{s.type}"
        for i in range(s.start + 1, s.end + 1):
            labels[i] = f"I-{s.type}"
        last_end = s.end
    return labels


def repair_iob2(labels):
    return spans_to_iob2(iob2_to_spans(labels), len(labels))


def f1(p, r):
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


@dataclass
class PRF:
    precision: float
    recall: float
    f1: float


@dataclass
class ScoreReport:
    strict: PRF
    relaxed: PRF
    type: PRF
    gold: int
    predicted: int
    strict_matches: int
    relaxed_matches: int
    type_matches: int

    @property
    def type_f1(self):
        return self.type.f1

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def table(self, title=None):
        rows = [("strict", self.strict), ("relaxed", self.relaxed), ("type", self.type)]
        lines = [] if title is None else [title]
        lines.append(f"{'metric':<8} {'P':>7} {'R':>7} {'F1':>7}")
        for name, m in rows:
            lines.append(f"{name:<8} {m.precision:7.4f} {m.recall:7.4f} {m.f1:7.4f}")
        lines.append(f"gold={self.gold} predicted={self.predicted} strict={self.strict_matches} "
                     f"relaxed={self.relaxed_matches} type={self.type_matches}")
        return "\n".join(lines)


def match_counts(gold, pred):
    """(strict, relaxed, type) match counts for one document."""
    gold = sorted(gold, key=lambda s: (s.start, s.end))
    pred = sorted(pred, key=lambda s: (s.start, s.end))
    gold_bounds = {(g.start, g.end) for g in gold}
    strict = sum((p.start, p.end) in gold_bounds for p in pred)
    taken = [False] * len(gold)
    relaxed = typed = 0
    for p in pred:
        for j, g in enumerate(gold):
            if not taken[j] and g.overlaps(p):
                taken[j] = True
                relaxed += 1
                typed += g.type == p.type
                break
    return strict, relaxed, typed


def _prf(matches, n_pred, n_gold):
    p = matches / n_pred if n_pred else 0.0
    r = matches / n_gold if n_gold else 0.0
    return PRF(p, r, f1(p, r))


def _documents(gold, pred):
    if isinstance(gold, dict) or isinstance(pred, dict):
        if not (isinstance(gold, dict) and isinstance(pred, dict)):
            raise DataError("gold and predictions must both be keyed by document id")
        if set(gold) != set(pred):
            missing = sorted(set(gold) ^ set(pred))[:5]
            raise DataError(f"document ids differ between gold and predictions, e.g. {missing}")
        return [(gold[k], pred[k]) for k in gold]
    gold, pred = list(gold), list(pred)
    if len(gold) != len(pred):
        raise DataError(f"{len(gold)} gold documents but {len(pred)} predicted")
    return list(zip(gold, pred))


def score(gold, pred, type_mode="count"):
    """Micro-averaged strict/relaxed/type scores over documents.

    ``gold`` and ``pred`` are either parallel sequences of span lists or
    dicts keyed by document id.  ``type_mode="attribute"`` reports type F1
    as attribute accuracy times relaxed F1 instead of counting type-correct
    relaxed matches.
    """
    n_gold = n_pred = s = r = t = 0
    for g, p in _documents(gold, pred):
        cs, cr, ct = match_counts(g, p)
        n_gold += len(g)
        n_pred += len(p)
        s, r, t = s + cs, r + cr, t + ct
    relaxed = _prf(r, n_pred, n_gold)
    if type_mode == "count":
        typ = _prf(t, n_pred, n_gold)
    elif type_mode == "attribute":
        acc = t / r if r else 0.0
        typ = PRF(acc * relaxed.precision, acc * relaxed.recall, acc * relaxed.f1)
    else:
        raise ValueError(f"unknown type_mode {type_mode!r}")
    return ScoreReport(_prf(s, n_pred, n_gold), relaxed, typ, n_gold, n_pred, s, r, t)


def per_document_f1(gold, pred, metric="relaxed"):
    """F1 per document; a document with no gold and no predicted spans scores 1."""
    out = []
    for g, p in _documents(gold, pred):
        if not g and not p:
            out.append(1.0)
            continue
        out.append(getattr(score([g], [p]), metric).f1)
    return np.array(out)


def paired_permutation_test(a, b, iterations=10000, seed=0, exact=False):
    """Two-sided p-value for mean(a - b) under random sign flips.

    ``exact`` enumerates all 2^n flips (n <= 24).  The Monte-Carlo estimate
    counts the observed assignment, so the p-value is never 0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or a.shape != b.shape or a.ndim != 1:
        raise ContractError("need two non-empty paired score lists of equal length")
    d = a - b
    n = d.size
    observed = abs(d.mean())
    slack = 1e-12 * max(1.0, observed)
    if exact:
        if n > 24:
            raise ContractError(f"exact enumeration over 2^{n} flips is too large")
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=n)))
        hits = np.count_nonzero(np.abs(signs @ d / n) >= observed - slack)
        return hits / signs.shape[0]
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < iterations:
        m = min(4096, iterations - done)
        signs = rng.integers(0, 2, size=(m, n)) * 2.0 - 1.0
        hits += np.count_nonzero(np.abs(signs @ d / n) >= observed - slack)
        done += m
    return (hits + 1) / (iterations + 1)


def corpus_stats(corpus):
    """(sentences, temporal expressions) as counted in a corpus table."""
    sentences = list(getattr(corpus, "sentences", corpus))
    n_expr = sum(len(iob2_to_spans(s.labels)) for s in sentences if s.labels is not None)
    return len(sentences), n_expr


def format_stats(name, counts):
    n_sent, n_expr = counts
    return f"{name}\t{n_sent:,}/{n_expr:,}"
