import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tempalign.corpus import AnnotatedSentence
from tempalign.errors import ContractError, DataError
from tempalign.evaluation import (TimexSpan, corpus_stats, format_stats, iob2_to_spans,
                                  match_counts, paired_permutation_test, per_document_f1,
                                  repair_iob2, score, spans_to_iob2)
from tempalign.labels import SCHEME, is_valid_iob2

TYPES = ("DATE", "TIME", "DURATION", "SET")


@st.composite
def span_sets(draw, max_len=15):
    length = draw(st.integers(1, max_len))
    spans, pos = [], 0
    while pos < length and draw(st.booleans()):
        pos += draw(st.integers(0, 3))
        if pos >= length:
            break
        end = min(length - 1, pos + draw(st.integers(0, 3)))
        spans.append(TimexSpan(pos, end, draw(st.sampled_from(TYPES))))
        pos = end + 1
    return spans, length


# -- IOB2 decoding --------------------------------------------------------------------

def test_iob2_examples():
    assert iob2_to_spans(["B-DATE", "I-DATE", "O"]) == [(0, 1, "DATE")]
    assert iob2_to_spans(["O", "I-TIME"]) == [(1, 1, "TIME")]
    assert iob2_to_spans(["B-DATE", "I-TIME"]) == [(0, 0, "DATE"), (1, 1, "TIME")]
    assert iob2_to_spans(["B-SET", "B-SET"]) == [(0, 0, "SET"), (1, 1, "SET")]
    with pytest.raises(DataError):
        iob2_to_spans(["B-EVENT"])


def test_spans_to_iob2_examples():
    assert spans_to_iob2([TimexSpan(0, 1, "DATE")], 3) == ["B-DATE", "I-DATE", "O"]
    assert spans_to_iob2([], 2) == ["O", "O"]
    with pytest.raises(DataError):
        spans_to_iob2([TimexSpan(0, 2, "DATE"), TimexSpan(2, 3, "SET")], 5)


@settings(max_examples=200, deadline=None)
@given(span_sets())
def test_round_trip(sample):
    spans, length = sample
    labels = spans_to_iob2(spans, length)
    assert is_valid_iob2(labels)
    assert iob2_to_spans(labels) == spans


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(SCHEME.labels), min_size=1, max_size=12))
def test_repair_yields_valid_iob2_with_same_spans(labels):
    fixed = repair_iob2(labels)
    assert is_valid_iob2(fixed)
    assert iob2_to_spans(fixed) == iob2_to_spans(labels)


# -- scoring --------------------------------------------------------------------------

def report_tuple(rep):
    return [(m.precision, m.recall, m.f1) for m in (rep.strict, rep.relaxed, rep.type)]


def test_spec_examples():
    d = TimexSpan
    assert report_tuple(score([[d(0, 2, "DATE")]], [[d(0, 2, "DATE")]])) == [(1, 1, 1)] * 3
    rep = score([[d(0, 2, "DATE")]], [[d(1, 3, "DATE")]])
    assert (rep.strict.f1, rep.relaxed.f1, rep.type.f1) == (0.0, 1.0, 1.0)
    rep = score([[d(0, 1, "DATE"), d(5, 6, "SET")]], [[d(0, 1, "TIME")]])
    assert (rep.strict.precision, rep.strict.recall) == (1.0, 0.5)
    assert abs(rep.strict.f1 - 2 / 3) < 1e-15 and abs(rep.relaxed.f1 - 2 / 3) < 1e-15
    assert rep.type.f1 == 0.0 and rep.type_matches == 0


def test_documents_by_id_and_mismatch():
    g = {"a": [TimexSpan(0, 0, "DATE")], "b": []}
    p = {"b": [], "a": [TimexSpan(0, 0, "DATE")]}
    assert score(g, p).strict.f1 == 1.0
    with pytest.raises(DataError):
        score(g, {"a": []})
    with pytest.raises(DataError):
        score([[]], [[], []])


def test_attribute_type_mode():
    d = TimexSpan
    gold = [[d(0, 0, "DATE"), d(2, 2, "SET"), d(4, 4, "TIME")]]
    pred = [[d(0, 0, "DATE"), d(2, 2, "TIME")]]
    rep = score(gold, pred, type_mode="attribute")
    # attribute accuracy 1/2 times relaxed F1 (P=1, R=2/3 -> 0.8)
    assert abs(rep.type.f1 - 0.4) < 1e-15
    assert score(gold, pred).type.f1 == pytest.approx(2 * 0.5 * (1 / 3) / (0.5 + 1 / 3))
    with pytest.raises(ValueError):
        score(gold, pred, type_mode="other")


def max_matching(gold, pred):
    """Largest one-to-one overlap matching, by exhaustive search (small inputs)."""
    best = 0
    for k in range(min(len(gold), len(pred)), 0, -1):
        for gs in itertools.combinations(gold, k):
            for ps in itertools.permutations(pred, k):
                if all(g.overlaps(p) for g, p in zip(gs, ps)):
                    return k
    return best


@settings(max_examples=300, deadline=None)
@given(span_sets(10), span_sets(10))
def test_scoring_properties(a, b):
    gold, pred = a[0], b[0]
    ab, ba = score([gold], [pred]), score([pred], [gold])
    assert ab.strict_matches <= ab.relaxed_matches and ab.type_matches <= ab.relaxed_matches
    assert ab.strict.f1 <= ab.relaxed.f1 and ab.type.f1 <= ab.relaxed.f1
    for m1, m2 in ((ab.strict, ba.strict), (ab.relaxed, ba.relaxed)):
        assert (m1.precision, m1.recall, m1.f1) == (m2.recall, m2.precision, m2.f1)
    if len(gold) <= 5 and len(pred) <= 5:
        # greedy left-to-right is optimal on non-overlapping, sorted span sets
        assert match_counts(gold, pred)[1] == max_matching(gold, pred)


@settings(max_examples=200, deadline=None)
@given(span_sets(10), span_sets(10))
def test_adding_a_disjoint_prediction_lowers_precision_only(a, b):
    gold, pred = a[0], b[0]
    before = score([gold], [pred])
    extra = TimexSpan(100, 101, "DATE")
    after = score([gold], [pred + [extra]])
    assert after.relaxed.recall == before.relaxed.recall
    assert after.strict.recall == before.strict.recall
    if pred:
        assert after.relaxed.precision < before.relaxed.precision or before.relaxed.precision == 0
    assert after.predicted == before.predicted + 1


def test_per_document_f1():
    d = TimexSpan
    f = per_document_f1([[d(0, 0, "DATE")], [d(1, 2, "SET")]], [[d(0, 0, "DATE")], []])
    assert f.tolist() == [1.0, 0.0]
    # nothing to find and nothing predicted is a perfect document
    assert per_document_f1([[], [d(0, 0, "SET")]], [[], []]).tolist() == [1.0, 0.0]


# -- permutation test -------------------------------------------------------------

def test_identical_scores_give_p_one():
    x = np.random.default_rng(0).random(30)
    assert paired_permutation_test(x, x) == 1.0
    assert paired_permutation_test(x, x, exact=False, iterations=10) == 1.0


def test_dominant_difference():
    a = np.full(50, 0.8)
    b = np.full(50, 0.3)
    assert paired_permutation_test(a, b, iterations=10000) < 0.001
    # exact at n=10: only the identity and the full flip reach |mean| = 0.5
    assert paired_permutation_test(a[:10], b[:10], exact=True) == 2 / 1024


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_monte_carlo_matches_exact(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random(10), rng.random(10)
    exact = paired_permutation_test(a, b, exact=True)
    mc = paired_permutation_test(a, b, iterations=10000, seed=seed)
    assert abs(exact - mc) < 0.02
    assert 0 < mc <= 1
    assert mc == paired_permutation_test(a, b, iterations=10000, seed=seed)


def test_permutation_contract():
    with pytest.raises(ContractError):
        paired_permutation_test([], [])
    with pytest.raises(ContractError):
        paired_permutation_test([1.0, 2.0], [1.0])


# -- corpus statistics --------------------------------------------------------------

def test_corpus_stats():
    assert corpus_stats([]) == (0, 0)
    sents = [AnnotatedSentence("en", ["on", "May", "3"], ["O", "B-DATE", "I-DATE"]),
             AnnotatedSentence("en", ["hi"], ["O"])]
    assert corpus_stats(sents) == (2, 1)
    assert format_stats("en-train", (3461, 1456)) == "en-train\t3,461/1,456"
