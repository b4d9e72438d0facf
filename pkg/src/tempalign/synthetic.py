"""Artificial multilingual temporal-tagging corpora.

Every language realizes the same latent grammar over the same concept
inventory, but with its own pseudo-word surface forms, so vocabularies are
disjoint.  Word vectors are drawn per language around shared concept
vectors: ``e_lang(w) = c(w) + shift_lang + noise``.  The shared part is
what makes transfer possible; the per-language shift is what an alignment
has to remove.
"""

import argparse
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import AnnotatedSentence, Corpus
from .embeddings import from_arrays
from .evaluation import TimexSpan, spans_to_iob2

CLASSES = {
    "month": 12, "weekday": 7, "day": 28, "year": 15, "num": 12, "unit": 6,
    "deictic_date": 3, "deictic_time": 3,
    "last": 1, "next": 1, "every": 1, "each": 1, "oclock": 1, "ago": 1, "several": 1,
    "on": 1, "in": 1, "at": 1, "for": 1, "the": 1, "and": 1,
    "noun": 60, "verb": 40, "adj": 20, "func": 15,
}

# each pattern: (type, [class, ...])
PATTERNS = [
    ("DATE", ["month", "day", "year"]),
    ("DATE", ["month", "year"]),
    ("DATE", ["weekday"]),
    ("DATE", ["deictic_date"]),
    ("DATE", ["last", "unit"]),
    ("DATE", ["next", "unit"]),
    ("DATE", ["year"]),
    ("DATE", ["num", "unit", "ago"]),
    ("TIME", ["num", "oclock"]),
    ("TIME", ["deictic_time"]),
    ("TIME", ["weekday", "deictic_time"]),
    ("DURATION", ["num", "unit"]),
    ("DURATION", ["several", "unit"]),
    ("SET", ["every", "weekday"]),
    ("SET", ["every", "unit"]),
    ("SET", ["each", "unit"]),
]
_PREPS = {"DATE": ["on", "in"], "TIME": ["at"], "DURATION": ["for"], "SET": []}
_SYLLABLES = [c + v for c in "bdfgklmnprstvz" for v in "aeiou"]


def concepts():
    return [(cls, i) for cls, n in CLASSES.items() for i in range(n)]


@dataclass
class SyntheticLanguage:
    code: str
    forms: dict  # concept -> surface form
    vectors: np.ndarray  # one row per concept, in concepts() order

    def space(self):
        cs = concepts()
        return from_arrays(self.code, [self.forms[c] for c in cs], self.vectors)


@dataclass
class SyntheticData:
    languages: dict
    train: dict = field(default_factory=dict)
    dev: dict = field(default_factory=dict)
    test: dict = field(default_factory=dict)
    unlabeled: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)  # (code, split) -> (sentences, expressions)

    def spaces(self):
        return {code: lang.space() for code, lang in self.languages.items()}


def _pseudo_words(rng, n, taken):
    out = []
    while len(out) < n:
        w = "".join(rng.choice(_SYLLABLES, size=rng.integers(2, 4)))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def make_languages(codes, dim=20, seed=0, shift=0.0, noise=0.3, class_spread=0.6):
    """Concept vectors shared by all languages plus per-language shift and noise.

    ``class_spread`` scales within-class variation around a class centroid,
    so related concepts (all months, all units) lie close together.
    """
    rng = np.random.default_rng([seed, 101])
    cs = concepts()
    centroids = {cls: rng.standard_normal(dim) for cls in CLASSES}
    base = np.array([centroids[cls] + class_spread * rng.standard_normal(dim) for cls, _ in cs])
    taken = set()
    langs = {}
    for li, code in enumerate(codes):
        lrng = np.random.default_rng([seed, 202, li])
        words = _pseudo_words(lrng, len(cs), taken)
        direction = lrng.standard_normal(dim)
        direction *= shift / np.linalg.norm(direction)
        vecs = base + direction + noise * lrng.standard_normal(base.shape)
        langs[code] = SyntheticLanguage(code, dict(zip(cs, words)), vecs)
    return langs


def _sentence(rng):
    """Concept sequence and TIMEX spans for one sentence."""
    seq = []
    spans = []

    def filler(k):
        for _ in range(k):
            r = rng.random()
            if r < 0.35:
                seq.append(("noun", int(rng.integers(CLASSES["noun"]))))
            elif r < 0.6:
                seq.append(("verb", int(rng.integers(CLASSES["verb"]))))
            elif r < 0.75:
                seq.append(("adj", int(rng.integers(CLASSES["adj"]))))
            elif r < 0.85:
                seq.append(("the", 0))
            elif r < 0.9:
                # distractors: numbers and "last" outside temporal expressions
                if rng.random() < 0.5:
                    seq.append(("num", int(rng.integers(CLASSES["num"]))))
                    seq.append(("noun", int(rng.integers(CLASSES["noun"]))))
                else:
                    seq.extend([("the", 0), ("last", 0), ("noun", int(rng.integers(CLASSES["noun"])))])
            else:
                seq.append(("func", int(rng.integers(CLASSES["func"]))))

    n_timex = rng.choice([0, 1, 1, 2])
    filler(int(rng.integers(2, 5)))
    for j in range(n_timex):
        typ, pattern = PATTERNS[int(rng.integers(len(PATTERNS)))]
        preps = _PREPS[typ]
        if preps and rng.random() < 0.6:
            seq.append((preps[int(rng.integers(len(preps)))], 0))
        start = len(seq)
        for cls in pattern:
            seq.append((cls, int(rng.integers(CLASSES[cls]))))
        spans.append(TimexSpan(start, len(seq) - 1, typ))
        if j + 1 < n_timex:
            seq.append(("and", 0) if rng.random() < 0.5 else ("verb", int(rng.integers(CLASSES["verb"]))))
        filler(int(rng.integers(1, 4)))
    return seq, spans


_SPLITS = {"train": 0, "dev": 1, "test": 2, "unlabeled": 3}


def make_corpus(lang, n, seed, split, labeled=True):
    """Returns the corpus and the number of expressions generated for it."""
    rng = np.random.default_rng([seed, 303, _SPLITS.get(split, 9), n])
    sents = []
    n_spans = 0
    for i in range(n):
        seq, spans = _sentence(rng)
        n_spans += len(spans)
        tokens = [lang.forms[c] for c in seq]
        labels = spans_to_iob2(spans, len(tokens)) if labeled else None
        sents.append(AnnotatedSentence(lang.code, tokens, labels, f"{split}{i}"))
    return Corpus(lang.code, split, sents), n_spans


def generate(codes=("xa", "xb"), n_train=500, n_dev=100, n_test=100, n_unlabeled=0,
             dim=20, seed=0, shift=0.0, noise=0.3):
    """Languages plus train/dev/test corpora (and optional unlabeled pools)."""
    langs = make_languages(codes, dim, seed, shift, noise)
    data = SyntheticData(langs)
    for k, (code, lang) in enumerate(langs.items()):
        for split, n, target in (("train", n_train, data.train), ("dev", n_dev, data.dev),
                                 ("test", n_test, data.test)):
            target[code], n_spans = make_corpus(lang, n, seed * 1000 + k, split)
            data.counts[(code, split)] = (n, n_spans)
        if n_unlabeled:
            pool, _ = make_corpus(lang, n_unlabeled, seed * 1000 + k, "unlabeled", labeled=False)
            data.unlabeled[code] = [s.tokens for s in pool.sentences]
    return data


def write(data, out_dir):
    """Save corpora, unlabeled pools and vectors of ``data`` under ``out_dir``."""
    from .corpus import save_labeled, save_unlabeled
    from .embeddings import save_vectors
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for code, space in data.spaces().items():
        save_vectors(space, out / f"{code}.vec")
    for split in ("train", "dev", "test"):
        for code, corpus in getattr(data, split).items():
            save_labeled(corpus, out / f"{code}.{split}.tsv")
    for code, pool in data.unlabeled.items():
        save_unlabeled(pool, out / f"{code}.unlabeled.txt")
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description="Write a synthetic two-language corpus.")
    p.add_argument("--out", required=True)
    p.add_argument("--languages", default="xa,xb")
    p.add_argument("--train", type=int, default=500)
    p.add_argument("--dev", type=int, default=100)
    p.add_argument("--test", type=int, default=100)
    p.add_argument("--unlabeled", type=int, default=0)
    p.add_argument("--shift", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    data = generate(tuple(args.languages.split(",")), args.train, args.dev, args.test,
                    args.unlabeled, seed=args.seed, shift=args.shift)
    write(data, args.out)
    for (code, split), (n, e) in sorted(data.counts.items()):
        print(f"{code}-{split}\t{n:,}/{e:,}")


if __name__ == "__main__":
    main()
