"""Orthogonal (Procrustes) alignment of embedding spaces to a pivot language."""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import embeddings
from .errors import ConfigError, EmptyDictionaryError, FormatError
from .linalg import svd

log = logging.getLogger(__name__)

PIVOT = "en"


@dataclass
class BilingualDictionary:
    source: str
    target: str
    pairs: list
    dropped: int = 0

    def __len__(self):
        return len(self.pairs)

    def mirrored(self):
        return BilingualDictionary(self.target, self.source, [(t, s) for s, t in self.pairs])


@dataclass
class AlignmentMatrix:
    matrix: np.ndarray
    source: str
    target: str = PIVOT

    def orthogonality_error(self):
        a = self.matrix
        return float(np.max(np.abs(a.T @ a - np.eye(a.shape[0]))))


def build_dictionary_string_match(src_vocab, tgt_vocab, k=5000, source="src", target=PIVOT):
    """Pair identical surface forms found in both top-``k`` vocabularies."""
    src_words = list(src_vocab.words)[:k]
    tgt_words = set(list(tgt_vocab.words)[:k])
    if not src_words or not tgt_words:
        raise EmptyDictionaryError("string matching needs two non-empty vocabularies")
    pairs = [(w, w) for w in src_words if w in tgt_words]
    if not pairs:
        raise EmptyDictionaryError(f"no shared surface forms between {source} and {target}")
    return BilingualDictionary(source, target, pairs)


def load_dictionary(path, src_vocab, tgt_vocab, source="src", target=PIVOT):
    """Read a two-column TSV lexicon, keeping pairs whose words are in both vocabularies."""
    path = Path(path)
    pairs, seen = [], set()
    dropped = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 2 or not cols[0] or not cols[1]:
                raise FormatError(f"expected 2 tab-separated columns, found {len(cols)}", path, lineno)
            pair = (cols[0], cols[1])
            if pair in seen:
                continue
            seen.add(pair)
            if pair[0] in src_vocab and pair[1] in tgt_vocab:
                pairs.append(pair)
            else:
                dropped += 1
    if dropped:
        log.info("%s: %d dropped (out of vocabulary)", path, dropped)
    if not pairs:
        raise EmptyDictionaryError(f"{path}: no dictionary pair survives vocabulary filtering")
    return BilingualDictionary(source, target, pairs, dropped)


def _normalize_rows(x):
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms > 0, norms, 1.0)


def dictionary_matrices(src_space, tgt_space, dictionary):
    x = np.array([src_space.raw(s) for s, _ in dictionary.pairs])
    y = np.array([tgt_space.raw(t) for _, t in dictionary.pairs])
    return x, y


def procrustes_align(src_space, tgt_space, dictionary, normalize=True):
    """Orthogonal A minimizing ||X A - Y||_F over the dictionary rows.

    X and Y stack the (length-normalized) source and target vectors of each
    dictionary pair; A = U V^T from the SVD of X^T Y.
    """
    if len(dictionary) == 0:
        raise EmptyDictionaryError("cannot align with an empty dictionary")
    if src_space.dim != tgt_space.dim:
        raise ConfigError(f"dimension mismatch: {src_space.dim} vs {tgt_space.dim}")
    x, y = dictionary_matrices(src_space, tgt_space, dictionary)
    if len(dictionary) < src_space.dim:
        log.warning("dictionary has %d pairs for %d dimensions", len(dictionary), src_space.dim)
    if normalize:
        x, y = _normalize_rows(x), _normalize_rows(y)
    u, _, vt = svd(x.T @ y)
    return AlignmentMatrix(u @ vt, src_space.language, tgt_space.language)


def residual(src_space, tgt_space, dictionary, alignment):
    x, y = dictionary_matrices(src_space, tgt_space, dictionary)
    return float(np.linalg.norm(x @ alignment.matrix - y))


def apply_alignment(space, alignment, pivot=PIVOT):
    """Return ``space`` with lookups mapped through ``alignment``."""
    if space.language == pivot:
        raise ConfigError(f"{pivot} is the pivot language and keeps the identity map")
    if alignment.source != space.language:
        raise ConfigError(f"alignment for {alignment.source!r} applied to {space.language!r}")
    if alignment.matrix.shape != (space.dim, space.dim):
        raise ConfigError(f"alignment shape {alignment.matrix.shape} does not fit dimension {space.dim}")
    return space.with_alignment(alignment.matrix)


def save_alignment(alignment, path):
    a = alignment.matrix
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{a.shape[0]} {a.shape[1]}\n")
        for i, row in enumerate(a):
            f.write(f"{i} " + " ".join(repr(float(x)) for x in row) + "\n")


def load_alignment(path, source, target=PIVOT):
    space = embeddings.load_vectors(path, language=source)
    words = space.vocabulary.words
    rows = np.empty((len(words), space.dim))
    for w in words:
        if not w.isdigit() or int(w) >= len(words):
            raise FormatError(f"alignment row label {w!r} is not a row index", path)
        rows[int(w)] = space.vectors[space.vocabulary.lookup(w)]
    if rows.shape[0] != rows.shape[1]:
        raise FormatError(f"alignment matrix must be square, got {rows.shape}", path)
    return AlignmentMatrix(rows, source, target)
