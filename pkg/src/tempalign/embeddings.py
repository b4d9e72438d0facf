"""Per-language static word vectors.

Vector files use the common word2vec/fastText text layout: an optional
``<count> <dim>`` header, then one ``word v1 ... vS`` line per word, most
frequent first.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError

log = logging.getLogger(__name__)

PAD = "<pad>"
UNK = "<unk>"
PAD_ID = 0
UNK_ID = 1


class Vocabulary:
    """Dense index over surface forms; PAD is 0 and UNK is 1."""

    def __init__(self, words=(), freqs=None):
        self.forms = [PAD, UNK]
        self.index = {PAD: PAD_ID, UNK: UNK_ID}
        self.freqs = None if freqs is None else [0, 0]
        for i, w in enumerate(words):
            if w in self.index:
                continue
            self.index[w] = len(self.forms)
            self.forms.append(w)
            if self.freqs is not None:
                self.freqs.append(freqs[i])

    def __len__(self):
        return len(self.forms)

    def __contains__(self, form):
        return form in self.index and self.index[form] > UNK_ID

    def __iter__(self):
        return iter(self.forms[2:])

    @property
    def words(self):
        return self.forms[2:]

    def lookup(self, form):
        """Exact form, then lowercased form, then UNK."""
        i = self.index.get(form)
        if i is None:
            i = self.index.get(form.lower(), UNK_ID)
        return i

    def encode(self, tokens):
        return np.array([self.lookup(t) for t in tokens], dtype=np.intp)


@dataclass(frozen=True)
class EmbeddingSpace:
    language: str
    vocabulary: Vocabulary
    vectors: np.ndarray  # N x S, rows aligned with vocabulary indices
    alignment: np.ndarray = field(default=None)  # S x S, applied as row @ alignment

    def __post_init__(self):
        if self.vectors.shape[0] != len(self.vocabulary):
            raise FormatError(f"{self.vectors.shape[0]} vectors for {len(self.vocabulary)} "
                              "vocabulary entries")
        if self.alignment is not None:
            a = np.asarray(self.alignment, dtype=np.float64)
            if a.shape != (self.dim, self.dim):
                raise ConfigError(f"alignment of shape {a.shape} does not fit dimension {self.dim}")
            if np.max(np.abs(a.T @ a - np.eye(self.dim))) >= 1e-6:
                raise ConfigError("alignment matrix is not orthogonal")

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.vocabulary)

    def raw(self, token):
        return self.vectors[self.vocabulary.lookup(token)]

    def lookup(self, token):
        row = self.raw(token)
        return row if self.alignment is None else row @ self.alignment

    def matrix(self):
        """All lookup results as an N x S matrix (aligned when an alignment is set)."""
        if self.alignment is None:
            return self.vectors
        return self.vectors @ self.alignment

    def with_alignment(self, alignment):
        return replace(self, alignment=None if alignment is None else np.asarray(alignment, float))

    def unk_rate(self, sentences):
        total = unk = 0
        for tokens in sentences:
            ids = self.vocabulary.encode(tokens)
            total += len(ids)
            unk += int(np.sum(ids == UNK_ID))
        return unk / total if total else 0.0


def from_arrays(language, words, vectors):
    """Build a space from ``words`` and their rows; PAD is zero and UNK the mean row."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or len(words) != vectors.shape[0] or not len(words):
        raise FormatError("need one vector row per word and at least one word")
    vocab = Vocabulary(words)
    if len(vocab) - 2 != len(words):
        keep = [words.index(w) for w in vocab.words]
        vectors = vectors[keep]
    dim = vectors.shape[1]
    full = np.empty((len(vocab), dim))
    full[PAD_ID] = 0.0
    full[UNK_ID] = vectors.mean(axis=0)
    full[2:] = vectors
    return EmbeddingSpace(language, vocab, full)


def _is_header(parts):
    return len(parts) == 2 and all(p.isdigit() for p in parts)


def load_vectors(path, language=None, max_words=None):
    """Read the first ``max_words`` vectors of a text vector file."""
    path = Path(path)
    language = language or path.stem
    words, rows = [], []
    dim = None
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.rstrip("\r\n").rstrip(" ").split(" ")
            if not parts or parts == [""]:
                continue
            if lineno == 1 and _is_header(parts):
                continue
            if max_words is not None and len(words) >= max_words:
                break
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise FormatError("word without vector", path, lineno)
            elif len(values) != dim:
                raise FormatError(f"expected {dim} values, found {len(values)}", path, lineno)
            try:
                vec = [float(v) for v in values]
            except ValueError:
                raise FormatError("unparsable vector component", path, lineno) from None
            if word in seen:
                log.warning("%s:%d: duplicate word %r ignored", path, lineno, word)
                continue
            seen.add(word)
            words.append(word)
            rows.append(vec)
    if not words:
        raise FormatError("no word vectors found", path)
    return from_arrays(language, words, np.array(rows))


def save_vectors(space, path, aligned=False):
    """Write the space's words (not PAD/UNK) in the text vector format."""
    mat = space.matrix() if aligned else space.vectors
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(space) - 2} {space.dim}\n")
        for i, w in enumerate(space.vocabulary.words, 2):
            f.write(w + " " + " ".join(f"{x:.10g}" for x in mat[i]) + "\n")


def top_k_vocabulary(space, k=5000):
    """The ``k`` most frequent words; file order stands in for frequency."""
    if k < 1:
        raise ConfigError(f"k must be at least 1, got {k}")
    vocab = space.vocabulary
    words = vocab.words
    if vocab.freqs is not None:
        order = sorted(range(len(words)), key=lambda i: (-vocab.freqs[i + 2], i))
        words = [words[i] for i in order]
    if k > len(words):
        log.warning("requested top %d words but %s has only %d", k, space.language, len(words))
    return Vocabulary(words[:k])


def export_embeddings(model, sentences, path):
    """Write feature-extractor outputs, one TSV row per token.

    ``sentences`` is an iterable of (language, tokens) pairs.
    """
    path = Path(path)
    dim = model.dim
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write("lang\ttoken\t" + "\t".join(f"f{i}" for i in range(dim)) + "\n")
            for language, tokens in sentences:
                feats = model.features(tokens, language)
                for tok, row in zip(tokens, feats):
                    f.write(f"{language}\t{tok}\t" + "\t".join(repr(float(x)) for x in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write embeddings to {path}: {exc}") from exc
