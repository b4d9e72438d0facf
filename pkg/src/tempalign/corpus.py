"""Column-format corpora and unlabeled sentence pools.

Labeled files look like::

    # lang: en
    # doc: wsj_0001
    On\tO
    March\tB-DATE
    3\tI-DATE
    .\tO

A blank line ends a sentence.  ``# doc:`` groups the following sentences
into one evaluation document; without it every sentence is its own.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, FormatError
from .labels import SCHEME, is_valid_iob2

log = logging.getLogger(__name__)


@dataclass
class AnnotatedSentence:
    language: str
    tokens: list
    labels: list = None
    doc_id: str = ""

    def __post_init__(self):
        if not self.tokens:
            raise DataError("sentence without tokens")
        if self.labels is not None and len(self.labels) != len(self.tokens):
            raise DataError(f"{len(self.tokens)} tokens but {len(self.labels)} labels")


@dataclass
class Corpus:
    language: str
    split: str = "train"
    sentences: list = field(default_factory=list)
    explicit_docs: set = field(default_factory=set)  # ids set by '# doc:' lines

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def documents(self):
        """Sentence indices grouped by document id, in first-seen order."""
        docs = {}
        for i, s in enumerate(self.sentences):
            docs.setdefault(s.doc_id, []).append(i)
        return docs


def _directive(line):
    body = line[1:].strip()
    key, sep, value = body.partition(":")
    if not sep:
        return None, None
    return key.strip().lower(), value.strip()


def load_labeled(path, split=None):
    path = Path(path)
    if split is None:
        split = next((s for s in ("train", "dev", "test") if s in path.stem), "train")
    language = None
    sentences = []
    tokens, labels = [], []
    doc, doc_ids = None, set()
    columns = None
    start_line = 0

    def flush():
        nonlocal tokens, labels
        if not tokens:
            return
        sid = doc if doc is not None else f"{path.stem}:{len(sentences)}"
        labs = labels if columns == 2 else None
        if labs is not None and not is_valid_iob2(labs):
            log.warning("%s:%d: invalid IOB2 sequence, stray I- labels will open spans",
                        path, start_line)
        sentences.append(AnnotatedSentence(language, tokens, labs, sid))
        tokens, labels = [], []

    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.rstrip("\r\n")
            if line.startswith("#") and not tokens:
                key, value = _directive(line)
                if key == "lang":
                    if language is not None:
                        raise FormatError("repeated # lang: directive", path, lineno)
                    language = value
                elif key == "doc":
                    if value in doc_ids:
                        raise FormatError(f"duplicate document id {value!r}", path, lineno)
                    doc_ids.add(value)
                    doc = value
                continue
            if language is None:
                raise FormatError("file must start with a '# lang: <iso>' line", path, lineno)
            if not line.strip():
                flush()
                continue
            cols = line.split("\t")
            if columns is None:
                columns = len(cols)
                if columns not in (1, 2):
                    raise FormatError(f"expected token<TAB>label, found {columns} columns",
                                      path, lineno)
            elif len(cols) != columns:
                raise FormatError(f"expected {columns} columns, found {len(cols)}", path, lineno)
            if not tokens:
                start_line = lineno
            tokens.append(cols[0])
            if columns == 2:
                if cols[1] not in SCHEME.index:
                    raise DataError(f"{path}:{lineno}: label {cols[1]!r} is not in the IOB2 scheme")
                labels.append(cols[1])
    flush()
    if language is None:
        raise FormatError("missing '# lang: <iso>' directive", path)
    log.info("%s: %d sentences (%s, %s)", path, len(sentences), language, split)
    return Corpus(language, split, sentences, doc_ids)


def save_labeled(corpus, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# lang: {corpus.language}\n")
        current = None
        for s in corpus.sentences:
            if s.doc_id in corpus.explicit_docs and s.doc_id != current:
                f.write(f"# doc: {s.doc_id}\n")
                current = s.doc_id
            for j, tok in enumerate(s.tokens):
                f.write(tok if s.labels is None else f"{tok}\t{s.labels[j]}")
                f.write("\n")
            f.write("\n")


def load_unlabeled(path, language=None):
    """One whitespace-tokenized sentence per line; blank lines are skipped."""
    path = Path(path)
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            toks = line.split()
            if toks:
                out.append(toks)
    if not out:
        log.warning("%s: no sentences in unlabeled pool%s", path,
                    f" for {language}" if language else "")
    return out


def save_unlabeled(sentences, path):
    with open(path, "w", encoding="utf-8") as f:
        for toks in sentences:
            f.write(" ".join(toks) + "\n")
