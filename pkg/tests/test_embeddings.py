import logging

import numpy as np
import pytest

from tempalign.embeddings import (PAD_ID, UNK_ID, Vocabulary, export_embeddings, from_arrays,
                                  load_vectors, save_vectors, top_k_vocabulary)
from tempalign.errors import ConfigError, FormatError
from tempalign.tagger import TaggerModel


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_vocabulary_reserved_indices_and_total_lookup():
    v = Vocabulary(["Madrid", "casa"])
    assert v.lookup("Madrid") == 2 and v.lookup("casa") == 3
    assert v.lookup("CASA") == 3  # falls back to the lowercased form
    assert v.lookup("madrid") == UNK_ID  # the vocabulary itself is not case-folded
    assert Vocabulary(["madrid"]).lookup("Madrid") == 2
    assert v.lookup("nowhere") == UNK_ID
    assert "Madrid" in v and "<unk>" not in v
    assert v.encode(["casa", "x"]).tolist() == [3, UNK_ID]
    assert len(v) == 4 and PAD_ID == 0


def test_load_three_words_with_header(tmp_path):
    p = write(tmp_path / "es.vec", "3 4\na 1 2 3 4\nb 0 0 0 1\nc 1 1 1 1\n")
    space = load_vectors(p)
    assert space.language == "es"
    assert space.matrix().shape == (5, 4) and space.dim == 4
    assert np.all(space.matrix()[PAD_ID] == 0)


def test_unk_is_mean_of_rows(tmp_path):
    space = load_vectors(write(tmp_path / "x.vec", "u 1 1\nw 3 3\n"))
    assert space.lookup("unseen").tolist() == [2.0, 2.0]


def test_max_words(tmp_path):
    space = load_vectors(write(tmp_path / "x.vec", "u 1 1\nw 3 3\n"), max_words=1)
    assert space.vocabulary.words == ["u"]


def test_inconsistent_dimension_reports_line(tmp_path):
    p = write(tmp_path / "x.vec", "2 3\na 1 2 3\nb 1 2\n")
    with pytest.raises(FormatError, match=r"x\.vec:3"):
        load_vectors(p)


def test_empty_file(tmp_path):
    with pytest.raises(FormatError):
        load_vectors(write(tmp_path / "x.vec", ""))


def test_round_trip_within_text_precision(tmp_path):
    rng = np.random.default_rng(0)
    space = from_arrays("de", [f"w{i}" for i in range(20)], rng.standard_normal((20, 6)))
    save_vectors(space, tmp_path / "de.vec")
    again = load_vectors(tmp_path / "de.vec", "de")
    assert again.vocabulary.words == space.vocabulary.words
    assert np.max(np.abs(again.vectors[2:] - space.vectors[2:])) < 1e-6


def test_lookup_known_unknown_and_rotation():
    space = from_arrays("xx", ["a", "b"], np.array([[1.0, 0.0], [0.0, 2.0]]))
    assert space.lookup("a").tolist() == [1.0, 0.0]
    assert np.array_equal(space.lookup("zzz"), space.raw("zzz"))
    theta = 0.3
    R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    rotated = space.with_alignment(R)
    # rows are mapped as v -> v @ A, the convention in which X A ~ Y is solved
    assert np.allclose(rotated.lookup("b"), np.array([0.0, 2.0]) @ R, rtol=0, atol=1e-15)


def test_identity_alignment_is_bit_identical():
    rng = np.random.default_rng(1)
    space = from_arrays("xx", ["a", "b", "c"], rng.standard_normal((3, 4)))
    ident = space.with_alignment(np.eye(4))
    for w in ("a", "b", "c", "nope"):
        assert ident.lookup(w).tobytes() == space.lookup(w).tobytes()


def test_non_orthogonal_alignment_rejected():
    space = from_arrays("xx", ["a"], np.ones((1, 2)))
    with pytest.raises(ConfigError):
        space.with_alignment(np.array([[2.0, 0.0], [0.0, 1.0]]))


def test_unk_rate_is_reported():
    space = from_arrays("xx", ["a", "b"], np.ones((2, 2)))
    assert space.unk_rate([["a", "q"], ["b", "b"]]) == 0.25


def test_top_k(caplog):
    space = from_arrays("xx", list("abcde"), np.ones((5, 2)))
    assert top_k_vocabulary(space, 2).words == ["a", "b"]
    assert top_k_vocabulary(space, 5).words == space.vocabulary.words
    with caplog.at_level(logging.WARNING):
        assert top_k_vocabulary(from_arrays("yy", list("abc"), np.ones((3, 2))), 5000).words == list("abc")
    assert "5000" in caplog.text
    with pytest.raises(ConfigError):
        top_k_vocabulary(space, 0)


def _model(seed=0):
    rng = np.random.default_rng(seed)
    spaces = {lang: from_arrays(lang, [f"{lang}{i}" for i in range(4)], rng.standard_normal((4, 3)))
              for lang in ("aa", "bb")}
    model = TaggerModel(spaces, hidden=2, disc_hidden=2, seed=seed)
    model.W.data = rng.standard_normal((3, 3))
    return model


def test_export_rows_equal_independent_features(tmp_path):
    model = _model()
    out = tmp_path / "feats.tsv"
    export_embeddings(model, [("aa", ["aa0", "aa3", "zz"])], out)
    lines = out.read_text().splitlines()
    assert lines[0].split("\t") == ["lang", "token", "f0", "f1", "f2"]
    assert len(lines) == 4
    for line, tok in zip(lines[1:], ["aa0", "aa3", "zz"]):
        cols = line.split("\t")
        assert cols[:2] == ["aa", tok]
        expected = np.tanh(model.spaces["aa"].lookup(tok) @ model.W.data)
        assert np.allclose([float(c) for c in cols[2:]], expected, rtol=0, atol=1e-12)


def test_export_changes_with_parameters(tmp_path):
    model = _model()
    export_embeddings(model, [("bb", ["bb1", "bb2"])], tmp_path / "a.tsv")
    model.W.data = model.W.data * 0.5
    export_embeddings(model, [("bb", ["bb1", "bb2"])], tmp_path / "b.tsv")
    assert (tmp_path / "a.tsv").read_text() != (tmp_path / "b.tsv").read_text()


def test_export_io_failure_names_path(tmp_path):
    with pytest.raises(OSError, match="missing"):
        export_embeddings(_model(), [("aa", ["aa0"])], tmp_path / "missing" / "x.tsv")
