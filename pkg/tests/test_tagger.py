import numpy as np
import pytest

from tempalign import autodiff as ad
from tempalign.config import TrainConfig
from tempalign.corpus import AnnotatedSentence, Corpus
from tempalign.embeddings import from_arrays
from tempalign.errors import ConfigError, ContractError, DataError, FormatError
from tempalign.evaluation import iob2_to_spans
from tempalign.labels import is_valid_iob2
from tempalign.tagger import TaggerModel
from tempalign.training import train

S = 4


def spaces(langs=("aa", "bb"), n=8, seed=0):
    rng = np.random.default_rng(seed)
    return {lang: from_arrays(lang, [f"{lang}{i}" for i in range(n)], rng.standard_normal((n, S)))
            for lang in langs}


def model(langs=("aa", "bb"), seed=0, **kw):
    kw.setdefault("hidden", 5)
    kw.setdefault("disc_hidden", 6)
    return TaggerModel(spaces(langs), seed=seed, **kw)


def test_parameter_groups_and_shapes():
    m = model(hidden=7, disc_hidden=3)
    assert m.W.shape == (S, S) and np.array_equal(m.W.data, np.eye(S))
    assert m.emit_w.shape == (14, 9) and m.crf.trans.shape == (9, 9)
    assert m.V.shape == (S, 3) and m.T.shape == (3, 2)
    assert [t.name for t in m.theta_f] == ["feature.W"]
    assert all(np.all(p.data == 0) for p in m.crf.params)
    assert not set(map(id, m.theta_c)) & set(map(id, m.theta_d + m.theta_f))
    assert len(model(trainable_embeddings=True).theta_f) == 3


def test_feature_extractor_examples():
    m = model()
    batch = m.make_batch([["aa1", "aa2", "zz"]], "aa")
    e = m.spaces["aa"].matrix()[[m.spaces["aa"].vocabulary.lookup(t) for t in ["aa1", "aa2", "zz"]]]
    assert np.allclose(m.forward_features(batch).data[0], np.tanh(e), rtol=0, atol=1e-15)
    m.W.data = np.zeros((S, S))
    assert np.all(m.forward_features(batch).data == 0)
    m.W.data = np.random.default_rng(1).standard_normal((S, S))
    assert np.allclose(m.forward_features(batch).data[0], np.tanh(e @ m.W.data), rtol=0, atol=1e-12)
    assert np.all(np.abs(m.forward_features(batch).data) < 1)


def test_unknown_language_and_empty_inputs():
    m = model()
    with pytest.raises(ConfigError):
        m.make_batch([["x"]], "zz")
    with pytest.raises(ContractError):
        m.make_batch([[]], "aa")
    with pytest.raises(DataError, match="sentence 0"):
        m.make_batch([["aa1", "aa2"]], "aa", [["O", "I-DATE"]])


def test_encode_shape_and_reversal_symmetry():
    m = model()
    rng = np.random.default_rng(2)
    for n in (1, 3, 6):
        assert m.encode(ad.Tensor(rng.standard_normal((1, n, S))), np.array([n])).shape == (1, n, 10)
    for mine, other in zip(m.bw.params, m.fw.params):
        mine.data = other.data.copy()
    x = rng.standard_normal((1, 5, S))
    fwd_of_reversed = m.encode(ad.Tensor(x[:, ::-1].copy()), np.array([5])).data[0, ::-1, :5]
    bwd = m.encode(ad.Tensor(x), np.array([5])).data[0, :, 5:]
    assert np.allclose(bwd, fwd_of_reversed, rtol=0, atol=1e-14)


def test_padding_does_not_change_predictions():
    m = model(seed=3)
    for p in m.theta_c:
        p.data = p.data + np.random.default_rng(4).standard_normal(p.shape)
    sents = [["aa1", "aa2", "aa3", "aa4"], ["aa5"], ["aa6", "aa0"]]
    batched = m.predict_batch(sents, "aa")
    assert batched == [m.predict_labels(s, "aa") for s in sents]


def test_discriminator_outputs():
    m = model(("aa", "bb", "cc"))
    batch = m.make_batch([["aa1", "aa2"]], "aa")
    probs = m.discriminate(m.forward_features(batch)).data
    assert np.allclose(probs.sum(axis=-1), 1.0, rtol=0, atol=1e-12) and np.all(probs >= 0)
    m.V.data = np.zeros_like(m.V.data)
    assert np.allclose(m.discriminate(m.forward_features(batch)).data, 1 / 3, rtol=0, atol=1e-15)
    loss, _ = m.discriminator_loss(batch, m.forward_features(batch), 0.0)
    assert abs(loss.item() - np.log(3)) < 1e-12
    with pytest.raises(ConfigError):
        single = model(("aa",))
        single.discriminate(single.forward_features(single.make_batch([["aa1"]], "aa")))


def test_lambda_zero_gives_exactly_zero_feature_gradient():
    m = model()
    batch = m.make_batch([["bb1", "bb3", "bb2"]], "bb")
    loss, _ = m.discriminator_loss(batch, m.forward_features(batch), 0.0)
    loss.backward()
    assert np.all(m.W.grad == 0.0)
    assert np.any(m.V.grad != 0.0)


def test_tag_sentence_total_and_deterministic():
    m = model(seed=5)
    rng = np.random.default_rng(5)
    for p in m.parameters():
        p.data = p.data + rng.standard_normal(p.shape)
    for toks in (["aa1"], ["aa2", "qq", "aa3", "aa4", "aa5"]):
        labels = m.predict_labels(toks, "aa")
        spans = m.tag_sentence(toks, "aa")
        assert spans == iob2_to_spans(labels) == m.tag_sentence(toks, "aa")
        assert all(0 <= s.start <= s.end < len(toks) for s in spans)


def test_constrained_decoding_is_valid_iob2():
    m = model(seed=6, crf_constraints=True)
    rng = np.random.default_rng(6)
    for p in m.theta_c:
        p.data = p.data + 2 * rng.standard_normal(p.shape)
    for _ in range(10):
        toks = [f"aa{i}" for i in rng.integers(0, 8, size=6)]
        assert is_valid_iob2(m.predict_labels(toks, "aa"))


def test_overfits_one_sentence():
    m = model(("aa",), hidden=8)
    sent = AnnotatedSentence("aa", ["aa1", "aa2", "aa3", "aa4", "aa5"],
                             ["O", "B-DATE", "I-DATE", "O", "B-SET"])
    cfg = TrainConfig(lr=0.05, epochs=60, dropout=0.0, batch_size=1)
    train(m, cfg, {"aa": Corpus("aa", "train", [sent])})
    assert m.predict_labels(sent.tokens, "aa") == sent.labels


def test_checkpoint_round_trip(tmp_path):
    m = model(seed=7)
    rng = np.random.default_rng(7)
    for p in m.parameters():
        p.data = p.data + rng.standard_normal(p.shape)
    path = tmp_path / "m.ckpt"
    m.save(path)
    back = TaggerModel.load(path)
    for (n1, t1), (n2, t2) in zip(m.named_tensors(), back.named_tensors()):
        assert n1 == n2 and np.array_equal(t1.data, t2.data)
    toks = ["aa1", "aa4", "aa2"]
    assert back.predict_labels(toks, "aa") == m.predict_labels(toks, "aa")
    back.save(tmp_path / "again.ckpt")
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()
    manifest = (tmp_path / "m.ckpt.manifest").read_text().splitlines()
    assert manifest[0] == "feature.W\t4x4"
    assert len(manifest) == len(m.named_tensors())


def test_checkpoint_corruption(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOTACKPT" + b"\0" * 16)
    with pytest.raises(FormatError):
        TaggerModel.load(bad)
    m = model()
    m.save(tmp_path / "m.ckpt")
    data = (tmp_path / "m.ckpt").read_bytes()
    (tmp_path / "cut.ckpt").write_bytes(data[:-40])
    with pytest.raises(FormatError, match="truncated"):
        TaggerModel.load(tmp_path / "cut.ckpt")


def test_mismatched_dimensions_rejected():
    sp = spaces(("aa",))
    sp["bb"] = from_arrays("bb", ["x"], np.ones((1, S + 1)))
    with pytest.raises(ConfigError):
        TaggerModel(sp)
