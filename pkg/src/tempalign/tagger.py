"""BiLSTM-CRF temporal tagger with a shared feature extractor and a language discriminator.

Parameter groups:

* feature extractor ``F(x) = tanh(W^T E(x))`` -- ``W`` (and the embedding
  tables when they are trainable), shared by every language;
* tagger -- forward/backward LSTMs, emission projection, CRF scores;
* discriminator ``D(x) = softmax(T^T relu(V^T F(x)))`` over the language
  inventory, fed through a gradient-reversal node.
"""

import json
import struct
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .crf import CrfLayer
from .embeddings import PAD_ID, EmbeddingSpace, Vocabulary
from .errors import ConfigError, ContractError, DataError, FormatError
from .evaluation import iob2_to_spans
from .labels import SCHEME, LabelScheme, is_valid_iob2

MAGIC = b"TALGNCKP"
VERSION = 1


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm(x, wx, wh, b):
    """Unidirectional LSTM over ``x`` ``[B, T, D]`` from zero state; returns ``[B, T, H]``.

    Gate layout along the last axis of ``wx``/``wh``/``b``: input, forget,
    cell, output.  Recorded as a single tape node with its own BPTT rule.
    """
    B, T, D = x.shape
    H = wh.shape[0]
    if wx.shape != (D, 4 * H) or wh.shape != (H, 4 * H) or b.shape != (4 * H,):
        raise ContractError(f"LSTM weight shapes {wx.shape}, {wh.shape}, {b.shape} "
                            f"do not fit input dim {D}")
    xw = x.data @ wx.data + b.data
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((B, T, H))
    cache = []
    for t in range(T):
        z = xw[:, t] + h @ wh.data
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, t] = h
        cache.append((i, f, g, o, c_prev, tc, h_prev))

    def bw(grad):
        dxw = np.empty((B, T, 4 * H))
        dwh = np.zeros_like(wh.data)
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            i, f, g, o, c_prev, tc, h_prev = cache[t]
            dh = grad[:, t] + dh_next
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = dxw[:, t]
            dz[:, :H] = dc * g * i * (1.0 - i)
            dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
            dz[:, 3 * H:] = do * o * (1.0 - o)
            dc_next = dc * f
            dwh += h_prev.T @ dz
            dh_next = dz @ wh.data.T
        flat = dxw.reshape(-1, 4 * H)
        return (dxw @ wx.data.T,
                x.data.reshape(-1, D).T @ flat,
                dwh,
                flat.sum(axis=0))

    return ad._result(hs, (x, wx, wh, b), bw)


def reverse_index(lengths, T):
    """Per-row time permutation reversing each sequence within its length."""
    idx = np.tile(np.arange(T), (len(lengths), 1))
    for r, n in enumerate(lengths):
        idx[r, :n] = np.arange(n - 1, -1, -1)
    return idx


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _uniform(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class LstmParams:
    def __init__(self, rng, dim_in, hidden, prefix):
        H = hidden
        wx = np.concatenate([_uniform(rng, (dim_in, H), dim_in, H) for _ in range(4)], axis=1)
        wh = np.concatenate([_orthogonal(rng, H) for _ in range(4)], axis=1)
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0  # forget gate
        self.wx = Tensor(wx, True, f"{prefix}.wx")
        self.wh = Tensor(wh, True, f"{prefix}.wh")
        self.b = Tensor(b, True, f"{prefix}.b")

    @property
    def params(self):
        return [self.wx, self.wh, self.b]

    def __call__(self, x):
        return lstm(x, self.wx, self.wh, self.b)


class Batch:
    """Padded token ids, label ids and mask for sentences of one language."""

    def __init__(self, language, ids, mask, tags=None, sentence_ids=None):
        self.language = language
        self.ids = ids
        self.mask = mask
        self.tags = tags
        self.sentence_ids = sentence_ids

    @property
    def lengths(self):
        return self.mask.sum(axis=1)

    def __len__(self):
        return self.ids.shape[0]


class TaggerModel:
    """All parameters plus the per-language embedding tables they read from."""

    def __init__(self, spaces, languages=None, hidden=128, disc_hidden=100, seed=0,
                 trainable_embeddings=False, crf_constraints=False, scheme=SCHEME):
        if not spaces:
            raise ConfigError("the model needs at least one embedding space")
        dims = {lang: s.dim for lang, s in spaces.items()}
        if len(set(dims.values())) != 1:
            raise ConfigError(f"embedding dimensionality differs across languages: {dims}")
        self.scheme = scheme
        self.languages = list(languages) if languages is not None else sorted(spaces)
        missing = [lang for lang in self.languages if lang not in spaces]
        if missing:
            raise ConfigError(f"no embedding space for language(s) {missing}")
        self.spaces = dict(spaces)
        self.dim = next(iter(dims.values()))
        self.hidden = hidden
        self.disc_hidden = disc_hidden
        self.trainable_embeddings = trainable_embeddings
        self.crf_constraints = crf_constraints
        S, H, L, O = self.dim, hidden, len(scheme), len(self.languages)
        rng = np.random.default_rng(seed)

        self.W = Tensor(np.eye(S), True, "feature.W")
        self.fw = LstmParams(rng, S, H, "lstm.fw")
        self.bw = LstmParams(rng, S, H, "lstm.bw")
        self.emit_w = Tensor(_uniform(rng, (2 * H, L), 2 * H, L), True, "emit.w")
        self.emit_b = Tensor(np.zeros(L), True, "emit.b")
        self.crf = CrfLayer(L, (scheme.allowed_transitions(), scheme.allowed_starts())
                            if crf_constraints else None)
        self.V = Tensor(_uniform(rng, (S, disc_hidden), S, disc_hidden), True, "disc.V")
        self.T = Tensor(_uniform(rng, (disc_hidden, O), disc_hidden, O), True, "disc.T")
        self.emb = {lang: Tensor(self.spaces[lang].matrix().copy(), trainable_embeddings,
                                 f"emb.{lang}") for lang in sorted(self.spaces)}

    # -- parameter groups ------------------------------------------------
    @property
    def theta_f(self):
        out = [self.W]
        if self.trainable_embeddings:
            out += [self.emb[k] for k in sorted(self.emb)]
        return out

    @property
    def theta_c(self):
        return self.fw.params + self.bw.params + [self.emit_w, self.emit_b] + self.crf.params

    @property
    def theta_d(self):
        return [self.V, self.T]

    def named_tensors(self):
        """Every stored tensor in declaration order."""
        out = [self.W] + self.theta_c + self.theta_d
        out += [self.emb[k] for k in sorted(self.emb)]
        return [(t.name, t) for t in out]

    def parameters(self):
        return self.theta_f + self.theta_c + self.theta_d

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    # -- batching --------------------------------------------------------
    def make_batch(self, sentences, language, labels=None):
        """Pad token lists (and optional label lists) for ``language``."""
        if language not in self.spaces:
            raise ConfigError(f"language {language!r} has no embedding space in this model")
        if not sentences:
            raise ContractError("empty batch")
        vocab = self.spaces[language].vocabulary
        T = max(len(s) for s in sentences)
        if T == 0:
            raise ContractError("cannot tag an empty sentence")
        ids = np.full((len(sentences), T), PAD_ID, dtype=np.intp)
        mask = np.zeros((len(sentences), T), dtype=bool)
        for r, toks in enumerate(sentences):
            if not toks:
                raise ContractError("cannot tag an empty sentence")
            ids[r, :len(toks)] = vocab.encode(toks)
            mask[r, :len(toks)] = True
        tags = None
        if labels is not None:
            tags = np.zeros_like(ids)
            for r, labs in enumerate(labels):
                if not is_valid_iob2(labs):
                    raise DataError(f"sentence {r} of the {language} batch has an invalid "
                                    f"IOB2 sequence: {' '.join(labs)}")
                tags[r, :len(labs)] = self.scheme.encode(labs)
        return Batch(language, ids, mask, tags)

    # -- forward pieces --------------------------------------------------
    def embed(self, batch, dropout=0.0, key=None):
        e = self.emb[batch.language][batch.ids]
        return ad.dropout(e, dropout, key=key, training=key is not None)

    def feature_extract(self, embedded):
        return ad.tanh(ad.matmul(embedded, self.W))

    def encode(self, feats, lengths):
        B, T, _ = feats.shape
        if T == 0:
            raise ContractError("cannot encode an empty sentence")
        fwd = self.fw(feats)
        rev = reverse_index(lengths, T)
        rows = np.arange(B)[:, None]
        bwd = self.bw(feats[rows, rev])[rows, rev]
        return ad.concat([fwd, bwd], axis=-1)

    def emissions(self, encoded):
        return ad.matmul(encoded, self.emit_w) + self.emit_b

    def discriminator_logits(self, feats, lam):
        if len(self.languages) < 2:
            raise ConfigError("the discriminator needs at least two languages")
        reversed_feats = ad.grad_reverse(feats, lam)
        return ad.matmul(ad.relu(ad.matmul(reversed_feats, self.V)), self.T)

    def discriminate(self, feats, lam=0.0):
        """Per-token language distribution ``[..., O]``."""
        return ad.softmax(self.discriminator_logits(feats, lam), axis=-1)

    # -- losses ----------------------------------------------------------
    def forward_features(self, batch, dropout=0.0, key=None):
        return self.feature_extract(self.embed(batch, dropout, key))

    def tagger_loss(self, batch, feats):
        """Mean CRF negative log-likelihood over the batch."""
        em = self.emissions(self.encode(feats, batch.lengths))
        return ad.mean(self.crf.batch_nll(em, batch.tags, batch.mask))

    def discriminator_loss(self, batch, feats, lam):
        """Token cross-entropy, averaged per sentence, then over the batch.

        Returns the loss tensor and the number of correctly classified tokens.
        """
        try:
            target = self.languages.index(batch.language)
        except ValueError:
            raise ConfigError(f"language {batch.language!r} is not in the model inventory "
                              f"{self.languages}") from None
        logp = ad.log_softmax(self.discriminator_logits(feats, lam), axis=-1)
        mask_f = batch.mask.astype(np.float64)
        tok = ad.mul(logp[:, :, target], mask_f)
        per_sent = ad.div(ad.sum(tok, axis=1), batch.lengths.astype(np.float64))
        correct = int(np.sum((np.argmax(logp.data, axis=-1) == target) & batch.mask))
        return -ad.mean(per_sent), correct

    # -- inference -------------------------------------------------------
    def features(self, tokens, language):
        """``F(x)`` rows for one sentence as a numpy array (no dropout)."""
        with ad.no_grad():
            batch = self.make_batch([tokens], language)
            return self.forward_features(batch).data[0, :len(tokens)]

    def predict_batch(self, sentences, language):
        with ad.no_grad():
            batch = self.make_batch(sentences, language)
            feats = self.forward_features(batch)
            em = self.emissions(self.encode(feats, batch.lengths)).data
        out = []
        for r, toks in enumerate(sentences):
            path, _ = self.crf.decode(em[r, :len(toks)])
            out.append(self.scheme.decode(path))
        return out

    def predict_labels(self, tokens, language):
        return self.predict_batch([tokens], language)[0]

    def tag_sentence(self, tokens, language):
        return iob2_to_spans(self.predict_labels(tokens, language))

    def language_accuracy(self, sentences_by_lang):
        """Token-level accuracy of the discriminator; ``{lang: [tokens, ...]}``."""
        correct = total = 0
        with ad.no_grad():
            for lang, sents in sentences_by_lang.items():
                if not sents:
                    continue
                batch = self.make_batch(sents, lang)
                probs = self.discriminate(self.forward_features(batch)).data
                target = self.languages.index(lang)
                correct += int(np.sum((np.argmax(probs, axis=-1) == target) & batch.mask))
                total += int(batch.mask.sum())
        return correct / total if total else 0.0

    # -- persistence -----------------------------------------------------
    def snapshot(self):
        return [t.data.copy() for _, t in self.named_tensors()]

    def restore(self, arrays):
        for (_, t), a in zip(self.named_tensors(), arrays):
            t.data = a.copy()

    def save(self, path):
        path = Path(path)
        tensors = self.named_tensors()
        meta = {
            "version": VERSION,
            "labels": self.scheme.labels,
            "types": list(self.scheme.types),
            "languages": self.languages,
            "S": self.dim, "H": self.hidden, "disc_hidden": self.disc_hidden,
            "O": len(self.languages),
            "trainable_embeddings": self.trainable_embeddings,
            "crf_constraints": self.crf_constraints,
            "vocab": {lang: self.spaces[lang].vocabulary.words for lang in sorted(self.spaces)},
            "tensors": [[name, list(t.shape)] for name, t in tensors],
        }
        blob = json.dumps(meta, ensure_ascii=False, sort_keys=True).encode("utf-8")
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<II", VERSION, len(blob)))
            f.write(blob)
            for _, t in tensors:
                f.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        with open(str(path) + ".manifest", "w", encoding="utf-8") as f:
            for name, t in tensors:
                f.write(f"{name}\t{'x'.join(map(str, t.shape))}\n")

    @classmethod
    def load(cls, path):
        path = Path(path)
        with open(path, "rb") as f:
            if f.read(len(MAGIC)) != MAGIC:
                raise FormatError("not a tagger checkpoint", path)
            version, n = struct.unpack("<II", f.read(8))
            if version != VERSION:
                raise FormatError(f"unsupported checkpoint version {version}", path)
            meta = json.loads(f.read(n).decode("utf-8"))
            arrays = []
            for name, shape in meta["tensors"]:
                count = int(np.prod(shape)) if shape else 1
                buf = f.read(8 * count)
                if len(buf) != 8 * count:
                    raise FormatError(f"truncated tensor {name}", path)
                arrays.append(np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape))
        scheme = LabelScheme(meta["types"])
        if scheme.labels != meta["labels"]:
            raise FormatError("label inventory does not match its types", path)
        by_name = {name: a for (name, _), a in zip(meta["tensors"], arrays)}
        spaces = {}
        for lang, words in meta["vocab"].items():
            spaces[lang] = EmbeddingSpace(lang, Vocabulary(words), by_name[f"emb.{lang}"])
        model = cls(spaces, meta["languages"], meta["H"], meta["disc_hidden"],
                    trainable_embeddings=meta["trainable_embeddings"],
                    crf_constraints=meta["crf_constraints"], scheme=scheme)
        for name, t in model.named_tensors():
            if name not in by_name or by_name[name].shape != t.shape:
                raise FormatError(f"tensor {name} missing or misshapen", path)
            t.data = by_name[name].copy()
        return model
