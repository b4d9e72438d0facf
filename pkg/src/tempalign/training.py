"""Alternating tagger/discriminator training with gradient reversal.

Tagger batches update the tagger and the feature extractor by descent on
the CRF loss.  After every ``disc_interval``-th tagger batch one
discriminator batch updates the discriminator by descent on its
cross-entropy, while the feature extractor receives the same gradient
multiplied by ``-lambda`` (through the reversal node), i.e. it ascends the
discriminator loss.
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import TrainConfig
from .errors import ConfigError, NumericError
from .evaluation import iob2_to_spans, repair_iob2, score
from .optim import SGD, AdamW

log = logging.getLogger(__name__)

TAGGER_LAYER = 0
DISC_LAYER = 1


class EarlyStopper:
    """Tracks the best dev metric; stops after ``patience`` epochs without a strict gain."""

    def __init__(self, patience=5):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = None
        self.since = 0

    def update(self, metric, epoch):
        if metric > self.best:
            self.best, self.best_epoch, self.since = metric, epoch, 0
            return True
        self.since += 1
        return False

    @property
    def should_stop(self):
        return self.since >= self.patience


def batch_plan(sizes, batch_size, seed, epoch):
    """Monolingual batches for one epoch as ``[(language, indices), ...]``.

    Each language's sentences are shuffled and chunked; batches of all
    languages are then interleaved in proportion to their counts.  The plan
    depends on (seed, epoch) only.
    """
    keyed = []
    for li, lang in enumerate(sorted(sizes)):
        rng = np.random.default_rng([seed, epoch, li, 0])
        order = rng.permutation(sizes[lang])
        chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
        for k, chunk in enumerate(chunks):
            keyed.append(((k + 0.5) / len(chunks), li, lang, chunk))
    keyed.sort(key=lambda x: (x[0], x[1]))
    return [(lang, chunk) for _, _, lang, chunk in keyed]


def global_norm(params):
    return float(np.sqrt(sum(np.sum(p.grad * p.grad) for p in params if p.grad is not None)))


def clip_grads(params, max_norm):
    if not max_norm:
        return
    norm = global_norm(params)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale


def make_optimizer(model, config):
    if config.optimizer == "sgd":
        return SGD(model.parameters(), lr=config.lr)
    return AdamW(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)


def _check_loss(value, what, epoch, batch):
    if not np.isfinite(value):
        raise NumericError(f"{what} diverged (value {value}) at epoch {epoch}, batch {batch}")


def tagger_step(model, batch, optimizer, config, key=None):
    """One descent step on the CRF loss for the tagger and feature extractor."""
    model.zero_grad()
    dropout_key = None if key is None else key + (TAGGER_LAYER,)
    feats = model.forward_features(batch, config.dropout, dropout_key)
    loss = model.tagger_loss(batch, feats)
    value = loss.item()
    if not np.isfinite(value):
        return value
    loss.backward()
    params = model.theta_c + model.theta_f
    clip_grads(params, config.clip_norm)
    optimizer.step(params)
    return value


def discriminator_step(model, batches, lam, optimizer, config, key=None):
    """One discriminator update on a mixed-language batch.

    ``batches`` holds one monolingual Batch per language present.  Returns
    (mean loss, correct tokens, total tokens).  The feature extractor is only
    stepped when ``lam > 0``; the tagger parameters are never touched.
    """
    model.zero_grad()
    total_sents = sum(len(b) for b in batches)
    loss = None
    correct = tokens = 0
    for j, batch in enumerate(batches):
        dropout_key = None if key is None else key + (DISC_LAYER + j,)
        feats = model.forward_features(batch, config.dropout, dropout_key)
        part, ok = model.discriminator_loss(batch, feats, lam)
        part = part * (len(batch) / total_sents)
        loss = part if loss is None else loss + part
        correct += ok
        tokens += int(batch.mask.sum())
    value = loss.item()
    if not np.isfinite(value):
        return value, correct, tokens
    loss.backward()
    params = model.theta_d + (model.theta_f if lam > 0 else [])
    clip_grads(params, config.clip_norm)
    optimizer.step(params)
    return value, correct, tokens


def sample_discriminator_batches(model, pools, batch_size, rng):
    """Draw an equal share of sentences from every language pool."""
    langs = [lang for lang in model.languages if pools.get(lang)]
    if len(langs) < 2:
        return []
    counts = {lang: batch_size // len(langs) for lang in langs}
    for lang in langs[:batch_size % len(langs)]:
        counts[lang] += 1
    out = []
    for lang in langs:
        if counts[lang] == 0:
            continue
        pool = pools[lang]
        idx = rng.integers(0, len(pool), size=counts[lang])
        out.append(model.make_batch([pool[i] for i in idx], lang))
    return out


# -- evaluation --------------------------------------------------------------

def predict_corpus(model, corpus, batch_size=64):
    """Predicted spans per sentence, in corpus order."""
    sents = [s.tokens for s in corpus.sentences]
    out = []
    for i in range(0, len(sents), batch_size):
        for labels in model.predict_batch(sents[i:i + batch_size], corpus.language):
            out.append(iob2_to_spans(labels))
    return out


def group_by_document(corpus, spans):
    """Spans per document id (sentence offsets shift token indices apart)."""
    docs = {}
    offsets = {}
    for s, sp in zip(corpus.sentences, spans):
        base = offsets.get(s.doc_id, 0)
        docs.setdefault(s.doc_id, []).extend(
            type(x)(x.start + base, x.end + base, x.type) for x in sp)
        offsets[s.doc_id] = base + len(s.tokens)
    return docs


def gold_spans(corpus):
    return [iob2_to_spans(s.labels) for s in corpus.sentences]


def _threads():
    try:
        return max(1, int(os.environ.get("TEMPALIGN_THREADS", "1")))
    except ValueError:
        return 1


def evaluate_dev(model, dev):
    """Per-language ScoreReports plus a micro-average over every dev document."""
    langs = sorted(lang for lang, c in dev.items() if len(c))
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        preds = list(pool.map(lambda lang: predict_corpus(model, dev[lang]), langs))
    per_lang = {}
    all_gold, all_pred = {}, {}
    for lang, pred in zip(langs, preds):
        g = group_by_document(dev[lang], gold_spans(dev[lang]))
        p = group_by_document(dev[lang], pred)
        per_lang[lang] = score(g, p)
        all_gold.update({(lang, k): v for k, v in g.items()})
        all_pred.update({(lang, k): v for k, v in p.items()})
    combined = score(all_gold, all_pred)
    return per_lang, combined


# -- training ----------------------------------------------------------------

@dataclass
class TrainResult:
    model: object
    log: list = field(default_factory=list)
    best_epoch: int = None
    best_metric: float = None
    seed: int = None


def _labeled(corpora):
    out = {}
    for lang, corpus in corpora.items():
        sents = [s for s in corpus.sentences if s.labels is not None]
        if sents:
            out[lang] = ([s.tokens for s in sents], [repair_iob2(s.labels) for s in sents])
    return out


def train(model, config, train_corpora, dev_corpora=None, unlabeled=None,
          log_path=None, stopper=None):
    """Train ``model`` in place and return it restored to its best dev epoch."""
    data = _labeled(train_corpora)
    if not data:
        raise ConfigError("training needs at least one labeled corpus")
    dev_corpora = {k: v for k, v in (dev_corpora or {}).items() if len(v)}
    unlabeled = unlabeled or {}
    pools = {lang: data[lang][0] for lang in data}
    for lang, sents in unlabeled.items():
        if sents:
            pools[lang] = list(sents)
    optimizer = make_optimizer(model, config)
    stopper = stopper or EarlyStopper(config.patience)
    use_disc = config.adversarial and len(model.languages) >= 2
    best = model.snapshot()
    records = []
    log_file = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            plan = batch_plan({k: len(v[0]) for k, v in data.items()},
                              config.batch_size, config.seed, epoch)
            lc = []
            ld = []
            d_ok = d_tok = 0
            for k, (lang, idx) in enumerate(plan):
                toks, labs = data[lang]
                batch = model.make_batch([toks[i] for i in idx], lang, [labs[i] for i in idx])
                value = tagger_step(model, batch, optimizer, config, (config.seed, epoch, k))
                _check_loss(value, "tagger loss", epoch, k)
                lc.append(value)
                # one discriminator step after every disc_interval-th batch of the epoch
                if use_disc and (k + 1) % config.disc_interval == 0:
                    rng = np.random.default_rng([config.seed, epoch, k, 1])
                    dbatches = sample_discriminator_batches(model, pools, config.batch_size, rng)
                    if dbatches:
                        value, ok, n = discriminator_step(model, dbatches, config.lam, optimizer,
                                                          config, (config.seed, epoch, k, 99))
                        _check_loss(value, "discriminator loss", epoch, k)
                        ld.append(value)
                        d_ok += ok
                        d_tok += n
            record = {
                "epoch": epoch,
                "loss_c": float(np.mean(lc)),
                "loss_d": float(np.mean(ld)) if ld else None,
                "disc_acc": d_ok / d_tok if d_tok else None,
                "dev": {},
                "combined": None,
            }
            if dev_corpora:
                per_lang, combined = evaluate_dev(model, dev_corpora)
                record["dev"] = {lang: {"strict": r.strict.f1, "relaxed": r.relaxed.f1,
                                        "type": r.type.f1} for lang, r in per_lang.items()}
                record["combined"] = {"strict": combined.strict.f1,
                                      "relaxed": combined.relaxed.f1,
                                      "type": combined.type.f1}
                if stopper.update(combined.relaxed.f1, epoch):
                    best = model.snapshot()
            else:
                stopper.best_epoch = epoch
                best = model.snapshot()
            records.append(record)
            if log_file:
                log_file.write(json.dumps(record, sort_keys=True) + "\n")
                log_file.flush()
            log.info("epoch %d loss_c=%.4f loss_d=%s combined=%s", epoch, record["loss_c"],
                     record["loss_d"], record["combined"])
            if dev_corpora and stopper.should_stop:
                break
    finally:
        if log_file:
            log_file.close()
    model.restore(best)
    best_metric = stopper.best if dev_corpora else None
    return TrainResult(model, records, stopper.best_epoch, best_metric, config.seed)


def median_index(scores):
    """Index of the median score (lower median for even counts, first on ties)."""
    if not scores:
        raise ValueError("no scores")
    order = sorted(range(len(scores)), key=lambda i: (scores[i], i))
    return order[(len(scores) - 1) // 2]


def multi_seed_run(build_model, config, seeds, train_corpora, dev_corpora=None,
                   unlabeled=None, out_dir=None):
    """Train once per seed; returns (results, index of the median run)."""
    if not seeds:
        raise ConfigError("need at least one seed")
    results = []
    for seed in seeds:
        cfg = TrainConfig(**{**config.__dict__, "seed": seed})
        log_path = None
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            log_path = Path(out_dir) / f"seed{seed}.log.jsonl"
        res = train(build_model(cfg), cfg, train_corpora, dev_corpora, unlabeled, log_path)
        if out_dir is not None:
            res.model.save(Path(out_dir) / f"seed{seed}.ckpt")
        results.append(res)
    scores = [r.best_metric if r.best_metric is not None else -np.inf for r in results]
    return results, median_index(scores)


def train_probe(model, sentences_by_lang, epochs=30, lr=1e-2, hidden=None, seed=0,
                batch_size=32):
    """Fit a fresh language classifier on the model's frozen ``F(x)`` features.

    Returns a function mapping ``{lang: sentences}`` to token accuracy.
    """
    langs = list(model.languages)
    rng = np.random.default_rng(seed)
    H = hidden or model.disc_hidden
    S = model.dim
    bound_v = np.sqrt(6.0 / (S + H))
    bound_t = np.sqrt(6.0 / (H + len(langs)))
    V = Tensor(rng.uniform(-bound_v, bound_v, (S, H)), True, "probe.V")
    T = Tensor(rng.uniform(-bound_t, bound_t, (H, len(langs))), True, "probe.T")
    opt = AdamW([V, T], lr=lr, weight_decay=0.0)

    def featurize(sents_by_lang):
        xs, ys = [], []
        for lang, sents in sents_by_lang.items():
            for toks in sents:
                xs.append(model.features(toks, lang))
                ys.append(np.full(len(toks), langs.index(lang)))
        return np.concatenate(xs), np.concatenate(ys)

    x, y = featurize(sentences_by_lang)
    for _ in range(epochs):
        order = rng.permutation(len(y))
        for i in range(0, len(y), batch_size * 8):
            sel = order[i:i + batch_size * 8]
            logp = ad.log_softmax(ad.matmul(ad.relu(ad.matmul(Tensor(x[sel]), V)), T), axis=-1)
            loss = -ad.mean(logp[np.arange(len(sel)), y[sel]])
            V.grad = T.grad = None
            loss.backward()
            opt.step()

    def accuracy(held_out):
        hx, hy = featurize(held_out)
        with ad.no_grad():
            logits = np.maximum(hx @ V.data, 0.0) @ T.data
        return float(np.mean(np.argmax(logits, axis=1) == hy))

    return accuracy
