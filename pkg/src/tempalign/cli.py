"""Command-line entry point: ``tempalign <command> [flags]``.

Exit codes: 0 success, 1 usage or configuration error, 2 bad input data,
3 numeric failure during training.
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import alignment as al
from .config import TrainConfig, validate_config
from .corpus import load_labeled, load_unlabeled
from .embeddings import export_embeddings, load_vectors, top_k_vocabulary
from .errors import ConfigError, DataError, TempAlignError
from .evaluation import (TimexSpan, corpus_stats, format_stats, iob2_to_spans,
                         paired_permutation_test, per_document_f1, score)
from .tagger import TaggerModel
from .training import group_by_document, median_index, train

log = logging.getLogger("tempalign")

ALPHA = 0.05


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; usage errors here map to 1."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _write_json(obj, path=None):
    text = json.dumps(obj, indent=2, ensure_ascii=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _existing(path, flag):
    if not Path(path).exists():
        raise ConfigError(f"{flag}: no such file {path}")
    return Path(path)


def _lang_paths(items, flag):
    """Parse repeated ``LANG=PATH`` flag values."""
    out = {}
    for item in items or ():
        lang, sep, path = item.partition("=")
        if not sep or not lang or not path:
            raise ConfigError(f"{flag}: expected LANG=PATH, got {item!r}")
        out[lang] = path
    return out


# -- spans.json ----------------------------------------------------------------

def spans_document(corpus, spans):
    """JSON-ready predictions for ``corpus``: one entry per sentence."""
    sentences = []
    for i, (s, sp) in enumerate(zip(corpus.sentences, spans)):
        sentences.append({
            "index": i,
            "doc": s.doc_id,
            "tokens": s.tokens,
            "spans": [{"start": x.start, "end": x.end, "type": x.type,
                       "text": " ".join(s.tokens[x.start:x.end + 1])} for x in sp],
        })
    return {"language": corpus.language, "sentences": sentences}


def load_spans(path, corpus=None):
    """Span lists per sentence from a spans.json file, checked against ``corpus``."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
        rows = obj["sentences"]
        spans = [[TimexSpan(int(x["start"]), int(x["end"]), str(x["type"])) for x in r["spans"]]
                 for r in rows]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: not a spans file ({exc})") from None
    if corpus is not None:
        if len(rows) != len(corpus):
            raise DataError(f"{path}: {len(rows)} sentences but the gold corpus has {len(corpus)}")
        for r, s in zip(rows, corpus.sentences):
            if r.get("doc", s.doc_id) != s.doc_id:
                raise DataError(f"{path}: sentence {r.get('index')} belongs to document "
                                f"{r.get('doc')!r}, gold says {s.doc_id!r}")
    return spans


def _gold_docs(corpus):
    if any(s.labels is None for s in corpus.sentences):
        raise DataError("gold corpus must have a label column")
    return group_by_document(corpus, [iob2_to_spans(s.labels) for s in corpus.sentences])


# -- commands ------------------------------------------------------------------

def cmd_align(args):
    paths = _lang_paths(args.vectors, "--vectors")
    for lang in (args.src, args.tgt):
        if lang not in paths:
            raise ConfigError(f"--vectors: no vectors given for {lang!r} (use --vectors {lang}=PATH)")
        _existing(paths[lang], "--vectors")
    src = load_vectors(paths[args.src], args.src, args.max_words)
    tgt = load_vectors(paths[args.tgt], args.tgt, args.max_words)
    src_top = top_k_vocabulary(src, args.k)
    tgt_top = top_k_vocabulary(tgt, args.k)
    if args.method == "dictionary":
        if not args.dict:
            raise ConfigError("--dict is required with --method dictionary")
        dictionary = al.load_dictionary(_existing(args.dict, "--dict"), src_top, tgt_top,
                                        args.src, args.tgt)
    else:
        dictionary = al.build_dictionary_string_match(src_top, tgt_top, args.k, args.src, args.tgt)
    matrix = al.procrustes_align(src, tgt, dictionary)
    al.save_alignment(matrix, args.out)
    res = al.residual(src, tgt, dictionary, matrix)
    print(f"dictionary\t{len(dictionary)} pairs ({dictionary.dropped} dropped)")
    print(f"residual\t{res:.6f}")
    print(f"orthogonality\t{matrix.orthogonality_error():.3e}")
    return 0


def _load_spaces(config):
    """Embedding spaces for every configured language, aligned where asked."""
    spaces = {}
    for lang in config.languages:
        if lang not in config.vectors:
            raise ConfigError(f"vectors.{lang}: no vector file for language {lang!r} "
                              f"(set it in the config or pass --vectors {lang}=PATH)")
        path = _existing(config.vectors[lang], f"vectors.{lang}")
        space = load_vectors(path, lang, config.max_vectors or None)
        if lang in config.alignment:
            matrix = al.load_alignment(_existing(config.alignment[lang], f"alignment.{lang}"), lang,
                                       config.pivot)
            space = al.apply_alignment(space, matrix, config.pivot)
        spaces[lang] = space
    return spaces


def _load_inputs(config):
    train_c = {lang: load_labeled(p, "train") for lang, p in config.train.items()}
    dev_c = {lang: load_labeled(p, "dev") for lang, p in config.dev.items()}
    pools = {lang: load_unlabeled(p, lang) for lang, p in config.unlabeled.items()}
    for lang, c in {**train_c, **dev_c}.items():
        if c.language != lang:
            raise DataError(f"corpus for {lang!r} declares language {c.language!r}")
    return train_c, dev_c, pools


def _run_seed(config, out_dir):
    """Train one seed; module-level so worker processes can run it."""
    spaces = _load_spaces(config)
    train_c, dev_c, pools = _load_inputs(config)
    model = TaggerModel(spaces, config.languages, config.hidden, config.disc_hidden, config.seed,
                        config.trainable_embeddings, config.crf_constraints)
    res = train(model, config, train_c, dev_c, pools, out_dir / f"seed{config.seed}.log.jsonl")
    ckpt = out_dir / f"seed{config.seed}.ckpt"
    model.save(ckpt)
    return {"seed": config.seed, "checkpoint": ckpt.name, "best_epoch": res.best_epoch,
            "dev_relaxed_f1": res.best_metric}


def cmd_train(args):
    config = validate_config(_existing(args.config, "--config"), check_paths=False)
    overrides = _lang_paths(args.vectors, "--vectors")
    values = dict(config.__dict__)
    values["vectors"] = {**config.vectors, **overrides}
    if args.out:
        values["output"] = args.out
    config = TrainConfig(**values)
    for group in ("train", "dev", "test", "unlabeled", "vectors", "alignment"):
        for lang, p in getattr(config, group).items():
            flag = "--vectors" if group == "vectors" and lang in overrides else f"{group}.{lang}"
            _existing(p, flag)
    seeds = [config.seed]
    if args.seeds:
        try:
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"--seeds: expected comma-separated integers, got {args.seeds!r}") from None
        if not seeds:
            raise ConfigError("--seeds: no seeds given")
    out_dir = Path(config.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    configs = [TrainConfig(**{**config.__dict__, "seed": s}) for s in seeds]
    if args.jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            runs = list(pool.map(_run_seed, configs, [out_dir] * len(configs)))
    else:
        runs = [_run_seed(c, out_dir) for c in configs]
    scores = [r["dev_relaxed_f1"] if r["dev_relaxed_f1"] is not None else float("-inf") for r in runs]
    mid = median_index(scores)
    for i, r in enumerate(runs):
        r["median"] = i == mid
        f1 = "n/a" if r["dev_relaxed_f1"] is None else f"{r['dev_relaxed_f1']:.4f}"
        mark = "\t(median)" if i == mid else ""
        print(f"seed {r['seed']}\tbest epoch {r['best_epoch']}\tdev relaxed F1 {f1}{mark}")
    _write_json({"runs": runs, "median_seed": runs[mid]["seed"],
                 "median_checkpoint": runs[mid]["checkpoint"]}, out_dir / "summary.json")
    return 0


def cmd_tag(args):
    model = TaggerModel.load(_existing(args.model, "--model"))
    corpus = load_labeled(_existing(args.input, "--input"))
    lang = args.lang or corpus.language
    if lang not in model.spaces:
        raise ConfigError(f"--lang: the model has no embedding space for {lang!r}")
    corpus.language = lang
    sents = [s.tokens for s in corpus.sentences]
    spans = []
    for i in range(0, len(sents), 64):
        spans += [iob2_to_spans(labels) for labels in model.predict_batch(sents[i:i + 64], lang)]
    _write_json(spans_document(corpus, spans), args.out)
    print(f"tagged {len(sents)} sentences, {sum(map(len, spans))} expressions -> {args.out}")
    return 0


def cmd_evaluate(args):
    gold = load_labeled(_existing(args.gold, "--gold"))
    pred = load_spans(_existing(args.pred, "--pred"), gold)
    report = score(_gold_docs(gold), group_by_document(gold, pred), type_mode=args.type_mode)
    if args.json:
        _write_json(report.to_dict())
    else:
        print(report.table(f"{args.pred} vs {args.gold}"))
    return 0


def cmd_significance(args):
    gold = load_labeled(_existing(args.gold, "--gold"))
    g = _gold_docs(gold)
    a = group_by_document(gold, load_spans(_existing(args.predA, "--predA"), gold))
    b = group_by_document(gold, load_spans(_existing(args.predB, "--predB"), gold))
    fa = per_document_f1(g, a, args.metric)
    fb = per_document_f1(g, b, args.metric)
    p = paired_permutation_test(fa, fb, iterations=args.iterations, seed=args.seed, exact=args.exact)
    verdict = "significant" if p < ALPHA else "not significant"
    result = {"metric": args.metric, "documents": int(fa.size), "mean_a": float(fa.mean()),
              "mean_b": float(fb.mean()), "p_value": p, "alpha": ALPHA, "verdict": verdict}
    if args.json:
        _write_json(result)
    else:
        print(f"{args.metric} F1 per document: A={fa.mean():.4f} B={fb.mean():.4f} "
              f"over {fa.size} documents")
        print(f"p = {p:.4f}: {verdict} at alpha={ALPHA}")
    return 0


def cmd_export(args):
    model = TaggerModel.load(_existing(args.model, "--model"))
    corpus = load_labeled(_existing(args.input, "--input"))
    lang = args.lang or corpus.language
    if lang not in model.spaces:
        raise ConfigError(f"--lang: the model has no embedding space for {lang!r}")
    export_embeddings(model, [(lang, s.tokens) for s in corpus.sentences], args.out)
    print(f"wrote {sum(len(s.tokens) for s in corpus.sentences)} token rows -> {args.out}")
    return 0


def cmd_stats(args):
    rows = []
    for path in args.corpus:
        corpus = load_labeled(_existing(path, "--corpus"))
        n_sent, n_expr = corpus_stats(corpus)
        rows.append({"file": Path(path).name, "language": corpus.language, "split": corpus.split,
                     "sentences": n_sent, "expressions": n_expr})
    if args.json:
        _write_json(rows)
    else:
        print("corpus\tsentences/temporal expressions")
        for r in rows:
            print(format_stats(f"{r['language']}-{r['split']}", (r["sentences"], r["expressions"])))
    return 0


def build_parser():
    p = _Parser(prog="tempalign", description="Multilingual temporal expression tagging.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("align", help="fit an orthogonal map from one language to the pivot")
    a.add_argument("--method", choices=("string-match", "dictionary"), default="string-match")
    a.add_argument("--src", required=True, help="source language code")
    a.add_argument("--tgt", default=al.PIVOT, help="pivot language code (default: en)")
    a.add_argument("--vectors", action="append", required=True, metavar="LANG=PATH",
                   help="vector file per language; give one for --src and one for --tgt")
    a.add_argument("--dict", help="TSV lexicon for --method dictionary")
    a.add_argument("--k", type=int, default=5000, help="top-k words used for the dictionary")
    a.add_argument("--max-words", type=int, default=None, help="read only the first N vectors")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_align)

    t = sub.add_parser("train", help="train the tagger, once per seed")
    t.add_argument("--config", required=True)
    t.add_argument("--seeds", help="comma-separated seeds, e.g. 1,2,3")
    t.add_argument("--vectors", action="append", metavar="LANG=PATH",
                   help="override a vectors.LANG config entry")
    t.add_argument("--out", help="output directory (overrides the config's output)")
    t.add_argument("--jobs", type=int, default=1, help="train seeds in parallel processes")
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("tag", help="predict temporal expressions")
    g.add_argument("--model", required=True)
    g.add_argument("--input", required=True, help="column-format corpus (labels optional)")
    g.add_argument("--lang", help="language of the input (default: its '# lang:' line)")
    g.add_argument("--out", required=True, help="spans.json to write")
    g.set_defaults(func=cmd_tag)

    e = sub.add_parser("evaluate", help="strict/relaxed/type scores of predictions")
    e.add_argument("--gold", required=True)
    e.add_argument("--pred", required=True)
    e.add_argument("--type-mode", choices=("count", "attribute"), default="count")
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("significance", help="paired permutation test between two systems")
    s.add_argument("--gold", required=True)
    s.add_argument("--predA", required=True)
    s.add_argument("--predB", required=True)
    s.add_argument("--metric", choices=("strict", "relaxed", "type"), default="relaxed")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--iterations", type=int, default=10000)
    s.add_argument("--exact", action="store_true", help="enumerate every sign flip")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_significance)

    x = sub.add_parser("export-embeddings", help="write F(x) for each token as TSV")
    x.add_argument("--model", required=True)
    x.add_argument("--input", required=True)
    x.add_argument("--lang")
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export)

    c = sub.add_parser("stats", help="sentences / temporal expressions per corpus")
    c.add_argument("--corpus", nargs="+", required=True)
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_stats)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except TempAlignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
