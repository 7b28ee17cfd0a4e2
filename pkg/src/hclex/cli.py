"""Command-line entry point: ``hclex <stage> [options]``.

Every stage resolves its parameters as built-in defaults, then the ``[stage]``
table (and top-level keys) of ``--config``, then explicit flags.  The resolved
parameters are written to ``run_config.toml`` in the output directory, and
``hclex <stage> --config <that file> --out <dir>`` reproduces the outputs.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import zlib
from pathlib import Path

import numpy as np
import toml

from . import __version__
from .classifier_eval import (DatasetError, build_dataset, dataset_csv, eval_report, evaluate_scores,
                              read_dataset_csv, read_scores)
from .cluster import (composition_csv, composition_report, export_3d, kmeans, pca_project,
                      silhouette, silhouette_sweep, sweep_csv)
from .corpus import Corpus, CorpusParseError, corpus_stats, parse_combined, read_csv
from .embedding import (EmptyVocabularyError, TrainConfig, build_vocab, load_embeddings,
                        save_embeddings, train)
from .lexicon import (LexiconError, ReviewLedger, apply_review, expand, load_candidates,
                      load_lexicon, load_published_lexicon, published_seeds, read_seed_csv,
                      save_candidates, save_lexicon, similarity_histogram)
from .scorer import (CompileError, aggregate_by_group, aggregate_by_period, compile_lexicon,
                     group_csv, parse_bucket, period_csv, read_scores_csv, score_corpus, scores_csv)
from .text import apply_phrases, learn_phrases, normalized_tokens

logger = logging.getLogger("hclex")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4
DATA_ERRORS = (CorpusParseError, LexiconError, DatasetError, CompileError, EmptyVocabularyError,
               ValueError, KeyError, OSError, toml.TomlDecodeError)


class UsageError(Exception):
    pass


# stage -> {parameter: default}; None marks a required parameter
STAGES: dict[str, dict] = {
    "prepare": {"corpus": None, "min_count": 5, "phrase_threshold": 10.0, "passes": 2},
    "train": {"tokens": None, "dimension": 100, "min_count": 5, "window": 5, "negatives": 5,
              "epochs": 5, "learning_rate": 0.025, "subsample": 1e-3, "seed": 1, "workers": 1},
    "expand": {"embeddings": None, "seeds": "", "threshold": 0.5, "antonyms": True},
    "review": {"candidates": None, "ledger": ""},
    "cluster": {"embeddings": None, "lexicon": "", "k": 0, "k_min": 2, "k_max": 25,
                "restarts": 10, "seed": 1, "normalize": False},
    "score": {"corpus": None, "lexicon": "", "exclude_subcategory": [], "workers": 1},
    "aggregate": {"scores": None, "corpus": "", "metadata": "", "bucket": "days:10"},
    "evaldataset": {"corpus": None, "pool": None, "neg_ratio": 2, "train_frac": 0.8, "seed": 1},
    "evalmetrics": {"dataset": None, "scores": None, "split": "test", "threshold": -1.0},
}
PATH_KEYS = {"corpus", "tokens", "embeddings", "seeds", "candidates", "ledger", "lexicon",
             "scores", "metadata", "pool", "dataset"}


def stage_seed(seed: int, stage: str) -> int:
    """Per-stage seed derived from the single user seed."""
    return (int(seed) ^ zlib.crc32(stage.encode())) & 0x7FFFFFFF


# ---------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hclex", description="Human-capital disclosure lexicon pipeline.")
    parser.add_argument("--version", action="version", version=f"hclex {__version__}")
    sub = parser.add_subparsers(dest="stage", metavar="STAGE", parser_class=_Parser)
    S = argparse.SUPPRESS

    def stage(name, help_):
        p = sub.add_parser(name, help=help_, argument_default=S)
        p.add_argument("--config", help="TOML file; flags override its values")
        p.add_argument("--out", help="output directory (default: out/<stage>)")
        p.add_argument("-v", "--verbose", action="store_true", default=False)
        return p

    p = stage("prepare", "corpus -> token streams + phrase table")
    p.add_argument("--corpus", help="combined file (.txt) or CSV (.csv)")
    p.add_argument("--min-count", dest="min_count", type=int)
    p.add_argument("--phrase-threshold", dest="phrase_threshold", type=float)
    p.add_argument("--passes", type=int)

    p = stage("train", "token streams -> embeddings")
    p.add_argument("--tokens")
    for flag, typ in (("--dimension", int), ("--min-count", int), ("--window", int),
                      ("--negatives", int), ("--epochs", int), ("--learning-rate", float),
                      ("--subsample", float), ("--seed", int), ("--workers", int)):
        p.add_argument(flag, dest=flag[2:].replace("-", "_"), type=typ)

    p = stage("expand", "embeddings + seeds -> candidates + histogram")
    p.add_argument("--embeddings")
    p.add_argument("--seeds", help="category,seed CSV (default: published seeds)")
    p.add_argument("--threshold", type=float)
    p.add_argument("--antonyms", action=argparse.BooleanOptionalAction)

    p = stage("review", "candidates + ledger -> lexicon")
    p.add_argument("--candidates")
    p.add_argument("--ledger", help="term,decision,target_category,note CSV")

    p = stage("cluster", "lexicon + embeddings -> sweep/composition/3-D CSVs")
    p.add_argument("--embeddings")
    p.add_argument("--lexicon", help="lexicon CSV (default: published lexicon)")
    for flag in ("--k", "--k-min", "--k-max", "--restarts", "--seed"):
        p.add_argument(flag, dest=flag[2:].replace("-", "_"), type=int)
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction)

    p = stage("score", "lexicon + corpus -> per-document CSV")
    p.add_argument("--corpus")
    p.add_argument("--lexicon", help="lexicon CSV (default: published lexicon)")
    p.add_argument("--exclude-subcategory", dest="exclude_subcategory", action="append")
    p.add_argument("--workers", type=int)

    p = stage("aggregate", "scores + metadata -> bucket/group CSVs")
    p.add_argument("--scores")
    p.add_argument("--corpus", help="corpus supplying filing dates")
    p.add_argument("--metadata", help="doc_id,date[,group] CSV")
    p.add_argument("--bucket", help="days:N or year")

    p = stage("evaldataset", "HC corpus + non-HC pool -> labeled sentence CSV")
    p.add_argument("--corpus")
    p.add_argument("--pool", help="non-HC sentences, one per line")
    p.add_argument("--neg-ratio", dest="neg_ratio", type=int)
    p.add_argument("--train-frac", dest="train_frac", type=float)
    p.add_argument("--seed", type=int)

    p = stage("evalmetrics", "dataset + id,probability scores -> eval JSON")
    p.add_argument("--dataset")
    p.add_argument("--scores")
    p.add_argument("--split")
    p.add_argument("--threshold", type=float, help="fixed threshold (default: F1-optimal)")
    return parser


def resolve(stage: str, args: argparse.Namespace) -> dict:
    params = dict(STAGES[stage])
    if getattr(args, "config", None):
        cfg = toml.load(args.config)
        base = Path(args.config).resolve().parent
        layer = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
        layer.update(cfg.get(stage, {}))
        for k, v in layer.items():
            if k not in params:
                continue  # shared configs may carry other stages' keys
            params[k] = str((base / v).resolve()) if k in PATH_KEYS and v else v
    for k in params:
        if hasattr(args, k):
            v = getattr(args, k)
            params[k] = str(Path(v).resolve()) if k in PATH_KEYS and v else v
    missing = [k for k, v in params.items() if v is None]
    if missing:
        raise UsageError(f"{stage}: missing required parameter(s): " +
                         ", ".join("--" + k.replace("_", "-") for k in missing))
    return params


def write_run_config(out: Path, stage: str, params: dict) -> None:
    body = {"stage": stage, "hclex_version": __version__, stage: params}
    (out / "run_config.toml").write_text(toml.dumps(body), encoding="utf-8")


# ---------------------------------------------------------------------------
# helpers


def _read_corpus(path: str) -> Corpus:
    data = Path(path).read_bytes()
    corpus = read_csv(data) if path.lower().endswith(".csv") else parse_combined(data)
    if corpus.report.duplicates or corpus.report.rejected:
        logger.warning("corpus: %d duplicate(s), %d rejected record(s)",
                       len(corpus.report.duplicates), len(corpus.report.rejected))
    return corpus


def _read_lexicon(path: str):
    if not path:
        return load_published_lexicon()
    return load_lexicon(Path(path).read_text(encoding="utf-8"))


def _write(out: Path, name: str, content: "str | bytes") -> None:
    target = out / name
    if isinstance(content, bytes):
        target.write_bytes(content)
    else:
        target.write_text(content, encoding="utf-8", newline="")


# ---------------------------------------------------------------------------
# stages


def run_prepare(p: dict, out: Path, seed: int) -> None:
    corpus = _read_corpus(p["corpus"])
    streams = [normalized_tokens(d.text) for d in corpus.documents]
    table = learn_phrases(streams, min_count=p["min_count"], threshold=p["phrase_threshold"],
                          passes=p["passes"])
    merged = [apply_phrases(s, table) for s in streams]
    _write(out, "phrases.tsv", table.to_tsv())
    _write(out, "tokens.txt", "".join(" ".join(s) + "\n" for s in merged))
    stats = corpus_stats(corpus)
    _write(out, "corpus_stats.json", json.dumps({
        "documents": stats.document_count, "tokens": stats.total_tokens, "phrases": len(table),
        "duplicates": len(corpus.report.duplicates), "rejected": len(corpus.report.rejected),
    }, indent=2, sort_keys=True) + "\n")


def _read_tokens(path: str) -> list[list[str]]:
    with open(path, encoding="utf-8") as fh:
        return [line.split() for line in fh if line.strip()]


def run_train(p: dict, out: Path, seed: int) -> None:
    streams = _read_tokens(p["tokens"])
    vocab = build_vocab(streams, min_count=p["min_count"])
    cfg = TrainConfig(dimension=p["dimension"], window=p["window"], negatives=p["negatives"],
                      epochs=p["epochs"], learning_rate=p["learning_rate"], subsample=p["subsample"],
                      seed=stage_seed(seed, "train"), workers=p["workers"])
    matrix = train(streams, vocab, cfg)
    save_embeddings(matrix, vocab, out / "embeddings.bin")
    _write(out, "epoch_loss.csv", "epoch,loss\n" + "".join(
        f"{i + 1},{loss!r}\n" for i, loss in enumerate(matrix.epoch_loss)))


def _seeds(path: str):
    return read_seed_csv(Path(path).read_text(encoding="utf-8")) if path else published_seeds()


def run_expand(p: dict, out: Path, seed: int) -> None:
    matrix, vocab = load_embeddings(p["embeddings"])
    seeds = _seeds(p["seeds"])
    cands = expand(matrix, vocab, seeds, threshold=p["threshold"], include_antonyms=p["antonyms"])
    _write(out, "candidates.csv", save_candidates(cands, [s.category for s in seeds]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("lo", "hi", "n_max", "n_mean"))
    for lo, hi, n_max, n_mean in similarity_histogram(matrix, vocab, seeds):
        w.writerow((f"{lo:.2f}", f"{hi:.2f}", n_max, n_mean))
    _write(out, "histogram.csv", buf.getvalue())
    n_exp = sum(c.source == "expanded" for c in cands)
    logger.info("expand: %d candidates (%d expanded)", len(cands), n_exp)


def run_review(p: dict, out: Path, seed: int) -> None:
    cands, cats = load_candidates(Path(p["candidates"]).read_text(encoding="utf-8"))
    ledger = (ReviewLedger.from_csv(Path(p["ledger"]).read_text(encoding="utf-8"))
              if p["ledger"] else ReviewLedger({}))
    lexicon, unknown = apply_review(cands, ledger, categories=cats)
    _write(out, "lexicon.csv", save_lexicon(lexicon))
    _write(out, "review_summary.json", json.dumps({
        "terms": len(lexicon), "counts": lexicon.counts(), "unknown_ledger_terms": unknown,
    }, indent=2, sort_keys=True) + "\n")


def run_cluster(p: dict, out: Path, seed: int) -> None:
    matrix, vocab = load_embeddings(p["embeddings"])
    lexicon = _read_lexicon(p["lexicon"])
    terms = [e.term for e in lexicon.entries if e.term in vocab]
    if len(terms) < 3:
        raise LexiconError(f"only {len(terms)} lexicon term(s) have vectors; need at least 3")
    logger.info("cluster: %d of %d lexicon terms have vectors", len(terms), len(lexicon))
    points = matrix.input_vectors[[vocab.id(t) for t in terms]].astype(np.float64)
    if p["normalize"]:
        points /= np.linalg.norm(points, axis=1, keepdims=True)
    category_of = {e.term: e.category for e in lexicon.entries}
    s = stage_seed(seed, "cluster")
    k_max = min(p["k_max"], len(terms) - 1)
    sweep = silhouette_sweep(points, p["k_min"], k_max, seed=s, restarts=p["restarts"])
    _write(out, "sweep.csv", sweep_csv(sweep))
    k = p["k"] or max(sweep, key=lambda r: (r[1], -r[0]))[0]
    report = kmeans(points, k, seed=s, restarts=p["restarts"], labels=terms)
    report.silhouette = silhouette(points, report.assignments) if k > 1 else None
    rows, max_share = composition_report(report, category_of)
    _write(out, "composition.csv", composition_csv(rows))
    _write(out, "assignments.csv", "term,cluster,category\n" + "".join(
        f"{t},{a},{category_of[t]}\n" for t, a in zip(terms, report.assignments)))
    proj = pca_project(points, 3)
    _write(out, "points_3d.csv", export_3d(terms, proj.coordinates, category_of))
    logger.info("cluster: k=%d silhouette=%s largest share=%.3f", k, report.silhouette, max_share)


def run_score(p: dict, out: Path, seed: int) -> None:
    corpus = _read_corpus(p["corpus"])
    matcher = compile_lexicon(_read_lexicon(p["lexicon"]), exclude_subcategories=p["exclude_subcategory"])
    scores, errors = score_corpus(matcher, corpus.documents, workers=p["workers"])
    _write(out, "scores.csv", scores_csv(scores, matcher.groups))
    if errors:
        _write(out, "score_errors.csv", "doc_id,error\n" + "".join(f"{d},{e}\n" for d, e in errors))


def run_aggregate(p: dict, out: Path, seed: int) -> None:
    scores, groups = read_scores_csv(Path(p["scores"]).read_text(encoding="utf-8"))
    dates, group_of = {}, {}
    if p["corpus"]:
        dates = {d.doc_id: d.header.filing for d in _read_corpus(p["corpus"]).documents}
    if p["metadata"]:
        with open(p["metadata"], encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                if row.get("date"):
                    dates[row["doc_id"]] = row["date"]
                if row.get("group"):
                    group_of[row["doc_id"]] = row["group"]
    if not dates and not group_of:
        raise UsageError("aggregate: need --corpus or --metadata for dates or groups")
    if dates:
        parse_bucket(p["bucket"])
        _write(out, "periods.csv", period_csv(aggregate_by_period(scores, dates, groups, p["bucket"])))
    if group_of:
        _write(out, "groups.csv", group_csv(aggregate_by_group(scores, group_of, groups)))


def run_evaldataset(p: dict, out: Path, seed: int) -> None:
    corpus = _read_corpus(p["corpus"])
    with open(p["pool"], encoding="utf-8") as fh:
        pool = [line.strip() for line in fh if line.strip()]
    rows = build_dataset(corpus.documents, pool, neg_ratio=p["neg_ratio"], train_frac=p["train_frac"],
                         seed=stage_seed(seed, "evaldataset"))
    _write(out, "dataset.csv", dataset_csv(rows))


def run_evalmetrics(p: dict, out: Path, seed: int) -> None:
    rows = read_dataset_csv(Path(p["dataset"]).read_bytes())
    scores = read_scores(Path(p["scores"]).read_bytes())
    fixed = p["threshold"] if p["threshold"] >= 0 else None
    threshold, result = evaluate_scores(rows, scores, split=p["split"], threshold=fixed)
    _write(out, "eval.json", eval_report(threshold, result))


RUNNERS = {name[len("run_"):]: fn for name, fn in globals().items() if name.startswith("run_")}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not args.stage:
            raise UsageError("a stage is required: " + " | ".join(STAGES))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        params = resolve(args.stage, args)
        out = Path(getattr(args, "out", None) or Path("out") / args.stage)
        out.mkdir(parents=True, exist_ok=True)
        seed = params.get("seed", 0)
        RUNNERS[args.stage](params, out, seed)
        write_run_config(out, args.stage, params)
        return EXIT_OK
    except UsageError as exc:
        print(f"ERROR USAGE: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"ERROR DATA: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort reporting
        if os.environ.get("HCLEX_DEBUG"):
            raise
        print(f"ERROR INTERNAL: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
