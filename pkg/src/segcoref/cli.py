"""Command-line interface.

Subcommands: train, evaluate, score-gap, sweep, buckets, errors, gradcheck,
tokenize. A JSON config file (--config) supplies the subsystem settings;
--seed, --variant and --max-segment-len override it. Exit codes: 0 success,
1 validation/config/parse error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import torch

from . import analysis
from .config import ExperimentConfig, gradcheck_config
from .corpus.conll import parse_conll
from .corpus.gap import gap_example_to_document, parse_gap
from .corpus.wordpiece import SubwordVocabulary, tokenize, tokenize_document
from .errors import ConfigError, ParseError, SegcorefError, ValidationError
from .evaluation import (
    document_counts,
    format_metric_table,
    gap_resolve,
    gap_score,
    gold_token_partition,
    metric_report_csv,
    predict_token_partition,
    score_corpus,
)
from .model import SpanRankingModel, load_checkpoint, save_checkpoint
from .synthetic import gradcheck_document
from .training import gradient_check, train
from .validation import check_documents

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="segcoref", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override training.seed")
        p.add_argument("--variant", choices=["independent", "overlap"],
                       help="override segmentation.variant")
        p.add_argument("--max-segment-len", type=int, help="override segmentation.max_segment_len")

    p = sub.add_parser("train", help="train a model on a CoNLL file")
    common(p)
    p.add_argument("--gold", required=True, help="CoNLL-2012 training file")
    p.add_argument("--vocab", required=True, help="subword vocabulary file")
    p.add_argument("--model", required=True, help="output checkpoint path")
    p.add_argument("--log", help="per-step training log (TSV)")

    p = sub.add_parser("evaluate", help="score a model on a CoNLL file")
    common(p)
    p.add_argument("--gold", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--model", required=True, help="checkpoint to evaluate")
    p.add_argument("--out", help="also write the report as CSV here")
    p.add_argument("--aggregate", choices=["micro", "macro"], default="micro")

    p = sub.add_parser("score-gap", help="score a model on a GAP TSV file")
    common(p)
    p.add_argument("--gold", required=True, help="GAP TSV file")
    p.add_argument("--vocab", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="also write the report as CSV here")
    p.add_argument("--matching", choices=["head-overlap", "exact"], default="head-overlap")

    p = sub.add_parser("sweep", help="train/evaluate one model per segment length")
    common(p)
    p.add_argument("--gold", required=True, help="CoNLL training file")
    p.add_argument("--dev", help="CoNLL evaluation file (defaults to --gold)")
    p.add_argument("--vocab", required=True)
    p.add_argument("--lengths", default="128,256,384,450,512",
                   help="comma-separated max_segment_len values")
    p.add_argument("--out", help="write the (length, F1) table as CSV here")

    p = sub.add_parser("buckets", help="document-length bucket report")
    common(p)
    p.add_argument("--gold", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--unit", choices=["tokens", "pieces"], default="tokens")
    p.add_argument("--out", help="write the bucket table as CSV here")

    p = sub.add_parser("errors", help="count externally annotated cluster errors")
    p.add_argument("--annotations", required=True, help="TSV annotation file")
    p.add_argument("--out", help="write the counts as CSV here")

    p = sub.add_parser("gradcheck", help="verify gradients on a built-in toy document")
    common(p)
    p.add_argument("--tolerance", type=float, default=1e-4)

    p = sub.add_parser("tokenize", help="word-piece tokenize whitespace-separated tokens")
    p.add_argument("--vocab", required=True)
    p.add_argument("--text", help="tokens as one string (otherwise read stdin)")

    return parser


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    return config.override(seed=args.seed, variant=args.variant,
                           max_segment_len=args.max_segment_len)


def _load_corpus(gold_path: str, vocab_path: str):
    vocab = SubwordVocabulary.from_file(vocab_path)
    with open(gold_path, encoding="utf-8") as f:
        docs = parse_conll(f.read())
    docs = [tokenize_document(d, vocab) for d in docs]
    return check_documents(docs), vocab


def _write(path: str | None, content: str):
    if path:
        with open(path, "w", encoding="utf-8") as f:
            f.write(content)


def cmd_train(args) -> int:
    config = _load_config(args)
    docs, vocab = _load_corpus(args.gold, args.vocab)
    if config.encoder.vocab_size < len(vocab):
        raise ConfigError(
            f"encoder.vocab_size={config.encoder.vocab_size} is smaller than the "
            f"vocabulary ({len(vocab)} entries)")
    torch.manual_seed(config.training.seed)
    model = config.build_model()
    log_stream = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        history = train(docs, model, config.training, log_stream=log_stream)
    finally:
        if log_stream:
            log_stream.close()
    save_checkpoint(model, args.model)
    print(f"trained on {len(docs)} documents for {config.training.epochs} epochs; "
          f"final loss {history[-1]:.6f}; checkpoint written to {args.model}")
    return 0


def cmd_evaluate(args) -> int:
    docs, _ = _load_corpus(args.gold, args.vocab)
    model = load_checkpoint(args.model)
    pairs = [(gold_token_partition(d), predict_token_partition(model, d)) for d in docs]
    scores = score_corpus(pairs, aggregate=args.aggregate)
    print(format_metric_table(scores))
    _write(args.out, metric_report_csv(scores))
    return 0


def cmd_score_gap(args) -> int:
    vocab = SubwordVocabulary.from_file(args.vocab)
    with open(args.gold, encoding="utf-8") as f:
        examples = parse_gap(f.read())
    if not examples:
        raise ValidationError("no usable GAP examples")
    model = load_checkpoint(args.model)
    flags = []
    for example in examples:
        doc, char_spans = gap_example_to_document(example, vocab)
        partition = predict_token_partition(model, doc)
        flags.append(gap_resolve(example, partition, char_spans, policy=args.matching))
    report = gap_score(examples, flags)
    print(f"GAP  M {report.f1_masculine:.4f}  F {report.f1_feminine:.4f}  "
          f"B {report.bias:.4f}  O {report.f1_overall:.4f}")
    _write(args.out, metric_report_csv(None, report))
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args)
    train_docs, _ = _load_corpus(args.gold, args.vocab)
    dev_docs = train_docs if not args.dev or args.dev == args.gold \
        else _load_corpus(args.dev, args.vocab)[0]
    lengths = [int(x) for x in args.lengths.split(",") if x.strip()]
    if not lengths:
        raise ConfigError("--lengths is empty")
    template = config.build_model()
    rows = analysis.segment_length_sweep(train_docs, dev_docs, template, config.training, lengths)
    csv = analysis.sweep_csv(rows)
    print(csv, end="")
    _write(args.out, csv)
    return 0


def cmd_buckets(args) -> int:
    docs, _ = _load_corpus(args.gold, args.vocab)
    model = load_checkpoint(args.model)
    per_doc = {
        d.doc_key: document_counts(gold_token_partition(d), predict_token_partition(model, d))
        for d in docs
    }
    rows = analysis.bucket_report(docs, per_doc, unit=args.unit)
    csv = analysis.bucket_report_csv(rows)
    print(csv, end="")
    _write(args.out, csv)
    return 0


def cmd_errors(args) -> int:
    with open(args.annotations, encoding="utf-8") as f:
        report = analysis.error_report(f.read())
    csv = analysis.error_report_csv(report)
    print(csv, end="")
    _write(args.out, csv)
    return 0


def cmd_gradcheck(args) -> int:
    if args.config:
        config = _load_config(args)
    else:
        config = gradcheck_config().override(seed=args.seed, variant=args.variant,
                                             max_segment_len=args.max_segment_len)
    doc, vocab = gradcheck_document()  # fixed probe document; the seed drives model init
    encoder = config.encoder
    if encoder.vocab_size < len(vocab):
        encoder = replace(encoder, vocab_size=len(vocab))
    torch.manual_seed(config.training.seed)
    model = SpanRankingModel(encoder, config.model, config.segmentation)
    report = gradient_check(model, doc, tolerance=args.tolerance)
    print(report)
    return 0 if report.passed else 1


def cmd_tokenize(args) -> int:
    vocab = SubwordVocabulary.from_file(args.vocab)
    text = args.text if args.text is not None else sys.stdin.read()
    surfaces = text.split()
    ids, ranges = tokenize(surfaces, vocab)
    for surface, (lo, hi) in zip(surfaces, ranges):
        pieces = " ".join(vocab.piece_of(i) for i in ids[lo:hi])
        print(f"{surface}\t{pieces}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "score-gap": cmd_score_gap,
    "sweep": cmd_sweep,
    "buckets": cmd_buckets,
    "errors": cmd_errors,
    "gradcheck": cmd_gradcheck,
    "tokenize": cmd_tokenize,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (ParseError, ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SegcorefError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        logger.exception("unhandled error")
        return 2


if __name__ == "__main__":
    sys.exit(main())
