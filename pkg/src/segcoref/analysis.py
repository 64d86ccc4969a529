"""Corpus analyses: cluster spread, document-length buckets, segment-length
sweeps, and counting of externally annotated cluster errors."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import torch

from .corpus.types import Document, Span
from .errors import ConfigError, ParseError
from .evaluation import (
    Counts,
    METRIC_NAMES,
    MetricScores,
    aggregate_counts,
    conll_average,
)
from .model import SpanRankingModel
from .training import TrainConfig, train

logger = logging.getLogger(__name__)

LENGTH_BUCKETS: tuple[tuple[int, int | None], ...] = (
    (0, 128), (128, 256), (256, 512), (512, 768), (768, 1152), (1152, None),
)

ERROR_CATEGORIES = (
    "related entities", "lexical", "pronouns", "mention paraphrasing", "conversation", "misc",
)


def cluster_spread(cluster: Sequence[Span]) -> int:
    """Tokens between a cluster's first and last mentions (floored at zero)."""
    if not cluster:
        raise ConfigError("cluster_spread needs a non-empty cluster")
    ordered = sorted(cluster)
    first, last = ordered[0], ordered[-1]
    return max(0, last[0] - first[1])


def document_spread(doc: Document) -> float:
    if not doc.gold_clusters:
        return 0.0
    return sum(cluster_spread(c) for c in doc.gold_clusters) / len(doc.gold_clusters)


def bucket_label(lo: int, hi: int | None) -> str:
    return f"{lo}-{hi}" if hi is not None else f"{lo}+"


@dataclass(frozen=True)
class LengthBucketRow:
    label: str
    doc_count: int
    mean_spread: float
    f1: float


def bucket_report(docs: Sequence[Document],
                  per_doc_counts: Mapping[str, Mapping[str, Counts]],
                  unit: str = "tokens") -> list[LengthBucketRow]:
    """Documents assigned by length to half-open [lo, hi) buckets; per-bucket
    micro-aggregated CoNLL F1 and mean spread, plus an "All" row."""
    if unit not in ("tokens", "pieces"):
        raise ConfigError(f"unknown length unit {unit!r}")

    def length(doc: Document) -> int:
        return doc.num_tokens if unit == "tokens" else doc.num_pieces

    assignments: dict[tuple[int, int | None], list[Document]] = {b: [] for b in LENGTH_BUCKETS}
    for doc in docs:
        n = length(doc)
        for lo, hi in LENGTH_BUCKETS:
            if n >= lo and (hi is None or n < hi):
                assignments[(lo, hi)].append(doc)
                break

    def row(label: str, members: Sequence[Document]) -> LengthBucketRow:
        if not members:
            return LengthBucketRow(label, 0, 0.0, 0.0)
        totals = aggregate_counts([per_doc_counts[d.doc_key] for d in members])
        f1 = conll_average(*(MetricScores.from_counts(totals[m]).f1 for m in METRIC_NAMES))
        spread = sum(document_spread(d) for d in members) / len(members)
        return LengthBucketRow(label, len(members), spread, f1)

    rows = [row(bucket_label(lo, hi), assignments[(lo, hi)]) for lo, hi in LENGTH_BUCKETS]
    rows.append(row("all", list(docs)))
    return rows


def bucket_report_csv(rows: Sequence[LengthBucketRow]) -> str:
    out = ["bucket,doc_count,mean_spread,conll_f1"]
    out += [f"{r.label},{r.doc_count},{r.mean_spread:.4f},{r.f1:.6f}" for r in rows]
    return "\n".join(out) + "\n"


def segment_length_sweep(train_docs: Sequence[Document], dev_docs: Sequence[Document],
                         model_template: SpanRankingModel, train_config: TrainConfig,
                         lengths: Sequence[int]) -> list[tuple[int, float]]:
    """One freshly trained model per segment length, identical seeds; returns
    (length, dev CoNLL F1) rows."""
    from .evaluation import gold_token_partition, predict_token_partition, score_corpus

    encoder_config = model_template.encoder_config
    rows: list[tuple[int, float]] = []
    for length in lengths:
        if length > encoder_config.max_positions:
            raise ConfigError(
                f"segment length {length} exceeds encoder max_positions={encoder_config.max_positions}"
            )
        seg = replace(model_template.segmentation_config, max_segment_len=length)
        torch.manual_seed(train_config.seed)
        model = SpanRankingModel(encoder_config, model_template.model_config, seg)
        train(list(train_docs), model, train_config)
        pairs = [(gold_token_partition(d), predict_token_partition(model, d)) for d in dev_docs]
        rows.append((length, score_corpus(pairs).conll_f1))
        logger.info("sweep: max_segment_len=%d -> conll F1 %.4f", length, rows[-1][1])
    return rows


def sweep_csv(rows: Sequence[tuple[int, float]]) -> str:
    out = ["max_segment_len,conll_f1"]
    out += [f"{length},{f1:.6f}" for length, f1 in rows]
    return "\n".join(out) + "\n"


def parse_error_annotations(text: str) -> dict[str, dict[tuple[str, str], frozenset[str]]]:
    """Annotation file: doc_key <TAB> cluster_id <TAB> categories (;-joined)
    <TAB> system. Lines starting with '#' and blank lines are skipped.
    Repeated (doc, cluster, system) rows merge their category sets."""
    annotations: dict[str, dict[tuple[str, str], set[str]]] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise ParseError(f"expected 4 tab-separated columns, got {len(cols)}", line_no)
        doc_key, cluster_id, categories_cell, system = cols
        categories = {c.strip() for c in categories_cell.split(";") if c.strip()}
        if not categories:
            raise ParseError("annotation has no categories", line_no)
        unknown = categories - set(ERROR_CATEGORIES)
        if unknown:
            raise ParseError(f"unknown error category {sorted(unknown)[0]!r}", line_no)
        key = (doc_key, cluster_id)
        annotations.setdefault(system, {}).setdefault(key, set()).update(categories)
    return {
        system: {key: frozenset(cats) for key, cats in per_system.items()}
        for system, per_system in annotations.items()
    }


def error_report(text: str, systems: Sequence[str] | None = None) -> dict[str, dict[str, int]]:
    """Per-category error counts per system plus totals. A cluster with
    several categories increments each category but counts once in total."""
    annotations = parse_error_annotations(text)
    if systems is None:
        systems = sorted(annotations)
    report: dict[str, dict[str, int]] = {}
    for system in systems:
        per_system = annotations.get(system, {})
        counts = {category: 0 for category in ERROR_CATEGORIES}
        for categories in per_system.values():
            for category in categories:
                counts[category] += 1
        counts["total"] = len(per_system)
        report[system] = counts
    return report


def error_report_csv(report: Mapping[str, Mapping[str, int]]) -> str:
    systems = list(report)
    out = ["category," + ",".join(systems)]
    for category in (*ERROR_CATEGORIES, "total"):
        out.append(category + "," + ",".join(str(report[s][category]) for s in systems))
    return "\n".join(out) + "\n"
