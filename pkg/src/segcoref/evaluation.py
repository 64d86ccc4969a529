"""Cluster decoding and evaluation: MUC, B-cubed, CEAF phi4, their average,
and the GAP masculine/feminine/bias/overall scores.

Mention matching is exact-span. Corpus scores micro-aggregate per-document
numerators and denominators (per-document macro averaging is available as
an option).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corpus.alignment import map_piece_clusters_to_tokens
from .corpus.types import Document, GapExample, Span
from .errors import ValidationError
from .model import AntecedentTable, SpanRankingModel

Counts = tuple[float, float, float, float]  # p_num, p_den, r_num, r_den


@dataclass(frozen=True)
class Partition:
    """Disjoint clusters of spans."""

    clusters: tuple[frozenset[Span], ...]

    def __post_init__(self):
        seen: set[Span] = set()
        for cluster in self.clusters:
            for span in cluster:
                if span in seen:
                    raise ValidationError(f"span {span} appears in two clusters")
                seen.add(span)

    @classmethod
    def from_clusters(cls, clusters: Iterable[Iterable[Span]]) -> "Partition":
        built = [frozenset(tuple(s) for s in c) for c in clusters]
        return cls(tuple(c for c in built if c))

    @property
    def mentions(self) -> set[Span]:
        return {m for c in self.clusters for m in c}

    def cluster_of(self) -> dict[Span, frozenset[Span]]:
        return {m: c for c in self.clusters for m in c}

    def __len__(self) -> int:
        return len(self.clusters)


def _f1(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


@dataclass(frozen=True)
class MetricScores:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, counts: Counts) -> "MetricScores":
        p_num, p_den, r_num, r_den = counts
        p = p_num / p_den if p_den else 0.0
        r = r_num / r_den if r_den else 0.0
        return cls(precision=p, recall=r, f1=_f1(p, r))


def _vilain(key: Partition, response: Partition) -> tuple[float, float]:
    """MUC numerator/denominator from the key side: for each key cluster,
    |cluster| minus the number of parts the response splits it into
    (response clusters intersecting it, plus unaligned mentions)."""
    response_index = {m: i for i, c in enumerate(response.clusters) for m in c}
    num = den = 0.0
    for cluster in key.clusters:
        parts = {response_index[m] for m in cluster if m in response_index}
        unaligned = sum(1 for m in cluster if m not in response_index)
        num += len(cluster) - (len(parts) + unaligned)
        den += len(cluster) - 1
    return num, den


def muc_counts(gold: Partition, predicted: Partition) -> Counts:
    r_num, r_den = _vilain(gold, predicted)
    p_num, p_den = _vilain(predicted, gold)
    return p_num, p_den, r_num, r_den


def muc(gold: Partition, predicted: Partition) -> MetricScores:
    return MetricScores.from_counts(muc_counts(gold, predicted))


def b_cubed_counts(gold: Partition, predicted: Partition) -> Counts:
    gold_of = gold.cluster_of()
    pred_of = predicted.cluster_of()

    def side(mentions: set[Span], own: dict, other: dict) -> tuple[float, float]:
        num = 0.0
        for m in mentions:
            k = own[m]
            r = other.get(m)
            if r:
                num += len(k & r) / len(k)
        return num, float(len(mentions))

    r_num, r_den = side(gold.mentions, gold_of, pred_of)
    p_num, p_den = side(predicted.mentions, pred_of, gold_of)
    return p_num, p_den, r_num, r_den


def b_cubed(gold: Partition, predicted: Partition) -> MetricScores:
    return MetricScores.from_counts(b_cubed_counts(gold, predicted))


def phi4(key: frozenset[Span], response: frozenset[Span]) -> float:
    return 2.0 * len(key & response) / (len(key) + len(response))


def ceaf_phi4_counts(gold: Partition, predicted: Partition) -> Counts:
    """Optimal one-to-one cluster alignment maximizing total phi4 similarity,
    solved exactly by the assignment algorithm."""
    if not gold.clusters or not predicted.clusters:
        return 0.0, float(len(predicted)), 0.0, float(len(gold))
    sim = np.array([[phi4(k, r) for r in predicted.clusters] for k in gold.clusters])
    rows, cols = linear_sum_assignment(sim, maximize=True)
    total = float(sim[rows, cols].sum())
    return total, float(len(predicted)), total, float(len(gold))


def ceaf_phi4(gold: Partition, predicted: Partition) -> MetricScores:
    return MetricScores.from_counts(ceaf_phi4_counts(gold, predicted))


def conll_average(muc_f1: float, b_cubed_f1: float, ceaf_f1: float) -> float:
    return (muc_f1 + b_cubed_f1 + ceaf_f1) / 3.0


METRIC_COUNTS = {"muc": muc_counts, "b_cubed": b_cubed_counts, "ceaf_phi4": ceaf_phi4_counts}
METRIC_NAMES = tuple(METRIC_COUNTS)


def document_counts(gold: Partition, predicted: Partition) -> dict[str, Counts]:
    return {name: fn(gold, predicted) for name, fn in METRIC_COUNTS.items()}


def aggregate_counts(per_document: Sequence[Mapping[str, Counts]]) -> dict[str, Counts]:
    totals = {name: (0.0, 0.0, 0.0, 0.0) for name in METRIC_NAMES}
    for counts in per_document:
        for name in METRIC_NAMES:
            totals[name] = tuple(a + b for a, b in zip(totals[name], counts[name]))
    return totals


@dataclass(frozen=True)
class CorpusScores:
    metrics: dict[str, MetricScores]
    conll_f1: float


def score_corpus(pairs: Sequence[tuple[Partition, Partition]],
                 aggregate: str = "micro") -> CorpusScores:
    """Score (gold, predicted) partition pairs across documents."""
    if aggregate not in ("micro", "macro"):
        raise ValidationError(f"unknown aggregation {aggregate!r}")
    per_doc = [document_counts(g, p) for g, p in pairs]
    if aggregate == "micro":
        totals = aggregate_counts(per_doc)
        metrics = {name: MetricScores.from_counts(totals[name]) for name in METRIC_NAMES}
    else:
        metrics = {}
        for name in METRIC_NAMES:
            scores = [MetricScores.from_counts(c[name]) for c in per_doc]
            n = max(len(scores), 1)
            metrics[name] = MetricScores(
                precision=sum(s.precision for s in scores) / n,
                recall=sum(s.recall for s in scores) / n,
                f1=sum(s.f1 for s in scores) / n,
            )
    return CorpusScores(metrics=metrics,
                        conll_f1=conll_average(*(metrics[m].f1 for m in METRIC_NAMES)))


def decode_clusters(table: AntecedentTable) -> Partition:
    """Link each span to its argmax antecedent (dummy = no link) and take
    connected components; singleton components are discarded."""
    parent = list(range(len(table.spans)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, row in enumerate(table.scores):
        best = int(np.argmax(row))
        if best == 0:
            continue
        j = table.antecedents[i][best - 1]
        parent[find(i)] = find(j)

    groups: dict[int, list[Span]] = {}
    for i, span in enumerate(table.spans):
        groups.setdefault(find(i), []).append((span.start, span.end))
    return Partition.from_clusters([c for c in groups.values() if len(c) >= 2])


def gold_token_partition(doc: Document) -> Partition:
    return Partition.from_clusters(doc.gold_clusters)


def predict_token_partition(model: SpanRankingModel, doc: Document) -> Partition:
    """Predicted clusters for one document, expressed over token spans."""
    piece_partition = decode_clusters(model.predict(doc))
    token_clusters = map_piece_clusters_to_tokens(doc, [sorted(c) for c in piece_partition.clusters])
    return Partition.from_clusters(token_clusters)


# ----- GAP -----

HEAD_OVERLAP = "head-overlap"
EXACT = "exact"


def _char_range(mention: Span, char_spans: Sequence[tuple[int, int]]) -> tuple[int, int]:
    start_tok, end_tok = mention
    return char_spans[start_tok][0], char_spans[end_tok][1]


def _matches(mention: Span, target: tuple[int, int],
             char_spans: Sequence[tuple[int, int]], policy: str) -> bool:
    m_start, m_end = _char_range(mention, char_spans)
    if policy == EXACT:
        return (m_start, m_end) == target
    head_start, head_end = char_spans[mention[1]]
    overlaps = m_start < target[1] and target[0] < m_end
    head_inside = target[0] <= head_start and head_end <= target[1]
    return overlaps and head_inside


def gap_resolve(example: GapExample, predicted: Partition,
                char_spans: Sequence[tuple[int, int]],
                policy: str = HEAD_OVERLAP) -> tuple[bool, bool]:
    """System flags: does the pronoun share a predicted cluster with A / with B?"""
    pronoun = (example.pronoun_offset, example.pronoun_offset + len(example.pronoun))
    a_range = (example.a_offset, example.a_offset + len(example.candidate_a))
    b_range = (example.b_offset, example.b_offset + len(example.candidate_b))
    a_flag = b_flag = False
    for cluster in predicted.clusters:
        if not any(_matches(m, pronoun, char_spans, policy) for m in cluster):
            continue
        if any(_matches(m, a_range, char_spans, policy) for m in cluster):
            a_flag = True
        if any(_matches(m, b_range, char_spans, policy) for m in cluster):
            b_flag = True
    return a_flag, b_flag


@dataclass(frozen=True)
class GapReport:
    f1_masculine: float
    f1_feminine: float
    bias: float        # feminine / masculine; NaN when the masculine F1 is zero
    f1_overall: float


def gap_score(examples: Sequence[GapExample],
              system_flags: Sequence[tuple[bool, bool]]) -> GapReport:
    """Each (example, candidate) pair is one binary decision; F1 per gender
    over those decisions, overall over all of them, bias = F / M."""
    if len(examples) != len(system_flags):
        raise ValidationError("one system flag pair per example required")

    def f1_over(indices: Iterable[int]) -> float:
        tp = fp = fn = 0
        for i in indices:
            gold = (examples[i].a_coref, examples[i].b_coref)
            system = system_flags[i]
            for g, s in zip(gold, system):
                tp += g and s
                fp += s and not g
                fn += g and not s
        denominator = 2 * tp + fp + fn
        return 2 * tp / denominator if denominator else 0.0

    masc = [i for i, e in enumerate(examples) if e.pronoun_gender == "masculine"]
    fem = [i for i, e in enumerate(examples) if e.pronoun_gender == "feminine"]
    f1_m = f1_over(masc)
    f1_f = f1_over(fem)
    bias = f1_f / f1_m if f1_m > 0 else float("nan")
    return GapReport(f1_masculine=f1_m, f1_feminine=f1_f, bias=bias,
                     f1_overall=f1_over(range(len(examples))))


# ----- reports -----

def format_metric_table(scores: CorpusScores, gap: GapReport | None = None) -> str:
    lines = [f"{'metric':<12} {'P':>8} {'R':>8} {'F1':>8}"]
    for name in METRIC_NAMES:
        m = scores.metrics[name]
        lines.append(f"{name:<12} {m.precision:8.4f} {m.recall:8.4f} {m.f1:8.4f}")
    lines.append(f"{'conll_avg':<12} {'':>8} {'':>8} {scores.conll_f1:8.4f}")
    if gap is not None:
        lines.append(f"{'gap M/F/B/O':<12} {gap.f1_masculine:.4f} {gap.f1_feminine:.4f} "
                     f"{gap.bias:.4f} {gap.f1_overall:.4f}")
    return "\n".join(lines)


def metric_report_csv(scores: CorpusScores | None, gap: GapReport | None = None) -> str:
    rows = ["metric,precision,recall,f1"]
    if scores is not None:
        for name in METRIC_NAMES:
            m = scores.metrics[name]
            rows.append(f"{name},{m.precision:.6f},{m.recall:.6f},{m.f1:.6f}")
        rows.append(f"conll_avg,,,{scores.conll_f1:.6f}")
    if gap is not None:
        rows.append(f"gap_masculine,,,{gap.f1_masculine:.6f}")
        rows.append(f"gap_feminine,,,{gap.f1_feminine:.6f}")
        bias = "nan" if math.isnan(gap.bias) else f"{gap.bias:.6f}"
        rows.append(f"gap_bias,,,{bias}")
        rows.append(f"gap_overall,,,{gap.f1_overall:.6f}")
    return "\n".join(rows) + "\n"
