"""Span-ranking coreference core.

For every candidate span x the model scores possible antecedents y and a
dummy no-antecedent option, producing a distribution

    P(y) = exp(s(x, y)) / sum_y' exp(s(x, y'))
    s(x, y) = s_m(x) + s_m(y) + s_c(x, y),   s(x, dummy) = 0

where s_m is a feedforward mention score over the span representation
g = [first-piece vector; last-piece vector; attention-weighted sum over the
span], and s_c is a feedforward compatibility score over
[g_x; g_y; g_x * g_y; phi(x, y)] with speaker/genre/distance features phi.
Candidate spans are pruned by mention score, antecedents by a cheap
bilinear score, and span representations are iteratively refined with the
antecedent distribution as an attention mechanism.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np
import torch
from torch import nn

from .corpus.alignment import map_gold_spans_to_word_pieces
from .corpus.types import DEFAULT_GENRES, Document, Span
from .encoder import EVAL, TRAIN, EncoderConfig, EncoderProvider, TransformerEncoder
from .errors import ConfigError, ParseError, ValidationError
from .segmentation import (
    InterpolationGate,
    SegmentationConfig,
    assemble_token_representations,
    segment_document,
)

logger = logging.getLogger(__name__)

NUM_DISTANCE_BUCKETS = 9  # {1, 2, 3, 4, 5-7, 8-15, 16-31, 32-63, 64+}


@dataclass(frozen=True)
class ModelConfig:
    max_span_width: int = 10          # in word pieces
    ffnn_hidden_size: int = 150
    ffnn_depth: int = 1
    feature_size: int = 20
    prune_ratio: float = 0.4          # retained spans per document token
    max_antecedents: float = 50       # candidates per span; math.inf allowed
    refinement_iterations: int = 2
    dropout: float = 0.3
    use_span_width_feature: bool = False
    genres: tuple[str, ...] = DEFAULT_GENRES

    def __post_init__(self):
        if self.max_span_width < 1:
            raise ConfigError("max_span_width must be >= 1")
        if not self.prune_ratio > 0:
            raise ConfigError("prune_ratio must be positive")
        if not self.max_antecedents >= 1:
            raise ConfigError("max_antecedents must be >= 1")
        if self.refinement_iterations < 0:
            raise ConfigError("refinement_iterations must be >= 0")
        object.__setattr__(self, "genres", tuple(self.genres))


class SpanCandidate(NamedTuple):
    start: int  # word-piece index, inclusive
    end: int

    @property
    def width(self) -> int:
        return self.end - self.start + 1


@lru_cache(maxsize=256)
def _spans_cached(doc: Document, max_span_width: int) -> tuple[SpanCandidate, ...]:
    spans: list[SpanCandidate] = []
    for i, tok in enumerate(doc.tokens):
        start = tok.piece_range[0]
        for other in doc.tokens[i:]:
            end = other.piece_range[1] - 1
            if end - start + 1 > max_span_width:
                break
            spans.append(SpanCandidate(start, end))
    return tuple(spans)


def enumerate_spans(doc: Document, max_span_width: int) -> list[SpanCandidate]:
    """All spans up to max_span_width pieces wide that start and end on
    token boundaries, in (start, end) lexicographic order."""
    return list(_spans_cached(doc, max_span_width))


@lru_cache(maxsize=256)
def _document_context(doc: Document) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """(word piece -> owning token index, token -> document-local speaker id)."""
    owner = [0] * doc.num_pieces
    for tok in doc.tokens:
        for p in range(tok.piece_range[0], tok.piece_range[1]):
            owner[p] = tok.token_index
    speaker_ids: dict[str, int] = {}
    speakers = tuple(speaker_ids.setdefault(t.speaker, len(speaker_ids)) for t in doc.tokens)
    return tuple(owner), speakers


def spans_cross(a: Span, b: Span) -> bool:
    """Partial overlap: one span starts inside the other and ends outside."""
    return (a[0] < b[0] <= a[1] < b[1]) or (b[0] < a[0] <= b[1] < a[1])


def prune_mentions(spans: Sequence[Span], mention_scores: Sequence[float],
                   ratio: float, num_tokens: int) -> list[int]:
    """Indices of the top ceil(ratio * num_tokens) spans by mention score,
    greedily skipping spans that cross an already retained one; result is
    sorted by (start, end)."""
    limit = len(spans) if math.isinf(ratio) else int(math.ceil(ratio * num_tokens))
    order = sorted(range(len(spans)), key=lambda i: (-float(mention_scores[i]), spans[i]))
    accepted: list[int] = []
    for i in order:
        if len(accepted) >= limit:
            break
        if any(spans_cross(spans[i], spans[j]) for j in accepted):
            continue
        accepted.append(i)
    accepted.sort(key=lambda i: tuple(spans[i]))
    return accepted


def bucket_distance(delta: torch.Tensor) -> torch.Tensor:
    """Semi-logscale bucket index for mention-order distances >= 1:
    1, 2, 3, 4, 5-7, 8-15, 16-31, 32-63, 64+."""
    delta = delta.clamp(min=1)
    log_bucket = torch.floor(torch.log2(delta.double())).long() + 2
    idx = torch.where(delta <= 4, delta - 1, log_bucket.clamp(max=NUM_DISTANCE_BUCKETS - 1))
    return idx


def antecedent_distribution(scores: torch.Tensor) -> torch.Tensor:
    """Softmax over antecedent scores (dummy included) with max subtraction."""
    shifted = scores - scores.max(dim=-1, keepdim=True).values
    exp = torch.exp(shifted)
    return exp / exp.sum(dim=-1, keepdim=True)


def marginal_loss(scores: torch.Tensor, gold_mask: torch.Tensor) -> torch.Tensor:
    """Negative marginal log-likelihood: -sum_x log sum_{y in GOLD(x)} P(y).

    scores is [k, m] with the dummy included; gold_mask marks GOLD(x) and
    must have at least one true entry per row."""
    gold_scores = scores.masked_fill(~gold_mask, float("-inf"))
    return (torch.logsumexp(scores, dim=1) - torch.logsumexp(gold_scores, dim=1)).sum()


class FeedForwardScorer(nn.Module):
    """input -> (hidden, relu, dropout) x depth -> scalar."""

    def __init__(self, input_dim: int, hidden: int, depth: int, dropout: float, dtype: torch.dtype):
        super().__init__()
        layers: list[nn.Module] = []
        width = input_dim
        for _ in range(depth):
            layers += [nn.Linear(width, hidden, dtype=dtype), nn.ReLU(), nn.Dropout(dropout)]
            width = hidden
        layers.append(nn.Linear(width, 1, dtype=dtype))
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


@dataclass
class DocumentScores:
    """Everything the decoder, the loss, and the analyses need for one document."""

    spans: list[SpanCandidate]              # retained spans in mention order
    candidates: torch.Tensor                # [k, C] indices into spans, -1 = pad
    candidate_mask: torch.Tensor            # [k, C]
    scores: torch.Tensor                    # [k, C + 1]; column 0 is the dummy (0.0)
    log_probs: torch.Tensor                 # log P over [dummy | candidates]
    mention_scores: torch.Tensor            # [k], from the final refinement iteration
    pruned_gold_antecedents: int = 0

    @property
    def num_spans(self) -> int:
        return len(self.spans)


@dataclass
class AntecedentTable:
    """Plain-python view: per span, candidate antecedents with s(x, y) and P(y).

    Scores and probabilities lead with the dummy antecedent, whose score is 0.
    """

    spans: list[SpanCandidate]
    antecedents: list[list[int]]            # indices into spans, ascending
    scores: list[np.ndarray]                # each [1 + len(antecedents[i])]
    probabilities: list[np.ndarray]


class SpanRankingModel(nn.Module):
    def __init__(
        self,
        encoder_config: EncoderConfig,
        model_config: ModelConfig,
        segmentation_config: SegmentationConfig,
        encoder: EncoderProvider | None = None,
    ):
        super().__init__()
        self.encoder_config = encoder_config
        self.model_config = model_config
        self.segmentation_config = segmentation_config
        if segmentation_config.max_segment_len > encoder_config.max_positions:
            raise ConfigError(
                f"max_segment_len {segmentation_config.max_segment_len} exceeds the "
                f"encoder's max_positions {encoder_config.max_positions}"
            )

        self.external_encoder = encoder is not None
        self.encoder = encoder if encoder is not None else TransformerEncoder(encoder_config)
        if self.encoder.hidden_size != encoder_config.hidden_size:
            raise ConfigError("external encoder hidden size disagrees with the config")

        d = encoder_config.hidden_size
        f = model_config.feature_size
        dtype = encoder_config.torch_dtype
        self.span_dim = 3 * d + (f if model_config.use_span_width_feature else 0)
        dropout = model_config.dropout

        self.gate = InterpolationGate(d, dtype=dtype)
        self.span_attention = nn.Linear(d, 1, dtype=dtype)
        self.mention_scorer = FeedForwardScorer(
            self.span_dim, model_config.ffnn_hidden_size, model_config.ffnn_depth, dropout, dtype)
        pair_dim = 3 * self.span_dim + 3 * f
        self.pair_scorer = FeedForwardScorer(
            pair_dim, model_config.ffnn_hidden_size, model_config.ffnn_depth, dropout, dtype)
        self.coarse_bilinear = nn.Linear(self.span_dim, self.span_dim, bias=False, dtype=dtype)
        self.refine_gate = nn.Linear(2 * self.span_dim, self.span_dim, dtype=dtype)

        self.genre_embeddings = nn.Embedding(len(model_config.genres) + 1, f, dtype=dtype)
        self.same_speaker_embeddings = nn.Embedding(2, f, dtype=dtype)
        self.distance_embeddings = nn.Embedding(NUM_DISTANCE_BUCKETS, f, dtype=dtype)
        self.width_embeddings = (
            nn.Embedding(model_config.max_span_width, f, dtype=dtype)
            if model_config.use_span_width_feature else None
        )
        self.feature_dropout = nn.Dropout(dropout)
        self._genre_index = {g: i for i, g in enumerate(model_config.genres)}

    # ----- pieces -> span representations -----

    def encode_document(self, doc: Document, mode: str = EVAL) -> torch.Tensor:
        segments = segment_document(doc, self.segmentation_config)
        outputs = [self.encoder.encode(seg, mode, doc.doc_key) for seg in segments]
        return assemble_token_representations(segments, outputs, self.gate, doc.num_pieces)

    def span_representations(self, pieces: torch.Tensor, spans: Sequence[SpanCandidate]) -> torch.Tensor:
        starts = torch.tensor([s.start for s in spans])
        ends = torch.tensor([s.end for s in spans])
        h_start = pieces[starts]                                    # [S, d]
        h_end = pieces[ends]                                        # [S, d]

        max_width = int((ends - starts).max()) + 1
        offsets = torch.arange(max_width)
        idx = starts.unsqueeze(1) + offsets.unsqueeze(0)            # [S, W]
        mask = idx <= ends.unsqueeze(1)
        idx = idx.clamp(max=pieces.shape[0] - 1)
        piece_scores = self.span_attention(pieces).squeeze(-1)      # [n]
        att = piece_scores[idx].masked_fill(~mask, float("-inf"))   # [S, W]
        alpha = torch.softmax(att, dim=1)
        attended = (alpha.unsqueeze(-1) * pieces[idx]).sum(dim=1)   # [S, d]

        blocks = [h_start, h_end, attended]
        if self.width_embeddings is not None:
            widths = (ends - starts).clamp(max=self.model_config.max_span_width - 1)
            blocks.append(self.feature_dropout(self.width_embeddings(widths)))
        return torch.cat(blocks, dim=-1)                            # [S, span_dim]

    # ----- scoring -----

    def mention_score(self, g: torch.Tensor) -> torch.Tensor:
        return self.mention_scorer(g).squeeze(-1)

    def pair_score(self, g_x: torch.Tensor, g_y: torch.Tensor, phi: torch.Tensor) -> torch.Tensor:
        pair_in = torch.cat([g_x, g_y, g_x * g_y, phi], dim=-1)
        return self.pair_scorer(pair_in).squeeze(-1)

    def genre_index(self, genre: str) -> int:
        return self._genre_index.get(genre, len(self._genre_index))

    def _pair_features(self, doc: Document, spans: list[SpanCandidate],
                       candidates: torch.Tensor) -> torch.Tensor:
        k, c = candidates.shape
        safe = candidates.clamp(min=0)

        piece_owner, token_speakers = _document_context(doc)
        speaker_ids = torch.tensor([token_speakers[piece_owner[s.start]] for s in spans])
        same_speaker = (speaker_ids.unsqueeze(1) == speaker_ids[safe]).long()  # [k, c]

        positions = torch.arange(k)
        distance = positions.unsqueeze(1) - safe                               # [k, c]
        dist_emb = self.distance_embeddings(bucket_distance(distance))
        genre = torch.full((k, c), self.genre_index(doc.genre), dtype=torch.long)
        genre_emb = self.genre_embeddings(genre)
        speaker_emb = self.same_speaker_embeddings(same_speaker)
        return self.feature_dropout(torch.cat([speaker_emb, genre_emb, dist_emb], dim=-1))

    def coarse_antecedents(self, g: torch.Tensor, mention_scores: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Top-K preceding spans per span by s_m(x) + s_m(y) + g_x^T M g_y."""
        k = g.shape[0]
        bilinear = self.coarse_bilinear(g) @ g.t()                             # [k, k]
        coarse = mention_scores.unsqueeze(1) + mention_scores.unsqueeze(0) + bilinear
        precedes = torch.arange(k).unsqueeze(1) > torch.arange(k).unsqueeze(0)
        coarse = coarse.masked_fill(~precedes, float("-inf"))
        limit = k - 1 if math.isinf(self.model_config.max_antecedents) else int(self.model_config.max_antecedents)
        c = max(1, min(limit, k - 1)) if k > 1 else 1
        top = torch.topk(coarse, c, dim=1)
        candidates = top.indices                                               # [k, c]
        mask = torch.gather(precedes, 1, candidates)
        # ascending mention order within each row; padding pushed to the end
        ordered = candidates.masked_fill(~mask, k + 1).sort(dim=1).values
        mask = ordered < k + 1
        return ordered.masked_fill(~mask, -1), mask

    def _scores_with_dummy(self, doc: Document, spans: list[SpanCandidate], g: torch.Tensor,
                           candidates: torch.Tensor, mask: torch.Tensor,
                           phi: torch.Tensor) -> torch.Tensor:
        s_m = self.mention_score(g)                                            # [k]
        safe = candidates.clamp(min=0)
        g_y = g[safe]                                                          # [k, c, D]
        g_x = g.unsqueeze(1).expand_as(g_y)
        s_c = self.pair_score(g_x, g_y, phi)                                   # [k, c]
        pair_total = s_m.unsqueeze(1) + s_m[safe] + s_c
        pair_total = pair_total.masked_fill(~mask, float("-inf"))
        dummy = g.new_zeros((g.shape[0], 1))
        return torch.cat([dummy, pair_total], dim=1)                           # [k, c + 1]

    def higher_order_refine(self, doc: Document, spans: list[SpanCandidate], g: torch.Tensor,
                            candidates: torch.Tensor, mask: torch.Tensor, phi: torch.Tensor,
                            iterations: int) -> tuple[torch.Tensor, torch.Tensor]:
        """Gated refinement of span representations using the antecedent
        distribution as attention; scores are recomputed each iteration."""
        scores = self._scores_with_dummy(doc, spans, g, candidates, mask, phi)
        safe = candidates.clamp(min=0)
        for _ in range(iterations):
            probs = antecedent_distribution(scores)                            # [k, c + 1]
            expected = (probs[:, 1:].unsqueeze(-1) * g[safe]).sum(dim=1)
            attended = probs[:, :1] * g + expected                             # dummy keeps g_x
            gate = torch.sigmoid(self.refine_gate(torch.cat([g, attended], dim=-1)))
            g = gate * g + (1.0 - gate) * attended
            scores = self._scores_with_dummy(doc, spans, g, candidates, mask, phi)
        return g, scores

    # ----- document pipeline -----

    def document_scores(self, doc: Document, mode: str = EVAL) -> DocumentScores:
        if not doc.tokens:
            raise ValidationError(f"document {doc.doc_key!r} has no tokens")
        if not self.external_encoder and max(doc.word_pieces) >= self.encoder_config.vocab_size:
            raise ConfigError(
                f"document {doc.doc_key!r} uses piece ids beyond vocab_size={self.encoder_config.vocab_size}"
            )
        self.train(mode == TRAIN)

        pieces = self.encode_document(doc, mode)                               # [n, d]
        all_spans = enumerate_spans(doc, self.model_config.max_span_width)
        g_all = self.span_representations(pieces, all_spans)                   # [S, D]
        s_m_all = self.mention_score(g_all)                                    # [S]

        keep = prune_mentions(all_spans, s_m_all.detach().tolist(),
                              self.model_config.prune_ratio, doc.num_tokens)
        spans = [all_spans[i] for i in keep]
        g = g_all[torch.tensor(keep)]
        s_m = s_m_all[torch.tensor(keep)]

        candidates, mask = self.coarse_antecedents(g, s_m)
        phi = self._pair_features(doc, spans, candidates)
        g, scores = self.higher_order_refine(
            doc, spans, g, candidates, mask, phi, self.model_config.refinement_iterations)
        log_probs = scores - torch.logsumexp(scores, dim=1, keepdim=True)

        return DocumentScores(
            spans=spans,
            candidates=candidates,
            candidate_mask=mask,
            scores=scores,
            log_probs=log_probs,
            mention_scores=self.mention_score(g),
        )

    def loss(self, doc: Document, mode: str = TRAIN) -> tuple[torch.Tensor, DocumentScores]:
        """Marginal log-likelihood of the gold antecedent sets."""
        result = self.document_scores(doc, mode)
        spans, candidates, mask = result.spans, result.candidates, result.candidate_mask
        k = len(spans)

        cluster_of: dict[Span, int] = {}
        for cid, cluster in enumerate(map_gold_spans_to_word_pieces(doc), start=1):
            for span in cluster:
                cluster_of[span] = cid
        span_cluster = torch.tensor([cluster_of.get(tuple(s), 0) for s in spans])

        safe = candidates.clamp(min=0)
        pair_gold = (span_cluster.unsqueeze(1) > 0) & (span_cluster[safe] == span_cluster.unsqueeze(1)) & mask
        dummy_gold = ~pair_gold.any(dim=1, keepdim=True)
        gold_mask = torch.cat([dummy_gold, pair_gold], dim=1)                  # [k, c + 1]

        # Gold mentions whose gold antecedent exists but is absent from Y(x).
        pruned = 0
        first_of_cluster: set[Span] = set()
        seen: set[int] = set()
        for s in sorted(cluster_of, key=lambda sp: (sp[0], sp[1])):
            if cluster_of[s] not in seen:
                seen.add(cluster_of[s])
                first_of_cluster.add(s)
        for i in range(k):
            if span_cluster[i] > 0 and bool(dummy_gold[i, 0]) and tuple(spans[i]) not in first_of_cluster:
                pruned += 1
        if pruned:
            logger.debug("document %s: %d gold antecedent set(s) lost to pruning; fell back to dummy",
                         doc.doc_key, pruned)
        result.pruned_gold_antecedents = pruned

        return marginal_loss(result.scores, gold_mask), result

    def predict(self, doc: Document) -> AntecedentTable:
        with torch.no_grad():
            result = self.document_scores(doc, EVAL)
        return antecedent_table(result)

    # ----- parameter bookkeeping -----

    def parameter_groups(self) -> dict[str, list[tuple[str, nn.Parameter]]]:
        """"encoder" (encoder + interpolation gate) and "task" (everything else)."""
        groups: dict[str, list[tuple[str, nn.Parameter]]] = {"encoder": [], "task": []}
        for name, param in self.named_parameters():
            key = "encoder" if name.startswith(("encoder.", "gate.")) else "task"
            groups[key].append((name, param))
        return groups


def antecedent_table(result: DocumentScores) -> AntecedentTable:
    antecedents: list[list[int]] = []
    scores: list[np.ndarray] = []
    probabilities: list[np.ndarray] = []
    probs = antecedent_distribution(result.scores)  # padded columns get exactly 0
    for i in range(result.num_spans):
        mask = result.candidate_mask[i]
        cols = torch.cat([torch.tensor([True]), mask])
        antecedents.append([int(j) for j in result.candidates[i][mask]])
        scores.append(result.scores[i][cols].detach().numpy().copy())
        probabilities.append(probs[i][cols].detach().numpy().copy())
    return AntecedentTable(spans=result.spans, antecedents=antecedents, scores=scores,
                           probabilities=probabilities)


# ----- checkpoints -----

CHECKPOINT_FORMAT = "segcoref-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(model: SpanRankingModel, path) -> None:
    """Self-describing header (JSON: configs + tensor manifest), then the
    parameter tensors in declaration order as little-endian 64-bit floats."""
    if model.external_encoder:
        raise ConfigError("cannot checkpoint a model built on an external encoder")
    names_shapes = [(name, list(p.shape)) for name, p in model.named_parameters()]
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "encoder": asdict(model.encoder_config),
        "model": asdict(model.model_config),
        "segmentation": asdict(model.segmentation_config),
        "tensors": names_shapes,
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for _, param in model.named_parameters():
            f.write(param.detach().cpu().numpy().astype("<f8").tobytes())


def load_checkpoint(path) -> SpanRankingModel:
    with open(path, "rb") as f:
        try:
            header = json.loads(f.readline().decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ParseError(f"{path!r} is not a {CHECKPOINT_FORMAT} file: {exc}") from exc
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ParseError(f"{path!r} is not a {CHECKPOINT_FORMAT} file")
        encoder_config = EncoderConfig(**header["encoder"])
        model_cfg = dict(header["model"])
        model_cfg["genres"] = tuple(model_cfg["genres"])
        model_config = ModelConfig(**model_cfg)
        seg_config = SegmentationConfig(**header["segmentation"])
        model = SpanRankingModel(encoder_config, model_config, seg_config)
        expected = [(name, list(p.shape)) for name, p in model.named_parameters()]
        if expected != [(n, list(s)) for n, s in header["tensors"]]:
            raise ConfigError(f"checkpoint {path!r} does not match the model built from its config")
        with torch.no_grad():
            for _, param in model.named_parameters():
                raw = f.read(param.numel() * 8)
                if len(raw) != param.numel() * 8:
                    raise ConfigError(f"checkpoint {path!r} is truncated")
                arr = np.frombuffer(raw, dtype="<f8").reshape(tuple(param.shape))
                param.copy_(torch.from_numpy(arr.copy()).to(param.dtype))
    return model
