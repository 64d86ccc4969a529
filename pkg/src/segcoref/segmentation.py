"""Document segmentation for encoder-sized windows.

Two variants: *independent* cuts the word-piece sequence into consecutive
non-overlapping windows of at most T pieces; *overlap* opens a T-sized
window every T/2 pieces and blends the doubly-covered positions with a
learned element-wise gate. Cuts never fall inside a token's word-piece
group; a proposed cut moves left to the nearest token boundary.
"""

from __future__ import annotations

import bisect
import random
from dataclasses import dataclass, replace
from functools import lru_cache

import torch
from torch import nn

from .corpus.types import Cluster, Document, Token
from .errors import ConfigError, CoverageError, EncodingError

INDEPENDENT = "independent"
OVERLAP = "overlap"


@dataclass(frozen=True)
class SegmentationConfig:
    variant: str = INDEPENDENT
    max_segment_len: int = 128

    def __post_init__(self):
        if self.variant not in (INDEPENDENT, OVERLAP):
            raise ConfigError(f"unknown segmentation variant {self.variant!r}")
        if self.max_segment_len <= 0:
            raise ConfigError("max_segment_len must be positive")
        if self.variant == OVERLAP and self.max_segment_len % 2:
            raise ConfigError("overlap variant needs an even max_segment_len (stride is T/2)")

    @property
    def stride(self) -> int:
        return self.max_segment_len // 2 if self.variant == OVERLAP else self.max_segment_len


@dataclass(frozen=True)
class Segment:
    start: int                 # word-piece index in the document
    pieces: tuple[int, ...]    # contiguous slice of document word-piece ids
    segment_index: int

    @property
    def stop(self) -> int:
        return self.start + len(self.pieces)

    def __len__(self) -> int:
        return len(self.pieces)


def _token_boundaries(doc: Document) -> list[int]:
    """Positions where a cut is legal: every token's first piece, plus the end."""
    bounds = [tok.piece_range[0] for tok in doc.tokens]
    bounds.append(doc.num_pieces)
    return bounds


def _check_token_widths(doc: Document, max_len: int) -> None:
    for tok in doc.tokens:
        if tok.num_pieces > max_len:
            raise EncodingError(
                f"token {tok.token_index} ({tok.surface!r}) spans {tok.num_pieces} "
                f"word pieces, more than max_segment_len={max_len}"
            )


def _adjust_left(bounds: list[int], cut: int) -> int:
    """Largest legal boundary <= cut."""
    i = bisect.bisect_right(bounds, cut) - 1
    return bounds[i]


def split_independent(doc: Document, config: SegmentationConfig) -> list[Segment]:
    """Consecutive segments of exactly T pieces (last may be shorter)."""
    _check_token_widths(doc, config.max_segment_len)
    bounds = _token_boundaries(doc)
    n = doc.num_pieces
    segments: list[Segment] = []
    start = 0
    while start < n:
        stop = _adjust_left(bounds, min(start + config.max_segment_len, n))
        if stop <= start:  # unreachable given the token-width check
            raise EncodingError(f"cannot advance past piece {start} at T={config.max_segment_len}")
        segments.append(Segment(start, doc.word_pieces[start:stop], len(segments)))
        start = stop
    return segments


def split_overlap(doc: Document, config: SegmentationConfig) -> list[Segment]:
    """A T-sized segment after every T/2 pieces; stops at the first segment
    reaching the document end. Every piece lands in one or two segments."""
    _check_token_widths(doc, config.max_segment_len)
    bounds = _token_boundaries(doc)
    n = doc.num_pieces
    stride = config.stride
    segments: list[Segment] = []
    k = 0
    while True:
        start = _adjust_left(bounds, min(k * stride, n))
        stop = _adjust_left(bounds, min(start + config.max_segment_len, n))
        if segments and start > segments[-1].stop:
            raise CoverageError(f"coverage gap before piece {start}")
        segments.append(Segment(start, doc.word_pieces[start:stop], len(segments)))
        if stop >= n:
            return segments
        k += 1


@lru_cache(maxsize=128)
def _segments_cached(doc: Document, config: SegmentationConfig) -> tuple[Segment, ...]:
    if config.variant == OVERLAP:
        return tuple(split_overlap(doc, config))
    return tuple(split_independent(doc, config))


def segment_document(doc: Document, config: SegmentationConfig) -> list[Segment]:
    return list(_segments_cached(doc, config))


class InterpolationGate(nn.Module):
    """Element-wise blend of the two representations of a doubly-covered piece.

    gate = sigmoid(W [r1; r2]) with W a learned 2d -> d linear map (no bias),
    output = gate * r1 + (1 - gate) * r2.
    """

    def __init__(self, hidden_size: int, dtype: torch.dtype = torch.float64):
        super().__init__()
        self.hidden_size = hidden_size
        self.proj = nn.Linear(2 * hidden_size, hidden_size, bias=False, dtype=dtype)

    def forward(self, r1: torch.Tensor, r2: torch.Tensor) -> torch.Tensor:
        gate = torch.sigmoid(self.proj(torch.cat([r1, r2], dim=-1)))
        return gate * r1 + (1.0 - gate) * r2


def interpolate(r1: torch.Tensor, r2: torch.Tensor, gate: InterpolationGate) -> torch.Tensor:
    """Blend two d-vectors (or [n, d] batches) from overlapping segments."""
    return gate(r1, r2)


@lru_cache(maxsize=128)
def _coverage_plan(starts_stops: tuple[tuple[int, int], ...], num_pieces: int):
    """Flat-index gather plan for assembling per-segment outputs: which flat
    row serves each singly-covered piece, and which (earlier, later) flat row
    pair serves each doubly-covered piece."""
    first = [-1] * num_pieces
    second = [-1] * num_pieces
    offset = 0
    for start, stop in starts_stops:
        for piece in range(start, stop):
            flat = offset + piece - start
            if first[piece] < 0:
                first[piece] = flat
            elif second[piece] < 0:
                second[piece] = flat
            else:
                raise CoverageError(f"piece {piece} is covered by more than two segments")
        offset += stop - start
    missing = [p for p in range(num_pieces) if first[p] < 0]
    if missing:
        raise CoverageError(f"piece {missing[0]} is covered by no segment")
    singles = [p for p in range(num_pieces) if second[p] < 0]
    pairs = [p for p in range(num_pieces) if second[p] >= 0]
    return (
        torch.tensor(singles, dtype=torch.long),
        torch.tensor([first[p] for p in singles], dtype=torch.long),
        torch.tensor(pairs, dtype=torch.long),
        torch.tensor([first[p] for p in pairs], dtype=torch.long),
        torch.tensor([second[p] for p in pairs], dtype=torch.long),
    )


def assemble_token_representations(
    segments: list[Segment],
    outputs: list[torch.Tensor],
    gate: InterpolationGate | None,
    num_pieces: int,
) -> torch.Tensor:
    """Document-level [num_pieces, d] matrix from per-segment encoder outputs.

    Singly-covered pieces take their sole segment's row; doubly-covered pieces
    take interpolate(earlier segment's row, later segment's row).
    """
    if len(outputs) != len(segments):
        raise CoverageError(f"{len(segments)} segments but {len(outputs)} encoder outputs")
    for seg, out in zip(segments, outputs):
        if out.shape[0] != len(seg):
            raise CoverageError(
                f"segment {seg.segment_index}: {len(seg)} pieces but {out.shape[0]} output rows"
            )
    singles, singles_src, pairs, pair_first, pair_second = _coverage_plan(
        tuple((s.start, s.stop) for s in segments), num_pieces)

    flat = torch.cat(outputs, dim=0)                     # [sum(len), d]
    result = flat.new_zeros((num_pieces, flat.shape[-1]))
    if singles.numel():
        result[singles] = flat[singles_src]
    if pairs.numel():
        if gate is None:
            raise CoverageError("doubly-covered pieces but no interpolation gate")
        result[pairs] = interpolate(flat[pair_first], flat[pair_second], gate)
    return result


def truncate_document(doc: Document, segments: list[Segment], max_training_segments: int,
                      rng: random.Random) -> Document:
    """View of doc restricted to a uniformly random contiguous window of at
    most max_training_segments segments. Gold spans outside the window are
    dropped; clusters reduced below two spans are dropped."""
    if max_training_segments < 1:
        raise ConfigError("max_training_segments must be >= 1")
    if len(segments) <= max_training_segments:
        return doc
    first = rng.randint(0, len(segments) - max_training_segments)
    piece_lo = segments[first].start
    piece_hi = segments[first + max_training_segments - 1].stop

    kept = [t for t in doc.tokens if t.piece_range[0] >= piece_lo and t.piece_range[1] <= piece_hi]
    tok_lo = kept[0].token_index
    old_to_new = {t.token_index: i for i, t in enumerate(kept)}
    tokens = tuple(
        replace(t, token_index=i, piece_range=(t.piece_range[0] - piece_lo, t.piece_range[1] - piece_lo))
        for i, t in enumerate(kept)
    )
    tok_hi = tok_lo + len(kept) - 1

    clusters: list[Cluster] = []
    for cluster in doc.gold_clusters:
        spans = [
            (old_to_new[s], old_to_new[e])
            for s, e in cluster
            if tok_lo <= s and e <= tok_hi
        ]
        if len(spans) >= 2:
            clusters.append(tuple(spans))

    return replace(
        doc,
        tokens=tokens,
        word_pieces=doc.word_pieces[piece_lo:piece_hi],
        gold_clusters=tuple(clusters),
    )
