"""Token-span <-> word-piece-span projection for gold annotations."""

from __future__ import annotations

from ..errors import ValidationError
from .types import Cluster, Document, Span


def check_tokenized(doc: Document) -> None:
    if doc.tokens and doc.tokens[0].piece_range is None:
        raise ValidationError(f"document {doc.doc_key!r} has no word-piece alignment")


def token_span_to_piece_span(doc: Document, span: Span) -> Span:
    """[t_start, t_end] -> [first piece of t_start, last piece of t_end], inclusive."""
    check_tokenized(doc)
    start_tok, end_tok = span
    if not 0 <= start_tok <= end_tok < doc.num_tokens:
        raise ValidationError(f"token span {span} out of bounds for {doc.doc_key!r}")
    return doc.tokens[start_tok].piece_range[0], doc.tokens[end_tok].piece_range[1] - 1


def piece_to_token_map(doc: Document) -> list[int]:
    """Token index owning each word piece."""
    check_tokenized(doc)
    owner = [0] * doc.num_pieces
    for tok in doc.tokens:
        lo, hi = tok.piece_range
        for p in range(lo, hi):
            owner[p] = tok.token_index
    return owner


def piece_span_to_token_span(doc: Document, span: Span) -> Span:
    """Inverse projection; exact for spans on token boundaries."""
    owner = piece_to_token_map(doc)
    start, end = span
    if not 0 <= start <= end < doc.num_pieces:
        raise ValidationError(f"piece span {span} out of bounds for {doc.doc_key!r}")
    return owner[start], owner[end]


def map_gold_spans_to_word_pieces(doc: Document) -> tuple[Cluster, ...]:
    """Gold clusters re-expressed over inclusive word-piece spans."""
    return tuple(
        tuple(token_span_to_piece_span(doc, span) for span in cluster)
        for cluster in doc.gold_clusters
    )


def map_piece_clusters_to_tokens(doc: Document, clusters) -> tuple[Cluster, ...]:
    owner = piece_to_token_map(doc)
    return tuple(
        tuple((owner[s], owner[e]) for s, e in cluster)
        for cluster in clusters
    )
