"""Input validation helpers for the estimator and the CLI surfaces."""

from __future__ import annotations

from typing import Sequence

from .corpus.types import Document
from .errors import ValidationError


def check_documents(X, require_tokenized: bool = True, require_gold: bool = False) -> list[Document]:
    """Validate a document collection: types, alignment, span bounds."""
    try:
        docs = list(X)
    except TypeError:
        raise ValidationError("expected an iterable of Documents")
    if not docs:
        raise ValidationError("expected at least one Document")
    for doc in docs:
        if not isinstance(doc, Document):
            raise ValidationError(f"expected Document, got {type(doc).__name__}")
        if not doc.tokens:
            raise ValidationError(f"document {doc.doc_key!r} has no tokens")
        if require_tokenized:
            check_alignment(doc)
        if require_gold and not doc.gold_clusters:
            raise ValidationError(f"document {doc.doc_key!r} has no gold clusters")
        check_gold_spans(doc)
    return docs


def check_alignment(doc: Document) -> None:
    """Per-token piece ranges must tile the word-piece sequence exactly."""
    expected = 0
    for tok in doc.tokens:
        if tok.piece_range is None:
            raise ValidationError(
                f"document {doc.doc_key!r} is not tokenized (run tokenize_document first)")
        lo, hi = tok.piece_range
        if lo != expected or hi <= lo:
            raise ValidationError(
                f"document {doc.doc_key!r}: token {tok.token_index} has piece range "
                f"[{lo}, {hi}) but the previous token ended at {expected}")
        expected = hi
    if expected != doc.num_pieces:
        raise ValidationError(
            f"document {doc.doc_key!r}: tokens cover {expected} pieces, document has {doc.num_pieces}")


def check_gold_spans(doc: Document) -> None:
    seen: set[tuple[int, int]] = set()
    for cluster in doc.gold_clusters:
        for start, end in cluster:
            if not 0 <= start <= end < doc.num_tokens:
                raise ValidationError(
                    f"document {doc.doc_key!r}: gold span ({start}, {end}) out of bounds")
            if (start, end) in seen:
                raise ValidationError(
                    f"document {doc.doc_key!r}: gold span ({start}, {end}) in two clusters")
            seen.add((start, end))


def check_same_lengths(name_a: str, a: Sequence, name_b: str, b: Sequence) -> None:
    if len(a) != len(b):
        raise ValidationError(f"{name_a} has {len(a)} items but {name_b} has {len(b)}")
