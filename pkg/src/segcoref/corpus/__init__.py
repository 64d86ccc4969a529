from .types import Cluster, Document, GapExample, Span, Token, genre_of, DEFAULT_GENRES, OTHER_GENRE
from .wordpiece import (
    SubwordVocabulary,
    build_vocabulary,
    detokenize,
    tokenize,
    tokenize_document,
    tokenize_token,
)
from .conll import parse_conll, serialize_conll
from .gap import gap_example_to_document, parse_gap, pronoun_gender, snippet_tokens
from .alignment import (
    map_gold_spans_to_word_pieces,
    map_piece_clusters_to_tokens,
    piece_span_to_token_span,
    piece_to_token_map,
    token_span_to_piece_span,
)

__all__ = [
    "Cluster", "DEFAULT_GENRES", "Document", "GapExample", "OTHER_GENRE", "Span",
    "SubwordVocabulary", "Token", "build_vocabulary", "detokenize", "genre_of",
    "gap_example_to_document", "map_gold_spans_to_word_pieces",
    "map_piece_clusters_to_tokens", "parse_conll", "parse_gap",
    "piece_span_to_token_span", "piece_to_token_map", "pronoun_gender",
    "serialize_conll", "snippet_tokens", "token_span_to_piece_span",
    "tokenize", "tokenize_document", "tokenize_token",
]
