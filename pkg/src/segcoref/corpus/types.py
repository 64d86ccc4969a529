"""Core document types: tokens, documents, and GAP examples.

Gold annotation lives on whole tokens; the model consumes word pieces.
A Document therefore carries both layers plus the token -> word-piece
alignment, which is populated by ``wordpiece.tokenize_document``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

Span = tuple[int, int]  # inclusive [start, end]
Cluster = tuple[Span, ...]

DEFAULT_GENRES = ("bc", "bn", "mz", "nw", "pt", "tc", "wb")
OTHER_GENRE = "other"


def genre_of(doc_key: str, genres: tuple[str, ...] = DEFAULT_GENRES) -> str:
    """Genre label from the doc_key prefix; unrecognized prefixes map to "other"."""
    prefix = doc_key[:2]
    return prefix if prefix in genres else OTHER_GENRE


@dataclass(frozen=True)
class Token:
    surface: str
    sentence_index: int
    token_index: int
    speaker: str
    # Half-open [start, stop) into the document's word-piece sequence.
    # None until the document has been run through the subword tokenizer.
    piece_range: tuple[int, int] | None = None

    @property
    def num_pieces(self) -> int:
        if self.piece_range is None:
            raise ValueError(f"token {self.token_index} ({self.surface!r}) is not tokenized")
        return self.piece_range[1] - self.piece_range[0]


@dataclass(frozen=True)
class Document:
    doc_key: str
    genre: str
    tokens: tuple[Token, ...]
    # Gold coreference clusters over inclusive token-index spans.
    gold_clusters: tuple[Cluster, ...] = ()
    # Subword ids; empty until tokenized.
    word_pieces: tuple[int, ...] = ()

    @property
    def speakers(self) -> tuple[str, ...]:
        return tuple(t.speaker for t in self.tokens)

    @property
    def num_tokens(self) -> int:
        return len(self.tokens)

    @property
    def num_pieces(self) -> int:
        return len(self.word_pieces)

    @property
    def is_tokenized(self) -> bool:
        return bool(self.word_pieces) or not self.tokens

    def sentences(self) -> list[list[Token]]:
        out: list[list[Token]] = []
        for tok in self.tokens:
            if not out or out[-1][0].sentence_index != tok.sentence_index:
                out.append([])
            out[-1].append(tok)
        return out

    def with_clusters(self, clusters: tuple[Cluster, ...]) -> "Document":
        return replace(self, gold_clusters=clusters)


@dataclass(frozen=True)
class GapExample:
    """One ambiguous pronoun-name row from the GAP corpus."""

    example_id: str
    snippet: str
    pronoun: str
    pronoun_offset: int
    candidate_a: str
    a_offset: int
    a_coref: bool
    candidate_b: str
    b_offset: int
    b_coref: bool
    pronoun_gender: str  # "masculine" | "feminine"
    url: str = ""

    @property
    def gold_candidate(self) -> str | None:
        """"A", "B", or None when neither candidate corefers with the pronoun."""
        if self.a_coref:
            return "A"
        if self.b_coref:
            return "B"
        return None
