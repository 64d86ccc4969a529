"""Greedy longest-match subword tokenization.

The vocabulary file format is UTF-8, one subword per line, line number = id.
Non-initial pieces carry the "##" continuation prefix. A "[UNK]" entry must
be present; any token that cannot be segmented maps to that single id.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from ..errors import ValidationError
from .types import Document, Token

UNKNOWN_TOKEN = "[UNK]"
CONTINUATION = "##"


@dataclass(frozen=True)
class SubwordVocabulary:
    entries: dict[str, int]
    unknown_id: int
    continuation_marker: str = CONTINUATION

    def __post_init__(self):
        ids = sorted(self.entries.values())
        if ids != list(range(len(ids))):
            raise ValidationError("vocabulary ids must be dense and unique")
        if not 0 <= self.unknown_id < len(ids):
            raise ValidationError(f"unknown_id {self.unknown_id} out of range")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, piece: str) -> bool:
        return piece in self.entries

    def id_of(self, piece: str) -> int:
        return self.entries.get(piece, self.unknown_id)

    def piece_of(self, piece_id: int) -> str:
        return self._by_id()[piece_id]

    def _by_id(self) -> list[str]:
        by_id = [""] * len(self.entries)
        for piece, i in self.entries.items():
            by_id[i] = piece
        return by_id

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "SubwordVocabulary":
        entries: dict[str, int] = {}
        for i, line in enumerate(lines):
            piece = line.rstrip("\n")
            if piece in entries:
                raise ValidationError(f"duplicate vocabulary entry {piece!r}")
            entries[piece] = i
        if UNKNOWN_TOKEN not in entries:
            raise ValidationError(f"vocabulary has no {UNKNOWN_TOKEN} entry")
        return cls(entries=entries, unknown_id=entries[UNKNOWN_TOKEN])

    @classmethod
    def from_text(cls, text: str) -> "SubwordVocabulary":
        return cls.from_lines(text.splitlines())

    @classmethod
    def from_file(cls, path) -> "SubwordVocabulary":
        with open(path, encoding="utf-8") as f:
            return cls.from_lines(f)

    def to_text(self) -> str:
        return "\n".join(self._by_id()) + "\n"


def build_vocabulary(surfaces: Iterable[str], include_words: bool = True) -> SubwordVocabulary:
    """Vocabulary covering the given token surfaces.

    Always includes every character and its ##-continuation, so tokenization
    never falls back to [UNK]; with include_words the whole surfaces are added
    too, giving one piece per known token.
    """
    pieces: list[str] = [UNKNOWN_TOKEN]
    seen = {UNKNOWN_TOKEN}

    def add(p: str):
        if p not in seen:
            seen.add(p)
            pieces.append(p)

    for surface in surfaces:
        for ch in surface:
            add(ch)
            add(CONTINUATION + ch)
        if include_words:
            add(surface)
    return SubwordVocabulary(entries={p: i for i, p in enumerate(pieces)}, unknown_id=0)


def tokenize_token(surface: str, vocab: SubwordVocabulary) -> list[int]:
    """Greedy longest-match segmentation of a single token surface."""
    chars = surface
    start = 0
    ids: list[int] = []
    while start < len(chars):
        end = len(chars)
        found = None
        while start < end:
            piece = chars[start:end]
            if start > 0:
                piece = vocab.continuation_marker + piece
            if piece in vocab:
                found = piece
                break
            end -= 1
        if found is None:
            return [vocab.unknown_id]
        ids.append(vocab.entries[found])
        start = end
    return ids


def tokenize(surfaces: Sequence[str], vocab: SubwordVocabulary) -> tuple[list[int], list[tuple[int, int]]]:
    """Word-piece ids plus per-token half-open ranges into the id sequence."""
    ids: list[int] = []
    ranges: list[tuple[int, int]] = []
    for surface in surfaces:
        piece_ids = tokenize_token(surface, vocab)
        ranges.append((len(ids), len(ids) + len(piece_ids)))
        ids.extend(piece_ids)
    return ids, ranges


def detokenize(piece_ids: Sequence[int], ranges: Sequence[tuple[int, int]], vocab: SubwordVocabulary) -> list[str]:
    """Token surfaces back from pieces; inverse of tokenize away from [UNK]."""
    marker = vocab.continuation_marker
    surfaces = []
    for start, stop in ranges:
        parts = []
        for i in range(start, stop):
            piece = vocab.piece_of(piece_ids[i])
            if i > start and piece.startswith(marker):
                piece = piece[len(marker):]
            parts.append(piece)
        surfaces.append("".join(parts))
    return surfaces


def tokenize_document(doc: Document, vocab: SubwordVocabulary) -> Document:
    """Copy of doc with word_pieces filled and token alignment ranges set."""
    ids, ranges = tokenize([t.surface for t in doc.tokens], vocab)
    tokens = tuple(replace(t, piece_range=r) for t, r in zip(doc.tokens, ranges))
    return replace(doc, tokens=tokens, word_pieces=tuple(ids))
