"""GAP corpus: TSV parsing and snippet tokenization.

GAP rows are tab-separated with a header line and eleven columns:
ID, Text, Pronoun, Pronoun-offset, A, A-offset, A-coref, B, B-offset,
B-coref, URL. Offsets are character offsets into Text.
"""

from __future__ import annotations

import logging
import re

from ..errors import ParseError
from .types import Document, GapExample, Token
from .wordpiece import SubwordVocabulary, tokenize_document

logger = logging.getLogger(__name__)

GAP_COLUMNS = ("ID", "Text", "Pronoun", "Pronoun-offset", "A", "A-offset",
               "A-coref", "B", "B-offset", "B-coref", "URL")

MASCULINE_PRONOUNS = frozenset({"he", "him", "his"})
FEMININE_PRONOUNS = frozenset({"she", "her", "hers"})

_WORD_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

GAP_GENRE = "other"
GAP_SPEAKER = "-"


def pronoun_gender(pronoun: str) -> str | None:
    low = pronoun.lower()
    if low in MASCULINE_PRONOUNS:
        return "masculine"
    if low in FEMININE_PRONOUNS:
        return "feminine"
    return None


def _parse_flag(value: str, column: str, line: int) -> bool:
    if value == "TRUE":
        return True
    if value == "FALSE":
        return False
    raise ParseError(f"column {column}: expected TRUE or FALSE, got {value!r}", line)


def parse_gap(tsv: str) -> list[GapExample]:
    """Parse GAP TSV content; rows with unclassifiable pronouns are skipped."""
    lines = tsv.splitlines()
    if not lines:
        raise ParseError("empty GAP file")
    header = tuple(lines[0].rstrip("\n").split("\t"))
    missing = [c for c in GAP_COLUMNS if c not in header]
    if missing:
        raise ParseError(f"missing GAP column(s): {', '.join(missing)}", 1)
    index = {c: header.index(c) for c in GAP_COLUMNS}

    examples: list[GapExample] = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) < len(header):
            raise ParseError(f"expected {len(header)} columns, got {len(cols)}", line_no)

        def col(name: str) -> str:
            return cols[index[name]]

        pronoun = col("Pronoun")
        gender = pronoun_gender(pronoun)
        if gender is None:
            logger.warning("line %d: pronoun %r is not in either gender list; example %s skipped",
                           line_no, pronoun, col("ID"))
            continue
        a_coref = _parse_flag(col("A-coref"), "A-coref", line_no)
        b_coref = _parse_flag(col("B-coref"), "B-coref", line_no)
        if a_coref and b_coref:
            raise ParseError("A-coref and B-coref cannot both be TRUE", line_no)
        snippet = col("Text")
        example = GapExample(
            example_id=col("ID"),
            snippet=snippet,
            pronoun=pronoun,
            pronoun_offset=int(col("Pronoun-offset")),
            candidate_a=col("A"),
            a_offset=int(col("A-offset")),
            a_coref=a_coref,
            candidate_b=col("B"),
            b_offset=int(col("B-offset")),
            b_coref=b_coref,
            pronoun_gender=gender,
            url=col("URL"),
        )
        for name, text, offset in (("Pronoun", pronoun, example.pronoun_offset),
                                   ("A", example.candidate_a, example.a_offset),
                                   ("B", example.candidate_b, example.b_offset)):
            if not 0 <= offset <= len(snippet) - len(text) or snippet[offset:offset + len(text)] != text:
                raise ParseError(f"column {name}: offset {offset} does not locate {text!r} in Text", line_no)
        examples.append(example)
    return examples


def snippet_tokens(snippet: str) -> list[tuple[str, int, int]]:
    """Word/punctuation tokens with [start, end) character offsets."""
    return [(m.group(0), m.start(), m.end()) for m in _WORD_RE.finditer(snippet)]


def gap_example_to_document(example: GapExample, vocab: SubwordVocabulary) -> tuple[Document, list[tuple[int, int]]]:
    """Tokenized single-sentence Document for a snippet, plus per-token char spans."""
    toks = snippet_tokens(example.snippet)
    tokens = tuple(
        Token(surface=s, sentence_index=0, token_index=i, speaker=GAP_SPEAKER)
        for i, (s, _, _) in enumerate(toks)
    )
    doc = Document(doc_key=f"gap/{example.example_id}_0", genre=GAP_GENRE, tokens=tokens)
    return tokenize_document(doc, vocab), [(a, b) for _, a, b in toks]
