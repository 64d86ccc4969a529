"""CoNLL-2012 column format: parsing and serialization.

Documents are delimited by ``#begin document (<id>); part NNN`` / ``#end
document`` lines; sentences by blank lines; one token per line with at
least 12 whitespace-separated columns:

    0 document id, 1 part number, 2 word number, 3 word, 4 POS,
    5 parse bit, 6 lemma, 7 frameset, 8 word sense, 9 speaker,
    10 named entities, 11.. predicate arguments, last: coreference.

Only the columns a Document carries are interpreted (id, word, speaker,
coreference); the rest pass through untouched on parse and are emitted
as "-" on serialization.

The coreference column is a "|"-joined list over cluster ids: "(7" opens
cluster 7 at this token, "7)" closes the most recently opened span of
cluster 7 (LIFO, so properly nested same-cluster spans round-trip), and
"(7)" is a single-token span. "-" means no annotation.
"""

from __future__ import annotations

import re
from collections import defaultdict

from ..errors import ParseError
from .types import Cluster, Document, Span, Token, genre_of

BEGIN_RE = re.compile(r"#begin document \((?P<name>.*)\); part (?P<part>\d+)\s*$")
MIN_COLUMNS = 12
COREF_ITEM_RE = re.compile(r"^(\()?(\d+)(\))?$")


def parse_conll(text: str) -> list[Document]:
    """Parse CoNLL-2012 formatted text into Documents (untokenized)."""
    docs: list[Document] = []
    state: _DocState | None = None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        if line.startswith("#begin document"):
            if state is not None:
                raise ParseError("nested #begin document", line_no)
            m = BEGIN_RE.match(line)
            if not m:
                raise ParseError(f"malformed begin line: {line!r}", line_no)
            state = _DocState(f"{m.group('name')}_{int(m.group('part'))}")
        elif line.startswith("#end document"):
            if state is None:
                raise ParseError("#end document without #begin", line_no)
            docs.append(state.finish(line_no))
            state = None
        elif not line:
            if state is not None:
                state.end_sentence()
        elif line.startswith("#"):
            continue
        elif state is None:
            raise ParseError("token line outside any document", line_no)
        else:
            state.add_token(line, line_no)

    if state is not None:
        raise ParseError(f"document {state.doc_key!r} is missing #end document")
    return docs


class _DocState:
    def __init__(self, doc_key: str):
        self.doc_key = doc_key
        self.tokens: list[Token] = []
        self.sentence_index = 0
        self.sentence_has_tokens = False
        # cluster id -> stack of (open position, line number)
        self.open_spans: dict[int, list[tuple[int, int]]] = defaultdict(list)
        self.cluster_spans: dict[int, list[Span]] = defaultdict(list)
        self.cluster_order: list[int] = []

    def end_sentence(self):
        if self.sentence_has_tokens:
            self.sentence_index += 1
            self.sentence_has_tokens = False

    def add_token(self, line: str, line_no: int):
        cols = line.split()
        if len(cols) < MIN_COLUMNS:
            raise ParseError(f"expected at least {MIN_COLUMNS} columns, got {len(cols)}", line_no)
        pos = len(self.tokens)
        self.tokens.append(
            Token(surface=cols[3], sentence_index=self.sentence_index, token_index=pos, speaker=cols[9])
        )
        self.sentence_has_tokens = True
        self._read_coref(cols[-1], pos, line_no)

    def _read_coref(self, cell: str, pos: int, line_no: int):
        if cell == "-":
            return
        for item in cell.split("|"):
            m = COREF_ITEM_RE.match(item)
            if not m:
                raise ParseError(f"malformed coreference item {item!r}", line_no)
            opens, cid, closes = m.group(1), int(m.group(2)), m.group(3)
            if cid not in self.cluster_order and opens:
                self.cluster_order.append(cid)
            if opens and closes:
                self.cluster_spans[cid].append((pos, pos))
            elif opens:
                self.open_spans[cid].append((pos, line_no))
            else:
                if not self.open_spans[cid]:
                    raise ParseError(f"closing bracket for cluster {cid} that was never opened", line_no)
                start, _ = self.open_spans[cid].pop()
                self.cluster_spans[cid].append((start, pos))

    def finish(self, end_line_no: int) -> Document:
        for cid, stack in self.open_spans.items():
            if stack:
                _, opened_at = stack[-1]
                raise ParseError(f"cluster {cid} opened but never closed", opened_at)
        clusters: list[Cluster] = []
        for cid in self.cluster_order:
            spans = sorted(set(self.cluster_spans[cid]))
            clusters.append(tuple(spans))
        return Document(
            doc_key=self.doc_key,
            genre=genre_of(self.doc_key),
            tokens=tuple(self.tokens),
            gold_clusters=tuple(clusters),
        )


def serialize_conll(docs: list[Document]) -> str:
    """Inverse of parse_conll on the Document fields the format carries."""
    out: list[str] = []
    for doc in docs:
        name, _, part = doc.doc_key.rpartition("_")
        if not name or not part.isdigit():
            name, part = doc.doc_key, "0"
        out.append(f"#begin document ({name}); part {int(part):03d}")
        cells = _coref_cells(doc)
        word_number = 0
        prev_sentence = None
        for tok in doc.tokens:
            if prev_sentence is not None and tok.sentence_index != prev_sentence:
                out.append("")
                word_number = 0
            prev_sentence = tok.sentence_index
            cols = [name, part, str(word_number), tok.surface]
            cols += ["-"] * 5
            cols.append(tok.speaker)
            cols.append("-")
            cols.append(cells[tok.token_index])
            out.append("   ".join(cols))
            word_number += 1
        out.append("")
        out.append("#end document")
    return "\n".join(out) + "\n"


def _coref_cells(doc: Document) -> list[str]:
    opens: dict[int, list[int]] = defaultdict(list)   # position -> cluster ids, outermost first
    closes: dict[int, list[int]] = defaultdict(list)
    singles: dict[int, list[int]] = defaultdict(list)
    for cid, cluster in enumerate(doc.gold_clusters):
        # Longer spans open first so LIFO closing matches on re-parse.
        for start, end in sorted(cluster, key=lambda s: (s[0], -s[1])):
            if start == end:
                singles[start].append(cid)
            else:
                opens[start].append(cid)
                closes[end].append(cid)
    cells = []
    for pos in range(doc.num_tokens):
        items = [f"({cid}" for cid in opens.get(pos, [])]
        items += [f"({cid})" for cid in singles.get(pos, [])]
        items += [f"{cid})" for cid in reversed(closes.get(pos, []))]
        cells.append("|".join(items) if items else "-")
    return cells
