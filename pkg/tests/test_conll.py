import pytest

from segcoref.corpus import parse_conll, serialize_conll, tokenize_document
from segcoref.corpus.wordpiece import SubwordVocabulary
from segcoref.errors import ParseError

COLS = "-   -   -   -   -"  # pos, parse, lemma, frameset, sense


def doc_text(rows, doc_id="bc/one/00/one_000", part=0):
    lines = [f"#begin document ({doc_id}); part {part:03d}"]
    for row in rows:
        if row is None:
            lines.append("")
        else:
            word, speaker, coref = row
            lines.append(f"{doc_id}   {part}   0   {word}   {COLS}   {speaker}   -   {coref}")
    lines += ["", "#end document"]
    return "\n".join(lines) + "\n"


class TestParse:
    def test_single_bracket_pair(self):
        """"(0" on token 1 closed by "0)" on token 2 gives one [1, 2] span."""
        text = doc_text([("a", "s", "-"), ("b", "s", "(0"), ("c", "s", "0)")])
        (doc,) = parse_conll(text)
        assert doc.gold_clusters == (((1, 2),),)

    def test_combined_cell(self):
        """"(0)|(1" opens a width-1 span in cluster 0 and starts cluster 1."""
        text = doc_text([("a", "s", "(0)|(1"), ("b", "s", "1)")])
        (doc,) = parse_conll(text)
        assert doc.gold_clusters == (((0, 0),), ((0, 1),))

    def test_no_annotation(self):
        text = doc_text([("a", "s", "-"), ("b", "s", "-")])
        (doc,) = parse_conll(text)
        assert doc.gold_clusters == ()

    def test_nested_same_cluster_lifo(self):
        """The later "(3" is closed by the first "3)"."""
        text = doc_text([("a", "s", "(3"), ("b", "s", "(3"), ("c", "s", "3)"), ("d", "s", "3)")])
        (doc,) = parse_conll(text)
        assert doc.gold_clusters == (((0, 3), (1, 2)),)

    def test_speakers_genre_sentences(self):
        text = doc_text([("a", "spk1", "-"), None, ("b", "spk2", "-")], doc_id="wb/x/00/x_000")
        (doc,) = parse_conll(text)
        assert doc.genre == "wb"
        assert doc.speakers == ("spk1", "spk2")
        assert [t.sentence_index for t in doc.tokens] == [0, 1]
        assert doc.doc_key == "wb/x/00/x_000_0"

    def test_unknown_genre_prefix(self):
        text = doc_text([("a", "s", "-")], doc_id="zz/x/00/x_000")
        assert parse_conll(text)[0].genre == "other"

    def test_singleton_clusters_are_retained(self):
        text = doc_text([("a", "s", "(4)"), ("b", "s", "-")])
        assert parse_conll(text)[0].gold_clusters == (((0, 0),),)

    def test_unclosed_bracket_names_line(self):
        text = doc_text([("a", "s", "(0"), ("b", "s", "-")])
        with pytest.raises(ParseError) as err:
            parse_conll(text)
        assert err.value.line == 2  # the line that opened the bracket

    def test_close_without_open(self):
        text = doc_text([("a", "s", "0)")])
        with pytest.raises(ParseError) as err:
            parse_conll(text)
        assert err.value.line == 2

    def test_malformed_column_count(self):
        text = "\n".join([
            "#begin document (x/y); part 000",
            "x/y 0 0 word -",
            "#end document",
        ])
        with pytest.raises(ParseError) as err:
            parse_conll(text)
        assert err.value.line == 2

    def test_missing_end_document(self):
        with pytest.raises(ParseError):
            parse_conll("#begin document (x/y); part 000\n")


class TestRoundTrip:
    def test_parse_serialize_identity(self):
        rows = [
            ("Alice", "spk1", "(0"),
            ("Smith", "spk1", "0)"),
            ("saw", "spk1", "-"),
            ("Bob", "spk1", "(1)"),
            None,
            ("She", "spk2", "(0)"),
            ("met", "spk2", "-"),
            ("him", "spk2", "(1)|(2"),
            ("there", "spk2", "2)"),
        ]
        text = doc_text(rows, doc_id="nw/a/00/a_000")
        docs = parse_conll(text)
        again = parse_conll(serialize_conll(docs))
        assert again == docs

    def test_fixture_round_trip(self, fixture_dir):
        text = (fixture_dir / "synthetic_1k.conll").read_text()
        docs = parse_conll(text)
        assert sum(d.num_tokens for d in docs) >= 1000
        assert parse_conll(serialize_conll(docs)) == docs
        # serialization is a fixed point after one normalization pass
        once = serialize_conll(docs)
        assert serialize_conll(parse_conll(once)) == once

    def test_fixture_tokenization_round_trip(self, fixture_dir):
        from segcoref.corpus import detokenize
        text = (fixture_dir / "synthetic_1k.conll").read_text()
        vocab = SubwordVocabulary.from_file(fixture_dir / "synthetic_1k.vocab")
        for doc in parse_conll(text):
            doc = tokenize_document(doc, vocab)
            ranges = [t.piece_range for t in doc.tokens]
            assert detokenize(doc.word_pieces, ranges, vocab) == [t.surface for t in doc.tokens]
