"""Deterministic toy corpora for smoke tests, demos, and the desk-scale
training oracles. Entities are repeated name surfaces; every occurrence of
an entity's name is a gold mention of that entity's cluster."""

from __future__ import annotations

import random

from .corpus.types import Document, Token, genre_of
from .corpus.wordpiece import SubwordVocabulary, build_vocabulary, tokenize_document

NAMES = ["alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi",
         "ivan", "judy", "mallory", "oscar"]
TITLES = ["dr", "mr", "ms"]
VERBS = ["saw", "met", "liked", "called", "helped", "thanked", "found", "joined"]
NOUNS = ["park", "store", "book", "game", "house", "table", "letter", "garden"]
FILLERS = ["yesterday", "today", "quietly", "again", "there", "soon"]


def _entity_surface(rng: random.Random, name: str, titled: bool) -> list[str]:
    return [rng.choice(TITLES), name] if titled else [name]


def synthetic_document(doc_index: int, rng: random.Random, num_entities: int = 2,
                       mentions_per_entity: int = 3, titled_names: bool = False,
                       genre_key: str = "nw", speakers: tuple[str, ...] = ("spk0", "spk1"),
                       ) -> Document:
    """One document: each entity appears mentions_per_entity times, one
    sentence per mention round. Gold clusters are the entity name spans."""
    names = rng.sample(NAMES, num_entities)
    titled = [titled_names and rng.random() < 0.5 for _ in names]
    surfaces: list[str] = []
    sentence_idx: list[int] = []
    spans_of: dict[str, list[tuple[int, int]]] = {n: [] for n in names}

    sentence = 0
    for _ in range(mentions_per_entity):
        for e, name in enumerate(names):
            mention = _entity_surface(rng, name, titled[e])
            words = mention + [rng.choice(VERBS), "the", rng.choice(NOUNS)]
            if rng.random() < 0.5:
                words.append(rng.choice(FILLERS))
            words.append(".")
            start = len(surfaces)
            spans_of[name].append((start, start + len(mention) - 1))
            for w in words:
                surfaces.append(w)
                sentence_idx.append(sentence)
            sentence += 1

    doc_key = f"{genre_key}/synth/00/synth_{doc_index:04d}_0"
    tokens = tuple(
        Token(surface=w, sentence_index=s, token_index=i,
              speaker=speakers[s % len(speakers)])
        for i, (w, s) in enumerate(zip(surfaces, sentence_idx))
    )
    clusters = tuple(tuple(spans_of[n]) for n in names)
    return Document(doc_key=doc_key, genre=genre_of(doc_key), tokens=tokens,
                    gold_clusters=clusters)


def synthetic_corpus(num_docs: int = 5, seed: int = 0, num_entities: int = 2,
                     mentions_per_entity: int = 3, titled_names: bool = False,
                     vocab: SubwordVocabulary | None = None,
                     ) -> tuple[list[Document], SubwordVocabulary]:
    """Tokenized documents plus a vocabulary that covers them."""
    rng = random.Random(seed)
    raw = [synthetic_document(i, rng, num_entities, mentions_per_entity, titled_names)
           for i in range(num_docs)]
    if vocab is None:
        vocab = default_vocabulary()
    docs = [tokenize_document(d, vocab) for d in raw]
    return docs, vocab


def default_vocabulary(char_fallbacks: bool = True) -> SubwordVocabulary:
    """Whole-word pieces for the generator's lexicon, optionally with
    per-character fallbacks for out-of-lexicon surfaces."""
    words = NAMES + TITLES + VERBS + NOUNS + FILLERS + ["the", "."]
    if char_fallbacks:
        return build_vocabulary(words, include_words=True)
    entries = {"[UNK]": 0}
    for w in words:
        entries.setdefault(w, len(entries))
    return SubwordVocabulary(entries=entries, unknown_id=0)


def split_vocabulary(words) -> SubwordVocabulary:
    """Every multi-character word splits into exactly two pieces (first
    character + ##rest); single characters stay whole."""
    entries = {"[UNK]": 0}
    for w in sorted(set(words)):
        if len(w) == 1:
            entries.setdefault(w, len(entries))
        else:
            entries.setdefault(w[:1], len(entries))
            entries.setdefault("##" + w[1:], len(entries))
    return SubwordVocabulary(entries=entries, unknown_id=0)


def gradcheck_document(seed: int = 0) -> tuple[Document, SubwordVocabulary]:
    """A small document (<= 30 word pieces) for gradient verification.

    Words tokenize into two pieces each so span attention is non-trivial,
    while single-token spans keep the candidate set free of crossing pairs
    (the greedy suppression order must not flip under tiny perturbations).
    """
    rng = random.Random(seed)
    names = rng.sample(NAMES, 2)
    surfaces: list[str] = []
    sentence_idx: list[int] = []
    spans_of = {n: [] for n in names}
    sentence = 0
    for _ in range(2):
        for name in names:
            spans_of[name].append((len(surfaces), len(surfaces)))
            for w in (name, rng.choice(VERBS), rng.choice(NOUNS), "."):
                surfaces.append(w)
                sentence_idx.append(sentence)
            sentence += 1

    doc_key = "nw/synth/00/gradcheck_0"
    tokens = tuple(
        Token(surface=w, sentence_index=s, token_index=i, speaker=("spk0", "spk1")[s % 2])
        for i, (w, s) in enumerate(zip(surfaces, sentence_idx))
    )
    doc = Document(doc_key=doc_key, genre=genre_of(doc_key), tokens=tokens,
                   gold_clusters=tuple(tuple(spans_of[n]) for n in names))
    vocab = split_vocabulary(surfaces)
    doc = tokenize_document(doc, vocab)
    assert doc.num_pieces <= 30, doc.num_pieces
    return doc, vocab
