"""Seeded synthetic corpora for desk-scale runs and tests.

Two flavors:

  * standard — topically clustered documents with overlapping vocabulary;
    queries sample words from their gold document, so lexical ranking is
    informative but not trivial (hard negatives share topic words).
  * oracle — every document has a private vocabulary and each query is the
    gold document's display text verbatim, so query-gold similarity is
    exactly 1 and query-distractor similarity exactly 0. This realizes the
    analytic limit in which adaptation retrieval is perfect by construction.
"""

from __future__ import annotations

import random
from typing import Sequence

from .corpus import Corpus, Document, QueryRecord

_WORD_BANK = [
    "amber", "anchor", "arch", "basin", "beacon", "birch", "blaze", "breeze",
    "bridge", "brook", "canyon", "cedar", "cliff", "cloud", "coral", "crane",
    "creek", "crest", "dawn", "delta", "drift", "dune", "ember", "fable",
    "falcon", "fern", "flint", "forge", "frost", "gale", "glade", "glacier",
    "grove", "harbor", "hazel", "heath", "hollow", "horizon", "iris", "isle",
    "jade", "juniper", "keel", "lagoon", "lantern", "larch", "ledge", "linden",
    "lumen", "maple", "marsh", "meadow", "mesa", "mirth", "moss", "nectar",
    "north", "oasis", "ochre", "onyx", "orchard", "osprey", "pebble", "pine",
    "plume", "prairie", "quarry", "quill", "raven", "reef", "ridge", "river",
    "rowan", "rust", "saffron", "sage", "shale", "shoal", "sierra", "slate",
    "sparrow", "spire", "spruce", "summit", "sundial", "tarn", "thicket", "tide",
    "timber", "topaz", "trellis", "tundra", "umber", "vale", "vapor", "violet",
    "walnut", "wharf", "willow", "winter", "wren", "zephyr",
]


def make_standard_corpus(n_docs: int = 1000, seed: int = 13, n_topics: int = 25) -> Corpus:
    rng = random.Random(seed)
    topics = [rng.sample(_WORD_BANK, 8) for _ in range(n_topics)]
    documents = []
    for i in range(n_docs):
        topic = topics[i % n_topics]
        w1, w2 = rng.sample(topic, 2)
        title = f"{w1} {w2} {i:04d}"
        body_words = (
            [w1, w2]
            + rng.choices(topic, k=14)
            + rng.choices(_WORD_BANK, k=6)
        )
        text = " ".join(body_words)
        compressed = " ".join(body_words[:12]) if i % 2 == 0 else None
        documents.append(
            Document(doc_id=title, title=title, text=text, compressed_text=compressed)
        )
    return Corpus(documents)


def make_standard_queries(
    corpus: Corpus,
    n_queries: int = 400,
    seed: int = 29,
    doc_ids: Sequence[str] | None = None,
    prefix: str = "q",
) -> list[QueryRecord]:
    rng = random.Random(seed)
    doc_ids = corpus.doc_ids if doc_ids is None else tuple(doc_ids)
    queries = []
    for i in range(n_queries):
        doc = corpus.get(doc_ids[rng.randrange(len(doc_ids))])
        # draw from the displayed words so compressed docs stay matchable
        source = (doc.compressed_text or doc.text).split()
        k = rng.randint(4, min(7, len(source)))
        text = " ".join(rng.sample(source, k))
        queries.append(QueryRecord(query_id=f"{prefix}{i:05d}", text=text, gold_doc_id=doc.doc_id))
    return queries


def make_standard_dataset(
    n_docs: int = 1000, n_queries: int = 400, seed: int = 13
) -> tuple[Corpus, list[QueryRecord]]:
    corpus = make_standard_corpus(n_docs, seed)
    return corpus, make_standard_queries(corpus, n_queries, seed + 1)


def make_oracle_corpus(n_docs: int = 1000) -> Corpus:
    documents = []
    for i in range(n_docs):
        title = f"entry{i:04d} t{i:04d}"
        text = " ".join(f"w{i:04d}{c}" for c in "abcdef")
        documents.append(Document(doc_id=title, title=title, text=text))
    return Corpus(documents)


def make_oracle_queries(
    corpus: Corpus, target_doc_ids: Sequence[str], n_queries: int
) -> list[QueryRecord]:
    """Queries cycling over the targets, each the display text of its gold
    document verbatim."""
    queries = []
    for i in range(n_queries):
        doc = corpus.get(target_doc_ids[i % len(target_doc_ids)])
        queries.append(
            QueryRecord(query_id=f"oq{i:05d}", text=doc.text, gold_doc_id=doc.doc_id)
        )
    return queries
