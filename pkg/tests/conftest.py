import pytest

from icicle.corpus import Corpus, Document, QueryRecord
from icicle.synthetic import make_standard_corpus, make_standard_queries
from icicle.tokenizer import build_vocab


@pytest.fixture
def tiny_corpus():
    return Corpus(
        [
            Document("alpha beta", "alpha beta", "alpha beta words about rivers"),
            Document("gamma", "gamma", "gamma words about mountains"),
            Document("alpha delta", "alpha delta", "alpha delta words about valleys"),
        ]
    )


@pytest.fixture
def tiny_queries():
    return [
        QueryRecord("q1", "rivers alpha", "alpha beta"),
        QueryRecord("q2", "mountains", "gamma"),
    ]


@pytest.fixture
def tiny_vocab(tiny_corpus, tiny_queries):
    return build_vocab(tiny_corpus, tiny_queries)


@pytest.fixture(scope="session")
def small_synthetic():
    corpus = make_standard_corpus(n_docs=120, seed=13)
    queries = make_standard_queries(corpus, n_queries=60, seed=14)
    return corpus, queries
