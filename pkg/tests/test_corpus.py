import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icicle.corpus import (
    CorpusError,
    ingest_corpus,
    ingest_queries,
    load_split,
    save_corpus,
    save_split,
    split_corpus,
    split_queries,
)
from icicle.corpus import QueryRecord
from icicle.synthetic import make_standard_corpus


def _write_jsonl(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")


def _doc(title, text="some words here", **kw):
    return {"id": title, "title": title, "text": text, **kw}


def test_ingest_two_distinct_titles(tmp_path):
    path = tmp_path / "corpus.jsonl"
    _write_jsonl(path, [_doc("alpha beta"), _doc("gamma")])
    corpus = ingest_corpus(path)
    assert len(corpus) == 2
    assert corpus.doc_ids == ("alpha beta", "gamma")


def test_ingest_duplicate_title_cites_line(tmp_path):
    path = tmp_path / "corpus.jsonl"
    rows = [_doc(f"doc {i}") for i in range(7)]
    rows[6] = rows[2]  # line 7 repeats line 3
    _write_jsonl(path, rows)
    with pytest.raises(CorpusError, match=r":7: duplicate"):
        ingest_corpus(path)


def test_ingest_missing_field_cites_line(tmp_path):
    path = tmp_path / "corpus.jsonl"
    _write_jsonl(path, [_doc("ok first"), {"id": "x", "title": "x"}])
    with pytest.raises(CorpusError, match=r":2: missing required field 'text'"):
        ingest_corpus(path)


def test_ingest_rejects_id_title_mismatch(tmp_path):
    path = tmp_path / "corpus.jsonl"
    _write_jsonl(path, [{"id": "a", "title": "b", "text": "t"}])
    with pytest.raises(CorpusError, match="title-as-docid"):
        ingest_corpus(path)


def test_ingest_rejects_oversized_compressed(tmp_path):
    path = tmp_path / "corpus.jsonl"
    _write_jsonl(path, [_doc("big", compressed=" ".join(["w"] * 257))])
    with pytest.raises(CorpusError, match="256"):
        ingest_corpus(path)


def test_ingest_idempotent_on_thousand_docs(tmp_path):
    corpus = make_standard_corpus(n_docs=1000, seed=5)
    first = tmp_path / "first.jsonl"
    second = tmp_path / "second.jsonl"
    save_corpus(corpus, first)
    reloaded = ingest_corpus(first)
    assert len(reloaded) == 1000
    save_corpus(reloaded, second)
    assert first.read_bytes() == second.read_bytes()


def test_split_proportions_match_ratio():
    corpus = make_standard_corpus(n_docs=100, seed=1)
    split = split_corpus(corpus, 0.10, seed=7)
    assert len(split.new_ids) == 10
    assert len(split.train_ids) == 90


def test_split_deterministic():
    corpus = make_standard_corpus(n_docs=10, seed=1)
    a = split_corpus(corpus, 0.5, seed=0)
    b = split_corpus(corpus, 0.5, seed=0)
    assert a == b


def test_split_partition_across_seeds():
    corpus = make_standard_corpus(n_docs=1000, seed=2)
    all_ids = set(corpus.doc_ids)
    a = split_corpus(corpus, 0.10, seed=1)
    b = split_corpus(corpus, 0.10, seed=2)
    assert a.new_ids != b.new_ids
    for split in (a, b):
        assert split.train_ids | split.new_ids == all_ids
        assert not split.train_ids & split.new_ids


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(min_value=2, max_value=60),
    ratio=st.floats(min_value=0.05, max_value=0.95),
    seed=st.integers(min_value=0, max_value=2**32),
)
def test_split_partition_property(n, ratio, seed):
    corpus = make_standard_corpus(n_docs=n, seed=3)
    split = split_corpus(corpus, ratio, seed)
    assert split.train_ids | split.new_ids == set(corpus.doc_ids)
    assert not split.train_ids & split.new_ids
    assert abs(len(split.new_ids) - ratio * n) <= 1


def test_split_rejects_bad_inputs():
    corpus = make_standard_corpus(n_docs=5, seed=1)
    with pytest.raises(CorpusError):
        split_corpus(corpus, 0.0, seed=1)
    from icicle.corpus import Corpus

    with pytest.raises(CorpusError):
        split_corpus(Corpus([]), 0.5, seed=1)


def test_split_queries_buckets():
    corpus = make_standard_corpus(n_docs=50, seed=4)
    split = split_corpus(corpus, 0.2, seed=9)
    train_doc = next(iter(split.train_ids))
    new_doc = next(iter(split.new_ids))
    queries = [
        QueryRecord("r1", "text", train_doc),
        QueryRecord("a1", "text", new_doc),
    ]
    retention, adaptation = split_queries(queries, split)
    assert [q.query_id for q in retention] == ["r1"]
    assert [q.query_id for q in adaptation] == ["a1"]


def test_split_queries_mixed_batch_counts():
    corpus = make_standard_corpus(n_docs=100, seed=4)
    split = split_corpus(corpus, 0.3, seed=2)
    ids = corpus.doc_ids
    queries = [QueryRecord(f"q{i}", "text", ids[i * 2]) for i in range(50)]
    retention, adaptation = split_queries(queries, split)
    assert len(retention) + len(adaptation) == 50


def test_split_queries_rejects_unresolvable():
    corpus = make_standard_corpus(n_docs=10, seed=4)
    split = split_corpus(corpus, 0.2, seed=2)
    with pytest.raises(CorpusError, match="ghost"):
        split_queries([QueryRecord("ghost", "text", "no such doc")], split)


def test_split_round_trip(tmp_path):
    corpus = make_standard_corpus(n_docs=40, seed=6)
    split = split_corpus(corpus, 0.25, seed=11)
    path = tmp_path / "split.json"
    save_split(split, corpus, path)
    assert load_split(path, corpus) == split


def test_query_ingest_validates_gold(tmp_path):
    corpus = make_standard_corpus(n_docs=5, seed=1)
    path = tmp_path / "queries.jsonl"
    _write_jsonl(path, [{"qid": "q0", "text": "t", "gold": "missing doc"}])
    with pytest.raises(CorpusError, match="unknown gold"):
        ingest_queries(path, corpus)
    _write_jsonl(
        path,
        [
            {"qid": "q0", "text": "t", "gold": corpus.doc_ids[0]},
            {"qid": "q0", "text": "t2", "gold": corpus.doc_ids[1]},
        ],
    )
    with pytest.raises(CorpusError, match="duplicate query_id"):
        ingest_queries(path, corpus)
