import json

from hypothesis import given, settings
from hypothesis import strategies as st

from icicle.corpus import Corpus, Document
from icicle.synthetic import make_standard_corpus
from icicle.tokenizer import (
    COPY_ID,
    EOS_ID,
    UNK_ID,
    build_vocab,
    count_tokens,
    decode,
    encode,
    encode_docid,
    load_vocab,
    normalize,
    save_vocab,
    tokenize_words,
    truncate_to_tokens,
)


def test_normalization_rule():
    assert tokenize_words("The Battle, of Hastings") == ["the", "battle", "of", "hastings"]


def test_empty_and_punctuation_only():
    assert tokenize_words("") == []
    assert tokenize_words("..., --- !!!") == []


def test_underscore_is_punctuation():
    assert tokenize_words("snake_case word") == ["snake", "case", "word"]


def test_truncate_to_tokens_preserves_original_surface():
    text = "One, TWO three four"
    assert truncate_to_tokens(text, 2) == "One, TWO"
    assert truncate_to_tokens(text, 10) == text
    assert truncate_to_tokens(text, 0) == ""


def test_vocab_covers_titles_plus_specials(tiny_corpus):
    vocab = build_vocab(tiny_corpus)
    for word in ("alpha", "beta", "gamma", "delta"):
        assert word in vocab
    assert vocab.id_to_token[:3] == ("[COPY]", "[EOS]", "[UNK]")
    assert (vocab.copy_id, vocab.eos_id, vocab.unk_id) == (0, 1, 2)


def test_vocab_deterministic(tiny_corpus, tiny_queries):
    a = build_vocab(tiny_corpus, tiny_queries)
    b = build_vocab(tiny_corpus, tiny_queries)
    assert a.token_to_id == b.token_to_id


def test_vocab_ids_dense(tiny_vocab):
    ids = sorted(tiny_vocab.token_to_id.values())
    assert ids == list(range(tiny_vocab.size))


def test_no_unk_in_any_title_on_synthetic_corpus():
    corpus = make_standard_corpus(n_docs=1000, seed=21)
    vocab = build_vocab(corpus)
    for doc in corpus:
        assert UNK_ID not in encode(vocab, doc.title)


def test_encode_examples(tiny_vocab):
    t2i = tiny_vocab.token_to_id
    assert encode(tiny_vocab, "The Battle, of Hastings") == tuple(
        t2i.get(w, UNK_ID) for w in ["the", "battle", "of", "hastings"]
    )
    assert encode(tiny_vocab, "") == ()


def test_encode_unknown_maps_to_unk(tiny_vocab):
    assert encode(tiny_vocab, "zyzzogeton") == (UNK_ID,)


def test_encode_docid_appends_eos(tiny_vocab):
    seq = encode_docid(tiny_vocab, "gamma")
    assert seq == (tiny_vocab.token_to_id["gamma"], EOS_ID)
    seq2 = encode_docid(tiny_vocab, "alpha beta")
    assert seq2[-1] == EOS_ID
    assert len(seq2) == 3


def test_docid_encodings_pairwise_distinct_on_synthetic():
    corpus = make_standard_corpus(n_docs=300, seed=8)
    vocab = build_vocab(corpus)
    seqs = [encode_docid(vocab, d) for d in corpus.doc_ids]
    assert len(set(seqs)) == len(seqs)


def test_docid_prefix_freeness():
    corpus = make_standard_corpus(n_docs=200, seed=9)
    vocab = build_vocab(corpus)
    seqs = sorted(encode_docid(vocab, d) for d in corpus.doc_ids)
    for a, b in zip(seqs, seqs[1:]):
        assert b[: len(a)] != a  # sorted adjacency catches any prefix pair


@st.composite
def vocab_and_text(draw):
    words = draw(st.lists(st.text(alphabet="abcdefg", min_size=1, max_size=5), min_size=1, max_size=8, unique=True))
    corpus = Corpus([Document("t", "t", " ".join(words))])
    sep = st.sampled_from([" ", ", ", "; ", "\n", " -- ", "! "])
    pieces = draw(st.lists(st.sampled_from(words), min_size=0, max_size=12))
    text = ""
    for piece in pieces:
        text += piece + draw(sep)
    return build_vocab(corpus), text


@settings(max_examples=150, deadline=None)
@given(vocab_and_text())
def test_round_trip_on_covered_text(pair):
    vocab, text = pair
    assert decode(vocab, encode(vocab, text)) == normalize(text)


def test_vocab_serialization_round_trip(tmp_path, tiny_corpus, tiny_queries):
    vocab = build_vocab(tiny_corpus, tiny_queries)
    path = tmp_path / "vocab.json"
    save_vocab(vocab, path)
    payload = json.loads(path.read_text())
    assert payload["specials"] == {"copy": 0, "eos": 1, "unk": 2}
    reloaded = load_vocab(path)
    assert reloaded.token_to_id == vocab.token_to_id


def test_count_tokens_matches_encode_length(tiny_vocab):
    s = "alpha beta, gamma unknownword!"
    assert count_tokens(s) == len(encode(tiny_vocab, s))


def test_special_ids_reserved():
    assert (COPY_ID, EOS_ID, UNK_ID) == (0, 1, 2)
