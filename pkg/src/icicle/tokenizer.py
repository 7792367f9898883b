"""Word-level tokenization shared by tries, templates, and scorers.

Normalization is lowercase + split on any non-alphanumeric character
(punctuation is discarded). The vocabulary is closed over the corpus it
was built from, so encoding any corpus docid never produces an unknown
token. Three special tokens occupy fixed reserved ids:

    [COPY] = 0   routing token, emitted before a docid copied from context
    [EOS]  = 1   terminates every encoded docid
    [UNK]  = 2   catch-all for out-of-vocabulary words

Special token strings contain brackets, which normalization strips from
ordinary text, so they can never collide with a real word.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

COPY_TOKEN = "[COPY]"
EOS_TOKEN = "[EOS]"
UNK_TOKEN = "[UNK]"

COPY_ID = 0
EOS_ID = 1
UNK_ID = 2

_RESERVED = (COPY_TOKEN, EOS_TOKEN, UNK_TOKEN)

# Alphanumeric runs (unicode letters and digits, underscore excluded).
_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)

TokenSeq = tuple[int, ...]


def tokenize_words(text: str) -> list[str]:
    """Lowercase and split into alphanumeric words; punctuation is dropped."""
    return _WORD_RE.findall(text.lower())


def normalize(text: str) -> str:
    return " ".join(tokenize_words(text))


def count_tokens(text: str) -> int:
    return len(tokenize_words(text))


def truncate_to_tokens(text: str, max_tokens: int) -> str:
    """Cut *text* after its first *max_tokens* words, preserving the original
    string up to that boundary."""
    if max_tokens <= 0:
        return ""
    for i, match in enumerate(_WORD_RE.finditer(text.lower())):
        if i == max_tokens - 1:
            return text[: match.end()]
    return text


@dataclass(frozen=True)
class Vocabulary:
    """Dense id assignment: specials at 0..2, then corpus words sorted
    lexicographically."""

    token_to_id: dict[str, int]
    id_to_token: tuple[str, ...] = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    @property
    def copy_id(self) -> int:
        return COPY_ID

    @property
    def eos_id(self) -> int:
        return EOS_ID

    @property
    def unk_id(self) -> int:
        return UNK_ID

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id


def build_vocab(corpus, queries: Iterable = ()) -> Vocabulary:
    """Collect every word from titles, texts, compressed texts, and query
    texts; assignment is deterministic."""
    words: set[str] = set()
    for doc in corpus:
        words.update(tokenize_words(doc.title))
        words.update(tokenize_words(doc.text))
        if doc.compressed_text is not None:
            words.update(tokenize_words(doc.compressed_text))
    for query in queries:
        words.update(tokenize_words(query.text))
    id_to_token = _RESERVED + tuple(sorted(words))
    token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
    return Vocabulary(token_to_id=token_to_id, id_to_token=id_to_token)


def encode(vocab: Vocabulary, text: str) -> TokenSeq:
    t2i = vocab.token_to_id
    return tuple(t2i.get(w, UNK_ID) for w in tokenize_words(text))


def decode(vocab: Vocabulary, ids: Iterable[int]) -> str:
    return " ".join(vocab.id_to_token[i] for i in ids)


def encode_docid(vocab: Vocabulary, doc_id: str) -> TokenSeq:
    """Encoded title plus the terminating [EOS]; the eos edge makes every
    docid path prefix-free against every other."""
    return encode(vocab, doc_id) + (EOS_ID,)


def save_vocab(vocab: Vocabulary, path: str | Path) -> None:
    payload = {
        "tokens": list(vocab.id_to_token),
        "specials": {"copy": COPY_ID, "eos": EOS_ID, "unk": UNK_ID},
    }
    Path(path).write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")


def load_vocab(path: str | Path) -> Vocabulary:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    id_to_token = tuple(payload["tokens"])
    if id_to_token[:3] != _RESERVED:
        raise ValueError(f"vocabulary file {path} does not reserve the special ids")
    token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
    return Vocabulary(token_to_id=token_to_id, id_to_token=id_to_token)
