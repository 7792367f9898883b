"""Prefix automaton over encoded docids.

One global trie covers the train-side docids (the parametric route's output
space); a fresh context trie is built per query over the in-context
candidates (the copy route's output space). Terminal nodes sit exactly on
[EOS] edges and are childless, so the token paths of distinct docids are
mutually prefix-free.

Snapshot format (``save_snapshot``): magic ``ICTR1``, a uint32-length UTF-8
JSON docid table (terminal docids in preorder), then one record per node in
preorder: int32 token_id (-1 for the root), uint32 child count, uint8
terminal flag. Children are serialized in ascending token-id order. The
snapshot is a convenience cache; nothing depends on it for correctness.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

from .tokenizer import TokenSeq, Vocabulary, encode_docid


class TrieCollisionError(ValueError):
    """Two distinct docids normalized to the same token sequence."""


class _Node:
    __slots__ = ("children", "terminal_doc")

    def __init__(self):
        self.children: dict[int, _Node] = {}
        self.terminal_doc: str | None = None


class DocidTrie:
    def __init__(self):
        self._root = _Node()
        self._size = 0

    @property
    def size(self) -> int:
        return self._size

    def _insert(self, seq: TokenSeq, doc_id: str) -> None:
        node = self._root
        for token in seq:
            node = node.children.setdefault(token, _Node())
        node.terminal_doc = doc_id
        self._size += 1

    def _walk(self, prefix: TokenSeq) -> _Node | None:
        node = self._root
        for token in prefix:
            node = node.children.get(token)
            if node is None:
                return None
        return node

    def allowed_tokens(self, prefix: TokenSeq) -> set[int]:
        """Tokens that extend *prefix* along some inserted docid; empty set
        signals a dead end."""
        node = self._walk(prefix)
        if node is None:
            return set()
        return set(node.children)

    def contains(self, seq: TokenSeq) -> bool:
        node = self._walk(seq)
        return node is not None and node.terminal_doc is not None

    def doc_at(self, seq: TokenSeq) -> str | None:
        """The docid terminating exactly at *seq*, or None."""
        node = self._walk(seq)
        return None if node is None else node.terminal_doc

    def doc_ids(self) -> list[str]:
        """All inserted docids, in preorder (ascending token-id DFS)."""
        out: list[str] = []
        stack = [self._root]
        while stack:
            node = stack.pop()
            if node.terminal_doc is not None:
                out.append(node.terminal_doc)
            for token in sorted(node.children, reverse=True):
                stack.append(node.children[token])
        return out

    def to_nested(self):
        """Canonical nested representation, for structural comparison."""

        def rec(node: _Node):
            return (
                node.terminal_doc,
                tuple((t, rec(node.children[t])) for t in sorted(node.children)),
            )

        return rec(self._root)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DocidTrie):
            return NotImplemented
        return self.to_nested() == other.to_nested()


def build_trie(vocab: Vocabulary, doc_ids) -> DocidTrie:
    """Insert every docid's encoded path; encoding collisions are a hard
    error naming both offenders."""
    doc_ids = list(doc_ids)
    if not doc_ids:
        raise ValueError("cannot build a trie from zero docids")
    if len(set(doc_ids)) != len(doc_ids):
        raise ValueError("doc_ids contains duplicates")
    encodings: dict[TokenSeq, str] = {}
    for doc_id in doc_ids:
        seq = encode_docid(vocab, doc_id)
        if seq in encodings:
            raise TrieCollisionError(
                f"docids {encodings[seq]!r} and {doc_id!r} encode to the same token sequence"
            )
        encodings[seq] = doc_id
    trie = DocidTrie()
    # canonical insertion order makes builds structurally identical
    for seq in sorted(encodings):
        trie._insert(seq, encodings[seq])
    return trie


def build_context_trie(vocab: Vocabulary, candidate_doc_ids) -> DocidTrie:
    """Per-query trie over the in-context candidates; rebuilt each query."""
    return build_trie(vocab, candidate_doc_ids)


_MAGIC = b"ICTR1"


def save_snapshot(trie: DocidTrie, path: str | Path) -> None:
    doc_table: list[str] = []
    records: list[bytes] = []

    def rec(node: _Node, token_id: int) -> None:
        terminal = node.terminal_doc is not None
        if terminal:
            doc_table.append(node.terminal_doc)
        records.append(struct.pack("<iIB", token_id, len(node.children), terminal))
        for t in sorted(node.children):
            rec(node.children[t], t)

    rec(trie._root, -1)
    table = json.dumps(doc_table, ensure_ascii=False).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(table)))
        fh.write(table)
        fh.write(b"".join(records))


def load_snapshot(path: str | Path) -> DocidTrie:
    data = Path(path).read_bytes()
    if data[:5] != _MAGIC:
        raise ValueError(f"{path} is not a trie snapshot")
    (table_len,) = struct.unpack_from("<I", data, 5)
    offset = 9
    doc_table = json.loads(data[offset : offset + table_len].decode("utf-8"))
    offset += table_len
    pos = {"byte": offset, "doc": 0}
    record = struct.Struct("<iIB")

    def rec() -> tuple[int, _Node]:
        token_id, n_children, terminal = record.unpack_from(data, pos["byte"])
        pos["byte"] += record.size
        node = _Node()
        if terminal:
            node.terminal_doc = doc_table[pos["doc"]]
            pos["doc"] += 1
        for _ in range(n_children):
            child_token, child = rec()
            node.children[child_token] = child
        return token_id, node

    _, root = rec()
    trie = DocidTrie()
    trie._root = root
    trie._size = len(doc_table)
    return trie
