"""Document and query collections plus the train/new incremental split.

Interchange formats (all UTF-8):
  corpus:  JSONL, one document per line, {"id", "title", "text", "compressed"?}
  queries: JSONL, {"qid", "text", "gold"}
  split:   JSON, {"seed", "ratio", "new_ids"}; train ids are the complement

Documents use the title-as-docid scheme: ``doc_id`` must equal ``title``.
All containers are immutable after construction.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

from .tokenizer import count_tokens

COMPRESSED_TOKEN_CAP = 256


class CorpusError(ValueError):
    """Raised on malformed or inconsistent corpus/query input."""


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    text: str
    compressed_text: str | None = None


@dataclass(frozen=True)
class QueryRecord:
    query_id: str
    text: str
    gold_doc_id: str


class Corpus:
    """Documents in canonical (ingestion) order with unique docids."""

    def __init__(self, documents: Sequence[Document]):
        self._documents = tuple(documents)
        self._by_id: dict[str, Document] = {}
        self._index: dict[str, int] = {}
        for i, doc in enumerate(self._documents):
            if doc.doc_id in self._by_id:
                raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
            self._by_id[doc.doc_id] = doc
            self._index[doc.doc_id] = i

    def __len__(self) -> int:
        return len(self._documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self._documents)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def get(self, doc_id: str) -> Document:
        try:
            return self._by_id[doc_id]
        except KeyError:
            raise CorpusError(f"unknown doc_id {doc_id!r}") from None

    @property
    def doc_ids(self) -> tuple[str, ...]:
        return tuple(d.doc_id for d in self._documents)

    def index_of(self, doc_id: str) -> int:
        """Position in canonical order; the tie-breaker used everywhere."""
        return self._index[doc_id]

    def in_canonical_order(self, doc_ids) -> list[str]:
        return sorted(doc_ids, key=self._index.__getitem__)


@dataclass(frozen=True)
class CorpusSplit:
    """Disjoint, exhaustive partition of a corpus into train and new ids."""

    train_ids: frozenset[str]
    new_ids: frozenset[str]
    seed: int
    ratio: float


def _require_str(obj: dict, key: str, lineno: int, path) -> str:
    if key not in obj:
        raise CorpusError(f"{path}:{lineno}: missing required field {key!r}")
    value = obj[key]
    if not isinstance(value, str):
        raise CorpusError(f"{path}:{lineno}: field {key!r} must be a string")
    return value


def ingest_corpus(path: str | Path) -> Corpus:
    """Read and validate a JSONL corpus; line order becomes canonical order."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    documents: list[Document] = []
    seen: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            doc_id = _require_str(obj, "id", lineno, path)
            title = _require_str(obj, "title", lineno, path)
            text = _require_str(obj, "text", lineno, path)
            compressed = obj.get("compressed")
            if compressed is not None and not isinstance(compressed, str):
                raise CorpusError(f"{path}:{lineno}: field 'compressed' must be a string")
            if not doc_id:
                raise CorpusError(f"{path}:{lineno}: empty doc_id")
            if doc_id != title:
                raise CorpusError(
                    f"{path}:{lineno}: id must equal title (title-as-docid), "
                    f"got id={doc_id!r} title={title!r}"
                )
            if doc_id in seen:
                raise CorpusError(
                    f"{path}:{lineno}: duplicate doc_id {doc_id!r} "
                    f"(first seen on line {seen[doc_id]})"
                )
            if compressed is not None and count_tokens(compressed) > COMPRESSED_TOKEN_CAP:
                raise CorpusError(
                    f"{path}:{lineno}: compressed text exceeds "
                    f"{COMPRESSED_TOKEN_CAP} tokens"
                )
            seen[doc_id] = lineno
            documents.append(
                Document(doc_id=doc_id, title=title, text=text, compressed_text=compressed)
            )
    return Corpus(documents)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for doc in corpus:
            obj = {"id": doc.doc_id, "title": doc.title, "text": doc.text}
            if doc.compressed_text is not None:
                obj["compressed"] = doc.compressed_text
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def ingest_queries(path: str | Path, corpus: Corpus | None = None) -> list[QueryRecord]:
    """Read a JSONL query file; when *corpus* is given, every gold docid must
    resolve and query ids must be unique."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    queries: list[QueryRecord] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            qid = _require_str(obj, "qid", lineno, path)
            text = _require_str(obj, "text", lineno, path)
            gold = _require_str(obj, "gold", lineno, path)
            if qid in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate query_id {qid!r}")
            seen.add(qid)
            if corpus is not None and gold not in corpus:
                raise CorpusError(f"{path}:{lineno}: query {qid!r} has unknown gold {gold!r}")
            queries.append(QueryRecord(query_id=qid, text=text, gold_doc_id=gold))
    return queries


def save_queries(queries: Sequence[QueryRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for q in queries:
            obj = {"qid": q.query_id, "text": q.text, "gold": q.gold_doc_id}
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def split_corpus(corpus: Corpus, new_ratio: float, seed: int) -> CorpusSplit:
    """Seeded uniform shuffle, then a prefix cut of round(ratio * n) docs
    becomes the new (unseen) side."""
    if len(corpus) == 0:
        raise CorpusError("cannot split an empty corpus")
    if not 0.0 < new_ratio < 1.0:
        raise CorpusError(f"new_ratio must be in (0, 1), got {new_ratio}")
    ids = list(corpus.doc_ids)
    random.Random(seed).shuffle(ids)
    n_new = round(new_ratio * len(ids))
    return CorpusSplit(
        train_ids=frozenset(ids[n_new:]),
        new_ids=frozenset(ids[:n_new]),
        seed=seed,
        ratio=new_ratio,
    )


def split_queries(
    queries: Sequence[QueryRecord], split: CorpusSplit
) -> tuple[list[QueryRecord], list[QueryRecord]]:
    """Partition queries into (retention, adaptation) by where their gold
    document lives."""
    unresolved = [q.query_id for q in queries if q.gold_doc_id not in split.train_ids and q.gold_doc_id not in split.new_ids]
    if unresolved:
        raise CorpusError(f"queries with unresolvable gold docids: {unresolved}")
    retention = [q for q in queries if q.gold_doc_id in split.train_ids]
    adaptation = [q for q in queries if q.gold_doc_id in split.new_ids]
    return retention, adaptation


def save_split(split: CorpusSplit, corpus: Corpus, path: str | Path) -> None:
    payload = {
        "seed": split.seed,
        "ratio": split.ratio,
        "new_ids": corpus.in_canonical_order(split.new_ids),
    }
    Path(path).write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def load_split(path: str | Path, corpus: Corpus) -> CorpusSplit:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    new_ids = frozenset(payload["new_ids"])
    unknown = new_ids - set(corpus.doc_ids)
    if unknown:
        raise CorpusError(f"split file references unknown docids: {sorted(unknown)[:5]}")
    return CorpusSplit(
        train_ids=frozenset(corpus.doc_ids) - new_ids,
        new_ids=new_ids,
        seed=int(payload["seed"]),
        ratio=float(payload["ratio"]),
    )
