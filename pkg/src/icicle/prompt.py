"""In-context instance construction and template rendering.

An instance is a candidate list (docid + display text), an optional gold
position, and the supervision target. Two modes exist:

  * context_dependent — the gold document sits among the candidates at a
    seeded-uniform position; the target is [COPY] followed by the gold
    docid path.
  * query_irrelevant — the candidates are all hard negatives; the target is
    the gold docid path with no [COPY], forcing recall from memory.

A candidate's display text is its precomputed compressed text when present,
otherwise its body truncated to 256 tokens. Rendering below is normative
and pinned byte-for-byte by fixtures.

Prompt token budget (exact under this tokenizer):

    tokens(render) = HEADER_TOKENS
                   + sum(tokens(display_i) + tokens(docid_i) + PER_ITEM_OVERHEAD_TOKENS)
                   + tokens(query_text) + FOOTER_TOKENS

where the per-item overhead is the index marker plus the "Title:" marker
(one token each; brackets, colons and newlines vanish under normalization).

Instance batch files are JSONL: {qid, mode, candidate_ids, gold_position?,
seed}; display texts and targets are re-derived from the corpus on read.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import Corpus, CorpusError, Document, QueryRecord
from .rng import rng_for
from .scorer import TfidfModel, TfidfVectors
from .tokenizer import (
    COPY_ID,
    TokenSeq,
    Vocabulary,
    count_tokens,
    encode_docid,
    truncate_to_tokens,
)

DISPLAY_TOKEN_CAP = 256

SYSTEM_LINE = (
    "Given a query and a list of candidate documents, retrieve the title of the "
    "most relevant document. If the relevant document appears in the candidate "
    "list, output [COPY] followed by its title. Otherwise, output the title "
    "from memory directly."
)

HEADER_TOKENS = count_tokens(SYSTEM_LINE) + 1  # + "Candidates:"
PER_ITEM_OVERHEAD_TOKENS = 2  # index marker + "Title:"
FOOTER_TOKENS = 2  # "Query:" + "Output:"


class Mode(str, Enum):
    CONTEXT_DEPENDENT = "context_dependent"
    QUERY_IRRELEVANT = "query_irrelevant"


@dataclass(frozen=True)
class InContextInstance:
    query: QueryRecord | None
    candidates: tuple[tuple[str, str], ...]  # (doc_id, display_text)
    gold_position: int | None
    mode: Mode
    supervision_target: TokenSeq
    seed: int = 0

    def __post_init__(self):
        ids = [doc_id for doc_id, _ in self.candidates]
        if self.mode is Mode.CONTEXT_DEPENDENT:
            if self.gold_position is None:
                raise ValueError("context_dependent instance requires a gold position")
            if self.query is not None and ids[self.gold_position] != self.query.gold_doc_id:
                raise ValueError("candidate at gold_position is not the gold document")
            if not self.supervision_target or self.supervision_target[0] != COPY_ID:
                raise ValueError("context_dependent target must start with [COPY]")
        else:
            if self.gold_position is not None:
                raise ValueError("query_irrelevant instance cannot carry a gold position")
            if self.query is not None and self.query.gold_doc_id in ids:
                raise ValueError("gold document leaked into a query_irrelevant candidate set")
            if self.supervision_target and self.supervision_target[0] == COPY_ID:
                raise ValueError("query_irrelevant target must not start with [COPY]")

    @property
    def candidate_ids(self) -> tuple[str, ...]:
        return tuple(doc_id for doc_id, _ in self.candidates)

    @property
    def instance_id(self) -> str:
        qid = self.query.query_id if self.query else "anon"
        tag = "ctx" if self.mode is Mode.CONTEXT_DEPENDENT else "noise"
        return f"{qid}/{tag}"


def display_text(doc: Document) -> str:
    if doc.compressed_text is not None:
        return doc.compressed_text
    return truncate_to_tokens(doc.text, DISPLAY_TOKEN_CAP)


def render_template(instance: InContextInstance) -> str:
    parts = [SYSTEM_LINE, "", "Candidates:"]
    for i, (doc_id, display) in enumerate(instance.candidates, 1):
        parts.append(f"[{i}] {display}")
        parts.append(f"Title: {doc_id}")
    query_text = instance.query.text if instance.query else ""
    parts.append(f"Query: {query_text}")
    parts.append("Output:")
    return "\n".join(parts)


def prompt_token_count(instance: InContextInstance) -> int:
    """The documented budget formula; equals the token count of the rendered
    template exactly."""
    total = HEADER_TOKENS + FOOTER_TOKENS
    for doc_id, display in instance.candidates:
        total += count_tokens(display) + count_tokens(doc_id) + PER_ITEM_OVERHEAD_TOKENS
    if instance.query:
        total += count_tokens(instance.query.text)
    return total


class HardNegativeMiner:
    """Ranked semantic neighbors within the training corpus.

    The default similarity is tf-idf cosine over document bodies with idf
    fit on the training side; any (text, text) -> float callable can be
    plugged in instead (e.g. a dense-encoder backend). Ties break by
    canonical corpus order.
    """

    def __init__(
        self,
        corpus: Corpus,
        train_ids,
        similarity: Callable[[str, str], float] | None = None,
    ):
        self.corpus = corpus
        self.doc_ids = tuple(corpus.in_canonical_order(train_ids))
        self._similarity = similarity
        if similarity is None:
            texts = [corpus.get(d).text for d in self.doc_ids]
            self._vectors = TfidfVectors(TfidfModel(texts), texts)

    def _scores(self, anchor_text: str) -> np.ndarray:
        if self._similarity is None:
            return self._vectors.similarities(anchor_text)
        return np.array([self._similarity(anchor_text, self.corpus.get(d).text) for d in self.doc_ids])

    def mine(self, doc_id: str, k: int) -> list[str]:
        if k < 1:
            raise ValueError("k must be >= 1")
        if doc_id not in self.corpus:
            raise CorpusError(f"unknown doc_id {doc_id!r}")
        if k > len(self.doc_ids) - 1:
            raise ValueError(
                f"k={k} exceeds the {len(self.doc_ids) - 1} available non-anchor documents"
            )
        scores = self._scores(self.corpus.get(doc_id).text)
        order = sorted(
            (i for i, d in enumerate(self.doc_ids) if d != doc_id),
            key=lambda i: (-scores[i], self.corpus.index_of(self.doc_ids[i])),
        )
        return [self.doc_ids[i] for i in order[:k]]


def mine_hard_negatives(
    corpus: Corpus,
    train_ids,
    doc_id: str,
    k: int,
    similarity: Callable[[str, str], float] | None = None,
) -> list[str]:
    return HardNegativeMiner(corpus, train_ids, similarity).mine(doc_id, k)


class InstanceBuilder:
    def __init__(self, corpus: Corpus, vocab: Vocabulary):
        self.corpus = corpus
        self.vocab = vocab

    def _display(self, doc_id: str) -> str:
        return display_text(self.corpus.get(doc_id))

    def build_context_dependent(
        self, query: QueryRecord, negatives: Sequence[str], n: int, seed: int
    ) -> InContextInstance:
        """Gold at a seeded-uniform slot among n candidates; the other slots
        take the first n-1 negatives in their mined order."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if query.gold_doc_id in negatives:
            raise ValueError(f"gold {query.gold_doc_id!r} found among negatives")
        if len(negatives) < n - 1:
            raise ValueError(f"need {n - 1} negatives, got {len(negatives)}")
        position = rng_for(seed, query.query_id, "gold-position").randrange(n)
        ids = list(negatives[: n - 1])
        ids.insert(position, query.gold_doc_id)
        return InContextInstance(
            query=query,
            candidates=tuple((d, self._display(d)) for d in ids),
            gold_position=position,
            mode=Mode.CONTEXT_DEPENDENT,
            supervision_target=(COPY_ID,) + encode_docid(self.vocab, query.gold_doc_id),
            seed=seed,
        )

    def build_query_irrelevant(
        self, query: QueryRecord, negatives: Sequence[str], n: int, seed: int = 0
    ) -> InContextInstance:
        if n < 1:
            raise ValueError("n must be >= 1")
        if query.gold_doc_id in negatives:
            raise ValueError(f"gold {query.gold_doc_id!r} found among negatives")
        if len(negatives) < n:
            raise ValueError(f"need {n} negatives, got {len(negatives)}")
        ids = list(negatives[:n])
        return InContextInstance(
            query=query,
            candidates=tuple((d, self._display(d)) for d in ids),
            gold_position=None,
            mode=Mode.QUERY_IRRELEVANT,
            supervision_target=encode_docid(self.vocab, query.gold_doc_id),
            seed=seed,
        )

    def from_candidate_list(
        self,
        query: QueryRecord,
        candidate_ids: Sequence[str],
        mode: Mode,
        seed: int = 0,
        title_only: bool = False,
    ) -> InContextInstance:
        """Wrap a pre-shuffled candidate id list (e.g. a query-specific
        search set) as an instance."""
        ids = list(candidate_ids)
        if mode is Mode.CONTEXT_DEPENDENT:
            if ids.count(query.gold_doc_id) != 1:
                raise ValueError("context_dependent candidate list must contain gold exactly once")
            position = ids.index(query.gold_doc_id)
            target: TokenSeq = (COPY_ID,) + encode_docid(self.vocab, query.gold_doc_id)
        else:
            position = None
            target = encode_docid(self.vocab, query.gold_doc_id)
        displays = ("" for _ in ids) if title_only else (self._display(d) for d in ids)
        return InContextInstance(
            query=query,
            candidates=tuple(zip(ids, displays)),
            gold_position=position,
            mode=mode,
            supervision_target=target,
            seed=seed,
        )

    def build_title_only_context(
        self,
        doc_ids: Sequence[str],
        k: int,
        gold: str | None = None,
        seed: int = 0,
        query: QueryRecord | None = None,
    ) -> InContextInstance:
        """Large-context form: candidates carry titles only (empty display
        text). With a gold docid the insertion rule matches
        build_context_dependent; otherwise the first k ids are taken as-is."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if gold is not None:
            if gold in doc_ids:
                raise ValueError(f"gold {gold!r} must not be in the distractor pool")
            if len(doc_ids) < k - 1:
                raise ValueError(f"need {k - 1} distractors, got {len(doc_ids)}")
            anchor = query.query_id if query is not None else gold
            position = rng_for(seed, anchor, "gold-position").randrange(k)
            ids = list(doc_ids[: k - 1])
            ids.insert(position, gold)
            target: TokenSeq = (COPY_ID,) + encode_docid(self.vocab, gold)
            mode = Mode.CONTEXT_DEPENDENT
        else:
            if len(doc_ids) < k:
                raise ValueError(f"need {k} doc_ids, got {len(doc_ids)}")
            ids = list(doc_ids[:k])
            position = None
            target = encode_docid(self.vocab, query.gold_doc_id) if query is not None else ()
            mode = Mode.QUERY_IRRELEVANT
        return InContextInstance(
            query=query,
            candidates=tuple((d, "") for d in ids),
            gold_position=position,
            mode=mode,
            supervision_target=target,
            seed=seed,
        )


def write_instances(instances: Sequence[InContextInstance], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for inst in instances:
            if inst.query is None:
                raise ValueError("cannot serialize an instance without a query")
            obj = {
                "qid": inst.query.query_id,
                "mode": inst.mode.value,
                "candidate_ids": list(inst.candidate_ids),
                "seed": inst.seed,
            }
            if inst.gold_position is not None:
                obj["gold_position"] = inst.gold_position
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def read_instances(
    path: str | Path,
    corpus: Corpus,
    vocab: Vocabulary,
    queries_by_id: dict[str, QueryRecord],
) -> list[InContextInstance]:
    builder = InstanceBuilder(corpus, vocab)
    out: list[InContextInstance] = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            query = queries_by_id.get(obj["qid"])
            if query is None:
                raise CorpusError(f"{path}:{lineno}: unknown query id {obj['qid']!r}")
            inst = builder.from_candidate_list(
                query,
                obj["candidate_ids"],
                Mode(obj["mode"]),
                seed=obj.get("seed", 0),
            )
            if inst.gold_position != obj.get("gold_position"):
                raise CorpusError(
                    f"{path}:{lineno}: recorded gold_position does not match the candidate list"
                )
            out.append(inst)
    return out
