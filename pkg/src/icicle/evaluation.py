"""Evaluation protocol over a pluggable retriever.

Two systems are provided: the in-context generative retriever (mock scorer
plus router-aware constrained decoding) and an Okapi BM25 baseline. Both
are evaluated under the same query-specific search space: for an adaptation
query the space is the train corpus plus a seeded candidate set drawn from
the new side (in context for the generative system, indexed for BM25); for
a retention query it is the train corpus, with the generative system seeing
hard negatives of the gold document as candidates.

Retention queries are evaluated under two conditions: context-dependent
(gold among the candidates) and query-irrelevant (hard negatives only).
Headline hits_at_k per split are the context-dependent condition; the
query-irrelevant condition is reported in noise_hits_at_k. Calibration and
the copy-error taxonomy pool both conditions as independent samples;
routing_recall and hit_given_copy are over context-dependent instances
only, so the decomposition bound

    hits_at_1 <= routing_recall * hit_given_copy + (1 - routing_recall)

holds on every report by total probability.

Report files are JSON (sorted keys) and stay byte-identical across runs for
a fixed config; wall-clock latency fields are filled only when timing is
explicitly measured, token counts always.
"""

from __future__ import annotations

import csv
import json
import math
import time
from collections import Counter
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from .corpus import Corpus, CorpusSplit, QueryRecord
from .decoder import ROUTE_COPY, constrained_beam_search
from .prompt import (
    HardNegativeMiner,
    InContextInstance,
    InstanceBuilder,
    Mode,
    render_template,
)
from .rng import rng_for
from .scorer import MockModelConfig, MockRetrievalModel, ParametricMemory
from .tokenizer import Vocabulary, encode, tokenize_words
from .trie import build_context_trie, build_trie

BM25_K1 = 1.2
BM25_B = 0.75


# ---------------------------------------------------------------------------
# metric primitives
# ---------------------------------------------------------------------------


def hits_at_k(ranked_ids: Sequence[str], gold: str, k: int) -> bool:
    return gold in ranked_ids[:k]


def ece(confidences: Sequence[float], truths: Sequence[int], bins: int = 10) -> float:
    """Expected calibration error of the routing decision.

    Confidence is max(s, 1-s); the predicted mode is [s >= 0.5]; bins are
    equal-width on [0.5, 1], the last right-inclusive.
    """
    if len(confidences) == 0:
        raise ValueError("ece requires at least one sample")
    if len(confidences) != len(truths):
        raise ValueError("confidences and truths must have equal length")
    n = len(confidences)
    width = 0.5 / bins
    bin_count = [0] * bins
    bin_acc = [0] * bins
    bin_conf = [0.0] * bins
    for s, z in zip(confidences, truths):
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"confidence {s} outside [0, 1]")
        conf = max(s, 1.0 - s)
        zhat = 1 if s >= 0.5 else 0
        idx = min(int((conf - 0.5) / width), bins - 1)
        bin_count[idx] += 1
        bin_acc[idx] += int(zhat == z)
        bin_conf[idx] += conf
    total = 0.0
    for m in range(bins):
        if bin_count[m] == 0:
            continue
        acc = bin_acc[m] / bin_count[m]
        conf = bin_conf[m] / bin_count[m]
        total += (bin_count[m] / n) * abs(acc - conf)
    return total


# ---------------------------------------------------------------------------
# BM25 baseline
# ---------------------------------------------------------------------------


class BM25Index:
    """Okapi BM25 with an inverted index; ties break by canonical order."""

    def __init__(self, items: Sequence[tuple[str, list[str]]], k1: float = BM25_K1, b: float = BM25_B):
        self.doc_ids = tuple(doc_id for doc_id, _ in items)
        self.k1 = k1
        self.b = b
        n = len(items)
        self._lengths = [len(tokens) for _, tokens in items]
        self._avgdl = sum(self._lengths) / n if n else 0.0
        self._postings: dict[str, list[tuple[int, int]]] = {}
        for i, (_, tokens) in enumerate(items):
            for term, tf in Counter(tokens).items():
                self._postings.setdefault(term, []).append((i, tf))
        self._idf = {
            term: math.log(1 + (n - len(plist) + 0.5) / (len(plist) + 0.5))
            for term, plist in self._postings.items()
        }

    @classmethod
    def from_texts(cls, docs: Sequence[tuple[str, str]], **kwargs) -> "BM25Index":
        return cls([(d, tokenize_words(t)) for d, t in docs], **kwargs)

    def __len__(self) -> int:
        return len(self.doc_ids)

    def scores(self, query: str) -> list[float]:
        out = [0.0] * len(self.doc_ids)
        if not self.doc_ids:
            return out
        for term in tokenize_words(query):
            idf = self._idf.get(term)
            if idf is None:
                continue
            for i, tf in self._postings[term]:
                denom = tf + self.k1 * (1 - self.b + self.b * self._lengths[i] / self._avgdl)
                out[i] += idf * tf * (self.k1 + 1) / denom
        return out

    def retrieve(self, query: str, k: int) -> list[str]:
        scores = self.scores(query)
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
        return [self.doc_ids[i] for i in order[: min(k, len(scores))]]


def bm25_retrieve(index: BM25Index, query: str, k: int) -> list[str]:
    return index.retrieve(query, k)


# ---------------------------------------------------------------------------
# query-specific candidate sets
# ---------------------------------------------------------------------------


def build_query_candidate_set(
    query: QueryRecord, new_ids, n_candidates: int, seed: int
) -> list[str]:
    """Gold plus n-1 seeded-uniform distinct non-gold members of the new
    side, order shuffled. The distractor pool is a fixed permutation per
    (query, seed), so sets at smaller n nest inside sets at larger n."""
    if query.gold_doc_id not in new_ids:
        raise ValueError(f"gold {query.gold_doc_id!r} is not in the new-document side")
    if n_candidates > len(new_ids):
        raise ValueError(f"N={n_candidates} exceeds |new_ids|={len(new_ids)}")
    if n_candidates < 1:
        raise ValueError("N must be >= 1")
    pool = sorted(set(new_ids) - {query.gold_doc_id})
    rng = rng_for(seed, query.query_id, "candidate-set")
    permutation = rng.sample(pool, len(pool))
    ids = permutation[: n_candidates - 1] + [query.gold_doc_id]
    rng.shuffle(ids)
    return ids


# ---------------------------------------------------------------------------
# report structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorTaxonomy:
    emit_and_miss: float
    wrong_ctx_copy: float
    spurious_copy: float
    miss_rate: float


@dataclass(frozen=True)
class LatencyRecord:
    mean_input_tokens: float
    mean_ttft_seconds: float | None
    mean_total_seconds: float | None
    throughput_tokens_per_second: float | None


@dataclass(frozen=True)
class SplitMetrics:
    n_queries: int
    n_instances: int
    hits_at_1: float
    hits_at_10: float
    noise_hits_at_1: float | None
    noise_hits_at_10: float | None
    ece: float | None
    routing_recall: float | None
    hit_given_copy: float | None
    error_taxonomy: ErrorTaxonomy | None
    latency: LatencyRecord


@dataclass(frozen=True)
class ConfigEcho:
    N_shots: int
    B: int
    seed: int


@dataclass(frozen=True)
class EvalReport:
    system: str
    splits: dict  # {"train": SplitMetrics, "new": SplitMetrics}
    config: ConfigEcho
    notes: tuple[str, ...]

    def to_dict(self) -> dict:
        return asdict(self)


REPORT_NOTES = (
    "hits_at_k are the context-dependent condition; the query-irrelevant "
    "condition is reported in noise_hits_at_k",
    "ece and the error taxonomy pool context-dependent and query-irrelevant "
    "instances as independent samples",
    "latency wall-clock fields are measured proxies of the mock pipeline and "
    "are null unless timing was requested; they are not comparable to "
    "accelerator serving numbers",
)


@dataclass(frozen=True)
class QueryOutcome:
    query_id: str
    split: str  # "train" | "new"
    condition: str  # "ctx" | "noise"
    gold: str
    ranked_ids: tuple[str, ...]
    route: str | None
    confidence: float | None
    input_tokens: int
    ttft_seconds: float | None
    total_seconds: float | None
    output_tokens: int

    @property
    def z(self) -> int:
        return 1 if self.condition == "ctx" else 0

    @property
    def hit(self) -> bool:
        return bool(self.ranked_ids) and self.ranked_ids[0] == self.gold

    @property
    def rank_of_gold(self) -> int | None:
        try:
            return self.ranked_ids.index(self.gold) + 1
        except ValueError:
            return None


# ---------------------------------------------------------------------------
# systems under test
# ---------------------------------------------------------------------------


class IcicleSystem:
    """Decoder + mock scorer behind the evaluation interface."""

    kind = "icicle"

    def __init__(
        self,
        corpus: Corpus,
        split: CorpusSplit,
        vocab: Vocabulary,
        mock_config: MockModelConfig | None = None,
        negatives_k: int = 100,
    ):
        self.corpus = corpus
        self.split = split
        self.vocab = vocab
        self.train_ids = corpus.in_canonical_order(split.train_ids)
        self.global_trie = build_trie(vocab, self.train_ids)
        self.memory = ParametricMemory(corpus, split.train_ids)
        self.model = MockRetrievalModel(mock_config or MockModelConfig(), self.memory, vocab)
        self.builder = InstanceBuilder(corpus, vocab)
        self.miner = HardNegativeMiner(corpus, split.train_ids)
        self.negatives_k = negatives_k
        self._negatives: dict[str, list[str]] = {}
        self._global_docids = frozenset(self.global_trie.doc_ids())

    def negatives_for(self, gold: str, n_needed: int) -> list[str]:
        cached = self._negatives.get(gold)
        if cached is None or len(cached) < n_needed:
            k = min(max(self.negatives_k, n_needed), len(self.train_ids) - 1)
            cached = self.miner.mine(gold, k)
            self._negatives[gold] = cached
        return cached

    def build_instance(
        self, query: QueryRecord, split_kind: str, condition: str, n_shots: int, seed: int
    ) -> InContextInstance:
        if split_kind == "new":
            ids = build_query_candidate_set(query, self.split.new_ids, n_shots, seed)
            return self.builder.from_candidate_list(query, ids, Mode.CONTEXT_DEPENDENT, seed=seed)
        negatives = self.negatives_for(query.gold_doc_id, n_shots)
        if condition == "ctx":
            return self.builder.build_context_dependent(query, negatives, n_shots, seed)
        return self.builder.build_query_irrelevant(query, negatives, n_shots, seed)

    def decode_instance(self, instance: InContextInstance, beam_width: int):
        """Decode one built instance; returns (DecodeResult, prompt_tokens)."""
        prompt = encode(self.vocab, render_template(instance))
        context_trie = build_context_trie(self.vocab, instance.candidate_ids)
        bound = self.model.bind(instance)
        result = constrained_beam_search(
            bound, prompt, self.global_trie, context_trie, beam_width
        )
        return result, prompt

    def run(
        self,
        query: QueryRecord,
        split_kind: str,
        condition: str,
        n_shots: int,
        beam_width: int,
        seed: int,
    ) -> QueryOutcome:
        instance = self.build_instance(query, split_kind, condition, n_shots, seed)
        result, prompt = self.decode_instance(instance, beam_width)
        top = result.entries[0]
        return QueryOutcome(
            query_id=query.query_id,
            split=split_kind,
            condition=condition,
            gold=query.gold_doc_id,
            ranked_ids=result.doc_ids,
            route=top.route,
            confidence=result.copy_confidence,
            input_tokens=len(prompt),
            ttft_seconds=result.stats.ttft_seconds,
            total_seconds=result.stats.total_seconds,
            output_tokens=result.stats.output_tokens,
        )

    def search_space(self, query: QueryRecord, split_kind: str, n_shots: int, seed: int) -> frozenset[str]:
        """Docids reachable for this query: copy route (context candidates)
        union parametric route (global trie terminals)."""
        instance = self.build_instance(query, split_kind, "ctx", n_shots, seed)
        context_trie = build_context_trie(self.vocab, instance.candidate_ids)
        return frozenset(context_trie.doc_ids()) | self._global_docids


class BM25System:
    """Sparse baseline indexing the same per-query search space."""

    kind = "bm25"

    def __init__(self, corpus: Corpus, split: CorpusSplit):
        self.corpus = corpus
        self.split = split
        self.train_ids = corpus.in_canonical_order(split.train_ids)
        self._tokens = {
            doc.doc_id: tokenize_words(f"{doc.title} {doc.text}") for doc in corpus
        }
        self._train_index = BM25Index([(d, self._tokens[d]) for d in self.train_ids])

    def _index_for(self, query: QueryRecord, split_kind: str, n_shots: int, seed: int) -> BM25Index:
        if split_kind != "new":
            return self._train_index
        candidates = build_query_candidate_set(query, self.split.new_ids, n_shots, seed)
        ids = self.corpus.in_canonical_order(set(self.train_ids) | set(candidates))
        return BM25Index([(d, self._tokens[d]) for d in ids])

    def run(
        self,
        query: QueryRecord,
        split_kind: str,
        condition: str,
        n_shots: int,
        beam_width: int,
        seed: int,
    ) -> QueryOutcome:
        t0 = time.perf_counter()
        index = self._index_for(query, split_kind, n_shots, seed)
        ranked = index.retrieve(query.text, max(beam_width, 10))
        elapsed = time.perf_counter() - t0
        return QueryOutcome(
            query_id=query.query_id,
            split=split_kind,
            condition=condition,
            gold=query.gold_doc_id,
            ranked_ids=tuple(ranked),
            route=None,
            confidence=None,
            input_tokens=len(tokenize_words(query.text)),
            ttft_seconds=elapsed,
            total_seconds=elapsed,
            output_tokens=0,
        )

    def search_space(self, query: QueryRecord, split_kind: str, n_shots: int, seed: int) -> frozenset[str]:
        return frozenset(self._index_for(query, split_kind, n_shots, seed).doc_ids)


# ---------------------------------------------------------------------------
# evaluate / sweep / probe
# ---------------------------------------------------------------------------


def _mean(values) -> float | None:
    values = list(values)
    return sum(values) / len(values) if values else None


def _split_metrics(
    outcomes: list[QueryOutcome], ece_bins: int, measure_time: bool
) -> SplitMetrics:
    ctx = [o for o in outcomes if o.condition == "ctx"]
    noise = [o for o in outcomes if o.condition == "noise"]
    routed = all(o.route is not None for o in outcomes)

    routing_recall = _mean(float(o.route == ROUTE_COPY) for o in ctx) if routed else None
    copied_ctx = [o for o in ctx if o.route == ROUTE_COPY]
    hit_given_copy = _mean(float(o.hit) for o in copied_ctx) if routed else None

    taxonomy = None
    if routed:
        n = len(outcomes)
        emit_and_miss = sum(1 for o in outcomes if o.route == ROUTE_COPY and not o.hit) / n
        taxonomy = ErrorTaxonomy(
            emit_and_miss=emit_and_miss,
            wrong_ctx_copy=sum(
                1 for o in outcomes if o.z == 1 and o.route == ROUTE_COPY and not o.hit
            )
            / n,
            spurious_copy=sum(1 for o in outcomes if o.z == 0 and o.route == ROUTE_COPY) / n,
            miss_rate=emit_and_miss,
        )

    calibrated = all(o.confidence is not None for o in outcomes)
    split_ece = (
        ece([o.confidence for o in outcomes], [o.z for o in outcomes], ece_bins)
        if calibrated
        else None
    )

    total_seconds = sum(o.total_seconds for o in outcomes) if measure_time else None
    output_tokens = sum(o.output_tokens for o in outcomes)
    latency = LatencyRecord(
        mean_input_tokens=_mean(float(o.input_tokens) for o in outcomes),
        mean_ttft_seconds=_mean(o.ttft_seconds for o in outcomes) if measure_time else None,
        mean_total_seconds=_mean(o.total_seconds for o in outcomes) if measure_time else None,
        throughput_tokens_per_second=(
            output_tokens / total_seconds if measure_time and total_seconds else None
        ),
    )

    return SplitMetrics(
        n_queries=len({o.query_id for o in outcomes}),
        n_instances=len(outcomes),
        hits_at_1=_mean(float(o.hit) for o in ctx),
        hits_at_10=_mean(float(hits_at_k(o.ranked_ids, o.gold, 10)) for o in ctx),
        noise_hits_at_1=_mean(float(o.hit) for o in noise),
        noise_hits_at_10=_mean(float(hits_at_k(o.ranked_ids, o.gold, 10)) for o in noise),
        ece=split_ece,
        routing_recall=routing_recall,
        hit_given_copy=hit_given_copy,
        error_taxonomy=taxonomy,
        latency=latency,
    )


def evaluate(
    system,
    retention_queries: Sequence[QueryRecord],
    adaptation_queries: Sequence[QueryRecord],
    n_shots: int,
    beam_width: int,
    seed: int,
    ece_bins: int = 10,
    measure_time: bool = False,
    outcomes_out: list | None = None,
) -> EvalReport:
    """Run the full protocol and aggregate a report.

    Retention queries are evaluated under both the ctx and noise conditions;
    adaptation queries under ctx (their candidate set always contains gold).
    """
    if not retention_queries and not adaptation_queries:
        raise ValueError("evaluate needs at least one non-empty query list")
    outcomes: list[QueryOutcome] = []
    for query in retention_queries:
        outcomes.append(system.run(query, "train", "ctx", n_shots, beam_width, seed))
        outcomes.append(system.run(query, "train", "noise", n_shots, beam_width, seed))
    for query in adaptation_queries:
        outcomes.append(system.run(query, "new", "ctx", n_shots, beam_width, seed))
    if outcomes_out is not None:
        outcomes_out.extend(outcomes)

    splits = {}
    for split_kind in ("train", "new"):
        subset = [o for o in outcomes if o.split == split_kind]
        if subset:
            splits[split_kind] = _split_metrics(subset, ece_bins, measure_time)
    return EvalReport(
        system=system.kind,
        splits=splits,
        config=ConfigEcho(N_shots=n_shots, B=beam_width, seed=seed),
        notes=REPORT_NOTES,
    )


def shot_sweep(
    system,
    retention_queries: Sequence[QueryRecord],
    adaptation_queries: Sequence[QueryRecord],
    shots: Sequence[int],
    beam_width: int,
    seed: int,
    ece_bins: int = 10,
    measure_time: bool = False,
) -> list[EvalReport]:
    """One report per shot count; seeds are shared across counts so smaller
    candidate pools are prefixes of larger ones."""
    if list(shots) != sorted(shots):
        raise ValueError("shots must be sorted ascending")
    return [
        evaluate(
            system,
            retention_queries,
            adaptation_queries,
            n,
            beam_width,
            seed,
            ece_bins=ece_bins,
            measure_time=measure_time,
        )
        for n in shots
    ]


def latency_probe(
    system, queries: Sequence[QueryRecord], n_shots: int, beam_width: int = 10, seed: int = 0
) -> LatencyRecord:
    """Timing proxy over a query batch; informational only."""
    outcomes = []
    new_ids = system.split.new_ids
    for query in queries:
        split_kind = "new" if query.gold_doc_id in new_ids else "train"
        outcomes.append(system.run(query, split_kind, "ctx", n_shots, beam_width, seed))
    total = sum(o.total_seconds for o in outcomes)
    tokens = sum(o.output_tokens for o in outcomes)
    return LatencyRecord(
        mean_input_tokens=_mean(float(o.input_tokens) for o in outcomes),
        mean_ttft_seconds=_mean(o.ttft_seconds for o in outcomes),
        mean_total_seconds=_mean(o.total_seconds for o in outcomes),
        throughput_tokens_per_second=tokens / total if total > 0 else 0.0,
    )


# ---------------------------------------------------------------------------
# report and per-query output files
# ---------------------------------------------------------------------------


def report_to_json(
    report: EvalReport,
    dataset: str | None = None,
    timestamp: str | None = None,
    extra: dict | None = None,
) -> str:
    payload = report.to_dict()
    payload["dataset"] = dataset
    payload["timestamp"] = timestamp or datetime.now(timezone.utc).isoformat()
    if extra:
        payload.update(extra)
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_report(
    report: EvalReport,
    path: str | Path,
    dataset: str | None = None,
    extra: dict | None = None,
) -> None:
    Path(path).write_text(report_to_json(report, dataset, extra=extra), encoding="utf-8")


def write_outcomes_csv(outcomes: Sequence[QueryOutcome], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["qid", "split", "condition", "rank_of_gold", "route", "s"])
        for o in outcomes:
            writer.writerow(
                [
                    o.query_id,
                    o.split,
                    o.condition,
                    o.rank_of_gold if o.rank_of_gold is not None else "",
                    o.route or "",
                    f"{o.confidence:.10f}" if o.confidence is not None else "",
                ]
            )
