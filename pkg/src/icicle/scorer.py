"""Autoregressive token-scoring contract and its deterministic realizations.

The ``Scorer`` contract stands in for a trained retrieval LM: given a prompt
and the tokens generated so far, produce a full-vocabulary log-probability
vector. Two concrete scorers live here:

  * ``MockRetrievalModel`` — a structured mock whose routing confidence and
    candidate preferences are analytic functions of lexical similarity, so
    every downstream metric has a closed form to check against.
  * ``UniformScorer`` — the trivial baseline used by analytic tests.

Lexical similarity is tf-idf cosine with smoothed idf:

    idf(t) = ln((1 + N) / (1 + df(t))) + 1

fit over a document collection; terms unseen at fit time get df = 0. The
mock's routing confidence at step 0 is

    s = logistic(route_bias + 5.0 * (max candidate sim - best memory sim))

and mass after the routing decision flows down candidate/memory docid paths
in proportion to softmax(similarity / copy_temperature) leaf weights, so a
complete path's probability telescopes to its leaf's normalized weight.
Every emitted distribution puts a 1e-12 floor on off-path tokens before
renormalizing, so constrained decoding never meets zero mass.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix

from .corpus import Corpus, QueryRecord
from .rng import rng_for
from .tokenizer import (
    COPY_ID,
    TokenSeq,
    Vocabulary,
    encode_docid,
    tokenize_words,
)

PROB_FLOOR = 1e-12
ROUTING_SCALE = 5.0
NOISE_SIGMA = 0.35


class Scorer(ABC):
    """Behavioral contract: a proper next-token distribution over the full
    vocabulary, deterministic for fixed inputs."""

    @property
    @abstractmethod
    def vocab_size(self) -> int: ...

    @abstractmethod
    def next_logprobs(self, prompt: TokenSeq, generated: TokenSeq) -> np.ndarray: ...


def sequence_nll(scorer: Scorer, prompt: TokenSeq, target: TokenSeq) -> float:
    """Next-token cross entropy of *target* under the scorer, summed over
    steps. Additive over concatenation of targets."""
    if not target:
        raise ValueError("target must be non-empty")
    nll = 0.0
    for t, token in enumerate(target):
        nll -= float(scorer.next_logprobs(prompt, tuple(target[:t]))[token])
    return nll


def sequence_logprob(scorer: Scorer, prompt: TokenSeq, target: TokenSeq) -> float:
    return -sequence_nll(scorer, prompt, target)


class UniformScorer(Scorer):
    def __init__(self, vocab_size: int):
        self._v = vocab_size
        self._vec = np.full(vocab_size, -math.log(vocab_size))

    @property
    def vocab_size(self) -> int:
        return self._v

    def next_logprobs(self, prompt: TokenSeq, generated: TokenSeq) -> np.ndarray:
        return self._vec.copy()


class ShiftedScorer(Scorer):
    """View of another scorer with part of the generation folded into the
    conditioning, i.e. next_logprobs(p, g) = inner(p, prefix + g)."""

    def __init__(self, inner: Scorer, prefix: TokenSeq):
        self._inner = inner
        self._prefix = tuple(prefix)

    @property
    def vocab_size(self) -> int:
        return self._inner.vocab_size

    def next_logprobs(self, prompt: TokenSeq, generated: TokenSeq) -> np.ndarray:
        return self._inner.next_logprobs(prompt, self._prefix + tuple(generated))


# ---------------------------------------------------------------------------
# tf-idf similarity
# ---------------------------------------------------------------------------


class TfidfModel:
    """Dictionary-vector tf-idf with smoothed idf; the readable reference
    implementation (the sparse fast path in ParametricMemory must agree)."""

    def __init__(self, texts: Iterable[str]):
        df: Counter[str] = Counter()
        n = 0
        for text in texts:
            n += 1
            df.update(set(tokenize_words(text)))
        self.n_docs = n
        self._idf = {t: math.log((1 + n) / (1 + c)) + 1.0 for t, c in df.items()}
        self._default_idf = math.log(1 + n) + 1.0

    def idf(self, term: str) -> float:
        return self._idf.get(term, self._default_idf)

    def vector(self, text: str) -> dict[str, float]:
        counts = Counter(tokenize_words(text))
        return {t: c * self.idf(t) for t, c in counts.items()}

    @staticmethod
    def _norm(vec: dict[str, float]) -> float:
        return math.sqrt(sum(v * v for v in vec.values()))

    def similarity(self, a: str, b: str) -> float:
        va, vb = self.vector(a), self.vector(b)
        na, nb = self._norm(va), self._norm(vb)
        if na == 0.0 or nb == 0.0:
            return 0.0
        if len(vb) < len(va):
            va, vb = vb, va
        dot = sum(w * vb.get(t, 0.0) for t, w in va.items())
        return dot / (na * nb)


def lexical_similarity(a: str, b: str) -> float:
    """Pairwise tf-idf cosine, idf fit on the two strings themselves."""
    return TfidfModel([a, b]).similarity(a, b)


class TfidfVectors:
    """Row matrix of l2-normalized tf-idf vectors for fast one-vs-many
    cosine; agrees with TfidfModel.similarity term for term."""

    def __init__(self, model: TfidfModel, texts: Sequence[str]):
        self.model = model
        self._col = {t: i for i, t in enumerate(sorted(model._idf))}
        rows, cols, data = [], [], []
        norms = np.zeros(len(texts))
        for r, text in enumerate(texts):
            vec = model.vector(text)
            norm = TfidfModel._norm(vec)
            norms[r] = norm
            if norm == 0.0:
                continue
            for t, w in vec.items():
                if t in self._col:
                    rows.append(r)
                    cols.append(self._col[t])
                    data.append(w / norm)
        self._mat = csr_matrix(
            (data, (rows, cols)), shape=(len(texts), len(self._col))
        )

    def similarities(self, text: str) -> np.ndarray:
        vec = self.model.vector(text)
        norm = TfidfModel._norm(vec)
        if norm == 0.0:
            return np.zeros(self._mat.shape[0])
        dense = np.zeros(self._mat.shape[1])
        for t, w in vec.items():
            col = self._col.get(t)
            if col is not None:
                dense[col] = w / norm
        return self._mat @ dense


# ---------------------------------------------------------------------------
# parametric memory
# ---------------------------------------------------------------------------


class ParametricMemory:
    """Emulated parametric recall: tf-idf profiles of the training documents
    (title + body), queried by cosine. Built from train docs only and never
    mutated by queries."""

    def __init__(self, corpus: Corpus, train_ids):
        self.doc_ids: tuple[str, ...] = tuple(corpus.in_canonical_order(train_ids))
        texts = [f"{corpus.get(d).title} {corpus.get(d).text}" for d in self.doc_ids]
        self.model = TfidfModel(texts)
        self._vectors = TfidfVectors(self.model, texts)
        self._texts = dict(zip(self.doc_ids, texts))

    @property
    def covers(self) -> frozenset[str]:
        return frozenset(self.doc_ids)

    def profile(self, doc_id: str) -> dict[str, float]:
        return self.model.vector(self._texts[doc_id])

    def similarities(self, text: str) -> np.ndarray:
        return self._vectors.similarities(text)

    def best(self, text: str) -> tuple[str | None, float]:
        sims = self.similarities(text)
        if sims.size == 0:
            return None, 0.0
        i = int(np.argmax(sims))
        return self.doc_ids[i], float(sims[i])


# ---------------------------------------------------------------------------
# mock retrieval model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MockModelConfig:
    copy_temperature: float = 0.1
    route_bias: float = 0.0
    noise_seed: int | None = None

    def __post_init__(self):
        if self.copy_temperature <= 0:
            raise ValueError("copy_temperature must be positive")


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def _softmax(x: np.ndarray, temperature: float) -> np.ndarray:
    z = x / temperature
    z = z - z.max()
    w = np.exp(z)
    return w / w.sum()


class MockRetrievalModel:
    """Factory of per-instance scorers.

    The parametric side shares one prefix-tree index over the train docid
    paths; a query only reweights the leaves, computed with a single
    bincount. The copy side is rebuilt per instance (candidate sets are
    small). ``bind`` returns a Scorer for one in-context instance.
    """

    def __init__(
        self,
        config: MockModelConfig,
        memory: ParametricMemory,
        vocab: Vocabulary,
    ):
        self.config = config
        self.memory = memory
        self.vocab = vocab
        paths = [encode_docid(vocab, d) for d in memory.doc_ids]
        prefix_index: dict[TokenSeq, int] = {(): 0}
        children: list[dict[int, int]] = [{}]
        rows: list[int] = []
        cols: list[int] = []
        for d, path in enumerate(paths):
            node = 0
            rows.append(node)
            cols.append(d)
            for i, token in enumerate(path):
                child = children[node].get(token)
                if child is None:
                    child = len(children)
                    children[node][token] = child
                    children.append({})
                    prefix_index[path[: i + 1]] = child
                node = child
                rows.append(node)
                cols.append(d)
        self._par_children = children
        self._par_prefix_index = prefix_index
        self._par_rows = np.asarray(rows, dtype=np.int64)
        self._par_cols = np.asarray(cols, dtype=np.int64)
        self._n_nodes = len(children)
        self._text_vec_cache: dict[str, tuple[dict[str, float], float]] = {}

    def _text_vector(self, text: str) -> tuple[dict[str, float], float]:
        cached = self._text_vec_cache.get(text)
        if cached is None:
            vec = self.memory.model.vector(text)
            cached = (vec, TfidfModel._norm(vec))
            self._text_vec_cache[text] = cached
        return cached

    def _cosine(self, a: tuple[dict[str, float], float], b: tuple[dict[str, float], float]) -> float:
        va, na = a
        vb, nb = b
        if na == 0.0 or nb == 0.0:
            return 0.0
        if len(vb) < len(va):
            va, vb = vb, va
        return sum(w * vb.get(t, 0.0) for t, w in va.items()) / (na * nb)

    def candidate_similarity(self, query: QueryRecord, doc_id: str, display_text: str) -> float:
        """Query-candidate similarity as the mock sees it: display text when
        present, the title itself for title-only contexts, plus optional
        seeded gaussian noise."""
        text = display_text if display_text else doc_id
        sim = self._cosine(self._text_vector(query.text), self._text_vector(text))
        if self.config.noise_seed is not None:
            sim += rng_for(
                self.config.noise_seed, query.query_id, doc_id, "sim-noise"
            ).gauss(0.0, NOISE_SIGMA)
        return sim

    def bind(self, instance) -> "BoundMockScorer":
        """Build the scorer for one in-context instance."""
        query = instance.query
        if query is None:
            raise ValueError("cannot bind the mock to an instance without a query")
        cand_sims = np.array(
            [
                self.candidate_similarity(query, doc_id, display)
                for doc_id, display in instance.candidates
            ]
        )
        mem_sims = self.memory.similarities(query.text)
        best_mem = float(mem_sims.max()) if mem_sims.size else 0.0
        max_cand = float(cand_sims.max()) if cand_sims.size else 0.0
        confidence = _sigmoid(
            self.config.route_bias + ROUTING_SCALE * (max_cand - best_mem)
        )
        cand_agg: dict[TokenSeq, dict[int, float]] = {}
        if cand_sims.size:
            cand_weights = _softmax(cand_sims, self.config.copy_temperature)
            for (doc_id, _), w in zip(instance.candidates, cand_weights):
                path = encode_docid(self.vocab, doc_id)
                for k in range(len(path)):
                    step = cand_agg.setdefault(path[:k], {})
                    step[path[k]] = step.get(path[k], 0.0) + float(w)
        if mem_sims.size:
            par_weights = _softmax(mem_sims, self.config.copy_temperature)
            subtree = np.bincount(
                self._par_rows,
                weights=par_weights[self._par_cols],
                minlength=self._n_nodes,
            )
        else:
            subtree = np.zeros(self._n_nodes)
        return BoundMockScorer(self, confidence, cand_agg, subtree)


class BoundMockScorer(Scorer):
    def __init__(
        self,
        model: MockRetrievalModel,
        confidence: float,
        cand_agg: dict[TokenSeq, dict[int, float]],
        par_subtree: np.ndarray,
    ):
        self._model = model
        self.copy_confidence = confidence
        self._cand_agg = cand_agg
        self._subtree = par_subtree

    @property
    def vocab_size(self) -> int:
        return self._model.vocab.size

    def next_logprobs(self, prompt: TokenSeq, generated: TokenSeq) -> np.ndarray:
        generated = tuple(generated)
        vec = np.full(self.vocab_size, PROB_FLOOR)
        model = self._model
        if not generated:
            vec[COPY_ID] += self.copy_confidence
            root_mass = self._subtree[0] if self._subtree.size else 0.0
            if root_mass > 0:
                for token, child in model._par_children[0].items():
                    vec[token] += (1.0 - self.copy_confidence) * (
                        self._subtree[child] / root_mass
                    )
        elif generated[0] == COPY_ID:
            step = self._cand_agg.get(generated[1:])
            if step:
                total = sum(step.values())
                for token, w in step.items():
                    vec[token] += w / total
        else:
            node = model._par_prefix_index.get(generated)
            if node is not None and self._subtree[node] > 0:
                for token, child in model._par_children[node].items():
                    vec[token] += self._subtree[child] / self._subtree[node]
        vec /= vec.sum()
        return np.log(vec)
