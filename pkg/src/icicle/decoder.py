"""Context-aware constrained beam search.

Step 0 is the routing decision: the scorer's distribution is masked to
{[COPY]} union the global trie's start tokens and renormalized over that
set. A hypothesis that opened with [COPY] is thereafter constrained by the
per-query context trie (on the tokens after [COPY]); every other hypothesis
is constrained by the global trie. A hypothesis completes when it consumes
[EOS] on its trie; completed hypotheses are held aside and do not occupy
beam slots. Search stops once ``beam_width`` completions exist or all beams
are dead.

Scores are sums of masked-renormalized log-probabilities (no length
normalization). Ties break by token-path lexicographic order. The reported
``copy_confidence`` is the unmasked step-0 probability of [COPY]
renormalized over the allowed step-0 set, i.e. one minus the mass on
parametric starts.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .tokenizer import COPY_ID, EOS_ID, TokenSeq
from .trie import DocidTrie

ROUTE_COPY = "copy"
ROUTE_PARAMETRIC = "parametric"


class DecodeError(RuntimeError):
    """Beam search exhausted every hypothesis without a single completion."""


@dataclass(frozen=True)
class DecodeEntry:
    route: str
    doc_id: str
    logscore: float
    token_path: TokenSeq


@dataclass(frozen=True)
class DecodeStats:
    steps: int
    ttft_seconds: float
    total_seconds: float
    output_tokens: int


@dataclass(frozen=True)
class DecodeResult:
    entries: tuple[DecodeEntry, ...]
    copy_confidence: float
    stats: DecodeStats

    @property
    def doc_ids(self) -> tuple[str, ...]:
        return tuple(e.doc_id for e in self.entries)

    @property
    def top(self) -> DecodeEntry:
        return self.entries[0]


@dataclass(frozen=True)
class _Hyp:
    tokens: TokenSeq
    score: float
    route: str


def _suffix(hyp_tokens: TokenSeq, route: str) -> TokenSeq:
    return hyp_tokens[1:] if route == ROUTE_COPY else hyp_tokens


def constrained_beam_search(
    scorer,
    prompt: TokenSeq,
    global_trie: DocidTrie,
    context_trie: DocidTrie,
    beam_width: int = 10,
    trace: Callable[[dict], None] | None = None,
) -> DecodeResult:
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    t_start = time.perf_counter()

    raw0 = np.exp(scorer.next_logprobs(prompt, ()))
    allowed0 = {COPY_ID} | global_trie.allowed_tokens(())
    z0 = float(sum(raw0[t] for t in allowed0))
    if z0 <= 0.0:
        raise DecodeError("scorer puts zero mass on the allowed routing set")
    copy_confidence = float(raw0[COPY_ID]) / z0

    completed: list[DecodeEntry] = []
    active: list[_Hyp] = []
    for token in sorted(allowed0):
        score = math.log(float(raw0[token]) / z0)
        route = ROUTE_COPY if token == COPY_ID else ROUTE_PARAMETRIC
        path = (token,)
        if token == EOS_ID:
            doc = global_trie.doc_at(path)
            if doc is not None:
                completed.append(DecodeEntry(route, doc, score, path))
            continue
        active.append(_Hyp(path, score, route))
    active.sort(key=lambda h: (-h.score, h.tokens))
    active = active[:beam_width]
    ttft = time.perf_counter() - t_start
    steps = 1
    if trace is not None:
        trace(
            {
                "step": 0,
                "allowed_size": len(allowed0),
                "expansions": [
                    {"path": list(h.tokens), "score": h.score, "route": h.route}
                    for h in active
                ],
                "completed": len(completed),
            }
        )

    while active and len(completed) < beam_width:
        children: list[_Hyp] = []
        allowed_sizes: list[int] = []
        for hyp in active:
            trie = context_trie if hyp.route == ROUTE_COPY else global_trie
            consumed = _suffix(hyp.tokens, hyp.route)
            allowed = trie.allowed_tokens(consumed)
            allowed_sizes.append(len(allowed))
            if not allowed:
                continue
            raw = np.exp(scorer.next_logprobs(prompt, hyp.tokens))
            z = float(sum(raw[t] for t in allowed))
            if z <= 0.0:
                continue
            for token in sorted(allowed):
                score = hyp.score + math.log(float(raw[token]) / z)
                path = hyp.tokens + (token,)
                if token == EOS_ID:
                    doc = trie.doc_at(consumed + (token,))
                    if doc is not None:
                        completed.append(DecodeEntry(hyp.route, doc, score, path))
                else:
                    children.append(_Hyp(path, score, hyp.route))
        children.sort(key=lambda h: (-h.score, h.tokens))
        active = children[:beam_width]
        steps += 1
        if trace is not None:
            trace(
                {
                    "step": steps - 1,
                    "allowed_size": allowed_sizes,
                    "expansions": [
                        {"path": list(h.tokens), "score": h.score, "route": h.route}
                        for h in active
                    ],
                    "completed": len(completed),
                }
            )

    if not completed:
        raise DecodeError("no hypothesis reached a terminal docid")

    completed.sort(key=lambda e: (-e.logscore, e.token_path))
    seen: set[str] = set()
    entries: list[DecodeEntry] = []
    for entry in completed:
        if entry.doc_id in seen:
            continue
        seen.add(entry.doc_id)
        entries.append(entry)
        if len(entries) == beam_width:
            break

    total = time.perf_counter() - t_start
    stats = DecodeStats(
        steps=steps,
        ttft_seconds=ttft,
        total_seconds=total,
        output_tokens=sum(len(e.token_path) for e in entries),
    )
    return DecodeResult(entries=tuple(entries), copy_confidence=copy_confidence, stats=stats)


class DecodeTrace:
    """JSONL decode trace sink, one line per beam step."""

    def __init__(self, path: str | Path):
        self._fh = Path(path).open("w", encoding="utf-8")

    def __call__(self, record: dict) -> None:
        self._fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "DecodeTrace":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
