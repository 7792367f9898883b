"""Preference-pair mining over decode results and the DPO objective.

Two failure modes produce pairs:

  * ranking_failure — the gold docid landed in the top-B beams but not at
    rank 1; chosen is the instance's supervision target, rejected is the
    top-ranked incorrect beam's token path.
  * routing_failure — a context-dependent instance whose top-1 took the
    parametric route and was wrong; chosen is [COPY] + gold path, rejected
    is that context-blind parametric path.

The loss is evaluated as a pure function of log-probabilities; no
parameters are updated anywhere in this package.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

from .decoder import ROUTE_PARAMETRIC, DecodeResult
from .prompt import InContextInstance, Mode
from .scorer import Scorer, sequence_logprob
from .tokenizer import COPY_ID, TokenSeq

DEFAULT_BETA = 0.1


class PairKind(str, Enum):
    RANKING_FAILURE = "ranking_failure"
    ROUTING_FAILURE = "routing_failure"


@dataclass(frozen=True)
class PreferencePair:
    prompt_ref: str
    chosen: TokenSeq
    rejected: TokenSeq
    kind: PairKind

    def __post_init__(self):
        if self.chosen == self.rejected:
            raise ValueError("chosen and rejected must differ")
        if self.kind is PairKind.ROUTING_FAILURE:
            if self.chosen[0] != COPY_ID:
                raise ValueError("routing_failure chosen must start with [COPY]")
            if self.rejected and self.rejected[0] == COPY_ID:
                raise ValueError("routing_failure rejected must not start with [COPY]")


def _softplus(x: float) -> float:
    # stable log(1 + e^x)
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def dpo_loss(
    lp_pol_c: float, lp_ref_c: float, lp_pol_r: float, lp_ref_r: float, beta: float
) -> float:
    """-log sigmoid(beta * ((lp_pol_c - lp_ref_c) - (lp_pol_r - lp_ref_r)))."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    margin = (lp_pol_c - lp_ref_c) - (lp_pol_r - lp_ref_r)
    return _softplus(-beta * margin)


def mine_pairs(
    results: Sequence[tuple[InContextInstance, DecodeResult]], top_b: int
) -> list[PreferencePair]:
    """At most one pair of each kind per instance; instances matching no
    rule yield nothing."""
    pairs: list[PreferencePair] = []
    for instance, result in results:
        if instance.query is None:
            continue
        gold = instance.query.gold_doc_id
        entries = result.entries[:top_b]
        gold_rank = next(
            (i for i, e in enumerate(entries) if e.doc_id == gold), None
        )
        if gold_rank is not None and gold_rank > 0:
            pairs.append(
                PreferencePair(
                    prompt_ref=instance.instance_id,
                    chosen=instance.supervision_target,
                    rejected=entries[0].token_path,
                    kind=PairKind.RANKING_FAILURE,
                )
            )
        top = result.entries[0]
        if (
            instance.mode is Mode.CONTEXT_DEPENDENT
            and top.route == ROUTE_PARAMETRIC
            and top.doc_id != gold
        ):
            pairs.append(
                PreferencePair(
                    prompt_ref=instance.instance_id,
                    chosen=instance.supervision_target,
                    rejected=top.token_path,
                    kind=PairKind.ROUTING_FAILURE,
                )
            )
    return pairs


def pair_margin(
    scorer_policy: Scorer,
    scorer_reference: Scorer,
    pair: PreferencePair,
    prompt: TokenSeq,
    beta: float = DEFAULT_BETA,
) -> float:
    """DPO loss of one pair: both responses are scored against the same
    in-context prompt under both policies."""
    return dpo_loss(
        sequence_logprob(scorer_policy, prompt, pair.chosen),
        sequence_logprob(scorer_reference, prompt, pair.chosen),
        sequence_logprob(scorer_policy, prompt, pair.rejected),
        sequence_logprob(scorer_reference, prompt, pair.rejected),
        beta,
    )


def write_pairs(pairs: Sequence[PreferencePair], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for pair in pairs:
            obj = {
                "qid": pair.prompt_ref,
                "kind": pair.kind.value,
                "chosen_tokens": list(pair.chosen),
                "rejected_tokens": list(pair.rejected),
            }
            fh.write(json.dumps(obj) + "\n")


def read_pairs(path: str | Path) -> list[PreferencePair]:
    out: list[PreferencePair] = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out.append(
                PreferencePair(
                    prompt_ref=obj["qid"],
                    chosen=tuple(obj["chosen_tokens"]),
                    rejected=tuple(obj["rejected_tokens"]),
                    kind=PairKind(obj["kind"]),
                )
            )
    return out
