#!/usr/bin/env python3
"""Generate a seeded synthetic corpus + query file pair.

Usage:
    python scripts/make_synthetic_dataset.py --out data/ --docs 1000 --queries 300
    python scripts/make_synthetic_dataset.py --out data-oracle/ --style oracle
"""

import argparse
from pathlib import Path

from icicle.corpus import save_corpus, save_queries
from icicle.synthetic import (
    make_oracle_corpus,
    make_oracle_queries,
    make_standard_corpus,
    make_standard_queries,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--docs", type=int, default=1000)
    parser.add_argument("--queries", type=int, default=300)
    parser.add_argument("--seed", type=int, default=13)
    parser.add_argument("--style", choices=["standard", "oracle"], default="standard")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.style == "standard":
        corpus = make_standard_corpus(args.docs, seed=args.seed)
        queries = make_standard_queries(corpus, args.queries, seed=args.seed + 1)
    else:
        corpus = make_oracle_corpus(args.docs)
        queries = make_oracle_queries(corpus, corpus.doc_ids, args.queries)
    save_corpus(corpus, out / "corpus.jsonl")
    save_queries(queries, out / "queries.jsonl")
    print(f"wrote {len(corpus)} docs and {len(queries)} queries to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
