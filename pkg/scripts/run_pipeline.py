#!/usr/bin/env python3
"""End-to-end demo: synthesize data, run every pipeline stage, print reports.

Usage:
    python scripts/run_pipeline.py --workdir /tmp/icicle-demo
"""

import argparse
import sys
import tempfile
from pathlib import Path

from icicle.cli import main as icicle
from icicle.corpus import save_corpus, save_queries
from icicle.synthetic import make_standard_corpus, make_standard_queries

CONFIG_TEMPLATE = """
[paths]
corpus = "{corpus}"
queries = "{queries}"
workdir = "{workdir}"

[split]
ratio = 0.1
seed = 7

[negatives]
k = 100

[instances]
n_shots = 3

[eval]
n_candidates = 10
shots = [3, 10, 20]
seed = 0

[mock]
copy_temperature = 0.1
route_bias = 0.0
"""


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default=None)
    parser.add_argument("--docs", type=int, default=1000)
    parser.add_argument("--queries", type=int, default=300)
    args = parser.parse_args()

    workdir = Path(args.workdir or tempfile.mkdtemp(prefix="icicle-demo-"))
    workdir.mkdir(parents=True, exist_ok=True)
    corpus = make_standard_corpus(args.docs, seed=13)
    queries = make_standard_queries(corpus, args.queries, seed=14)
    corpus_path = workdir / "corpus.src.jsonl"
    queries_path = workdir / "queries.src.jsonl"
    save_corpus(corpus, corpus_path)
    save_queries(queries, queries_path)
    config_path = workdir / "run.toml"
    config_path.write_text(
        CONFIG_TEMPLATE.format(corpus=corpus_path, queries=queries_path, workdir=workdir),
        encoding="utf-8",
    )

    stages = [
        "ingest",
        "split",
        "mine-negatives",
        "build-instances",
        "evaluate",
        "sweep-shots",
        "mine-dpo",
    ]
    for stage in stages:
        print(f"--- {stage}")
        code = icicle([stage, "--config", str(config_path)])
        if code != 0:
            print(f"stage {stage} failed with exit code {code}", file=sys.stderr)
            return code
    print("--- report")
    return icicle(
        ["report", str(workdir / "report_icicle.json"), str(workdir / "report_bm25.json")]
    )


if __name__ == "__main__":
    raise SystemExit(main())
