"""Command-line pipeline orchestrator.

Subcommands: ingest, split, mine-negatives, build-instances, evaluate,
sweep-shots, mine-dpo, report. Every subcommand reads a single TOML/JSON
config (``--config``) with flag overrides on top, and reads/writes the
documented file formats inside the workdir (``--workdir``, then the config,
then $ICICLE_WORKDIR, then ./icicle_work).

Exit codes: 0 success, 2 usage error, 3 malformed config, 4 missing input
file, 1 anything else. Failures emit one machine-parsable JSON line on
stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .corpus import (
    Corpus,
    CorpusError,
    ingest_corpus,
    ingest_queries,
    load_split,
    save_corpus,
    save_queries,
    save_split,
    split_corpus,
    split_queries,
)
from .decoder import DecodeError
from .dpo import mine_pairs, write_pairs
from .evaluation import (
    BM25System,
    IcicleSystem,
    evaluate,
    shot_sweep,
    write_outcomes_csv,
    write_report,
)
from .prompt import HardNegativeMiner, InstanceBuilder, write_instances
from .scorer import MockModelConfig
from .tokenizer import build_vocab, load_vocab, save_vocab
from .trie import TrieCollisionError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4

DEFAULT_WORKDIR = "icicle_work"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("usage", message)
        raise SystemExit(EXIT_USAGE)


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": {"kind": kind, "message": message}}), file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON run config")
    common.add_argument("--corpus", help="corpus JSONL path")
    common.add_argument("--queries", help="query JSONL path")
    common.add_argument("--workdir", help="working directory for artifacts")
    common.add_argument("--seed", type=int, help="override split/instances/eval seeds")
    common.add_argument("--shots", help="comma-separated shot counts, e.g. 3,10,100")
    common.add_argument("--beam", type=int, help="beam width")
    common.add_argument("--ratio", type=float, help="new-document split ratio")
    common.add_argument("--k", type=int, help="hard negatives per document")
    common.add_argument("--out", help="output directory (default: workdir)")

    parser = _Parser(prog="icicle", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("ingest", "validate corpus/queries, build the vocabulary"),
        ("split", "partition the corpus into train/new sides"),
        ("mine-negatives", "rank hard negatives for retention golds"),
        ("build-instances", "construct the in-context instance batch"),
        ("evaluate", "run the evaluation protocol, write reports"),
        ("sweep-shots", "evaluate across a grid of shot counts"),
        ("mine-dpo", "decode instances and mine preference pairs"),
    ]:
        sub.add_parser(name, parents=[common], help=helptext)
    rep = sub.add_parser(
        "report", parents=[common], help="pretty-print report JSON files"
    )
    rep.add_argument("inputs", nargs="+", help="report JSON files")
    return parser


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.corpus:
        cfg.paths.corpus = args.corpus
    if args.queries:
        cfg.paths.queries = args.queries
    if args.workdir:
        cfg.paths.workdir = args.workdir
    if args.ratio is not None:
        cfg.split.ratio = args.ratio
    if args.k is not None:
        cfg.negatives.k = args.k
    if args.beam is not None:
        cfg.decode.beam_width = args.beam
    if args.shots is not None:
        try:
            cfg.eval.shots = [int(s) for s in args.shots.split(",") if s]
        except ValueError:
            raise ConfigError(f"cannot parse --shots {args.shots!r}") from None
    if args.seed is not None:
        cfg.split.seed = args.seed
        cfg.instances.seed = args.seed
        cfg.eval.seed = args.seed
    cfg.validate()
    return cfg


def _resolve_workdir(cfg: RunConfig) -> Path:
    workdir = cfg.paths.workdir or os.environ.get("ICICLE_WORKDIR") or DEFAULT_WORKDIR
    path = Path(workdir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{path} (run `icicle {hint}` first?)")
    return path


def _load_corpus(cfg: RunConfig, workdir: Path) -> Corpus:
    staged = workdir / "corpus.jsonl"
    if staged.exists():
        return ingest_corpus(staged)
    if cfg.paths.corpus:
        return ingest_corpus(cfg.paths.corpus)
    raise FileNotFoundError(f"{staged} (run `icicle ingest` or pass --corpus)")


def _load_queries(cfg: RunConfig, workdir: Path, corpus: Corpus):
    staged = workdir / "queries.jsonl"
    if staged.exists():
        return ingest_queries(staged, corpus)
    if cfg.paths.queries:
        return ingest_queries(cfg.paths.queries, corpus)
    raise FileNotFoundError(f"{staged} (run `icicle ingest` or pass --queries)")


def _out_dir(args, workdir: Path) -> Path:
    out = Path(args.out) if args.out else workdir
    out.mkdir(parents=True, exist_ok=True)
    return out


def _mock_config(cfg: RunConfig) -> MockModelConfig:
    return MockModelConfig(
        copy_temperature=cfg.mock.copy_temperature,
        route_bias=cfg.mock.route_bias,
        noise_seed=cfg.mock.noise_seed,
    )


def _build_system(name: str, cfg: RunConfig, corpus, split, vocab):
    if name == "icicle":
        return IcicleSystem(
            corpus, split, vocab, _mock_config(cfg), negatives_k=cfg.negatives.k
        )
    return BM25System(corpus, split)


def cmd_ingest(args, cfg: RunConfig, workdir: Path) -> int:
    if not cfg.paths.corpus:
        raise ConfigError("ingest requires paths.corpus (or --corpus)")
    corpus = ingest_corpus(_require(Path(cfg.paths.corpus), "ingest --corpus <file>"))
    queries = []
    if cfg.paths.queries:
        queries = ingest_queries(_require(Path(cfg.paths.queries), "ingest --queries <file>"), corpus)
    vocab = build_vocab(corpus, queries)
    save_corpus(corpus, workdir / "corpus.jsonl")
    if queries:
        save_queries(queries, workdir / "queries.jsonl")
    save_vocab(vocab, workdir / "vocab.json")
    print(
        f"ingested {len(corpus)} documents, {len(queries)} queries; "
        f"vocab size {vocab.size} -> {workdir}"
    )
    return EXIT_OK


def cmd_split(args, cfg: RunConfig, workdir: Path) -> int:
    corpus = _load_corpus(cfg, workdir)
    split = split_corpus(corpus, cfg.split.ratio, cfg.split.seed)
    save_split(split, corpus, workdir / "split.json")
    print(
        f"split {len(corpus)} documents: {len(split.train_ids)} train / "
        f"{len(split.new_ids)} new (ratio={cfg.split.ratio}, seed={cfg.split.seed})"
    )
    return EXIT_OK


def _load_state(cfg: RunConfig, workdir: Path):
    corpus = _load_corpus(cfg, workdir)
    queries = _load_queries(cfg, workdir, corpus)
    split = load_split(_require(workdir / "split.json", "split"), corpus)
    vocab_path = workdir / "vocab.json"
    vocab = load_vocab(vocab_path) if vocab_path.exists() else build_vocab(corpus, queries)
    return corpus, queries, split, vocab


def cmd_mine_negatives(args, cfg: RunConfig, workdir: Path) -> int:
    corpus, queries, split, _ = _load_state(cfg, workdir)
    retention, _ = split_queries(queries, split)
    golds = corpus.in_canonical_order({q.gold_doc_id for q in retention})
    miner = HardNegativeMiner(corpus, split.train_ids)
    out = workdir / "negatives.jsonl"
    with out.open("w", encoding="utf-8") as fh:
        for gold in golds:
            fh.write(
                json.dumps(
                    {"doc_id": gold, "negatives": miner.mine(gold, cfg.negatives.k)},
                    ensure_ascii=False,
                )
                + "\n"
            )
    print(f"mined top-{cfg.negatives.k} negatives for {len(golds)} documents -> {out}")
    return EXIT_OK


def cmd_build_instances(args, cfg: RunConfig, workdir: Path) -> int:
    corpus, queries, split, vocab = _load_state(cfg, workdir)
    retention, adaptation = split_queries(queries, split)
    builder = InstanceBuilder(corpus, vocab)
    system = IcicleSystem(corpus, split, vocab, _mock_config(cfg), negatives_k=cfg.negatives.k)
    n, seed = cfg.instances.n_shots, cfg.instances.seed
    instances = []
    for query in retention:
        negatives = system.negatives_for(query.gold_doc_id, n)
        instances.append(builder.build_context_dependent(query, negatives, n, seed))
        instances.append(builder.build_query_irrelevant(query, negatives, n, seed))
    for query in adaptation:
        instances.append(system.build_instance(query, "new", "ctx", n, seed))
    out = workdir / "instances.jsonl"
    write_instances(instances, out)
    print(f"built {len(instances)} instances at n_shots={n} -> {out}")
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig, workdir: Path) -> int:
    corpus, queries, split, vocab = _load_state(cfg, workdir)
    retention, adaptation = split_queries(queries, split)
    out_dir = _out_dir(args, workdir)
    dataset = Path(cfg.paths.corpus).name if cfg.paths.corpus else "corpus.jsonl"
    for name in cfg.eval.systems:
        system = _build_system(name, cfg, corpus, split, vocab)
        outcomes: list = []
        report = evaluate(
            system,
            retention,
            adaptation,
            cfg.eval.n_candidates,
            cfg.decode.beam_width,
            cfg.eval.seed,
            ece_bins=cfg.eval.ece_bins,
            outcomes_out=outcomes,
        )
        report_path = out_dir / f"report_{name}.json"
        write_report(report, report_path, dataset=dataset, extra={"run_config": cfg.to_dict()})
        write_outcomes_csv(outcomes, out_dir / f"per_query_{name}.csv")
        line = f"{name}:"
        for split_kind, metrics in report.splits.items():
            line += f" {split_kind} h@1={metrics.hits_at_1:.3f} h@10={metrics.hits_at_10:.3f}"
        print(f"{line} -> {report_path}")
    return EXIT_OK


def cmd_sweep_shots(args, cfg: RunConfig, workdir: Path) -> int:
    corpus, queries, split, vocab = _load_state(cfg, workdir)
    retention, adaptation = split_queries(queries, split)
    out_dir = _out_dir(args, workdir)
    dataset = Path(cfg.paths.corpus).name if cfg.paths.corpus else "corpus.jsonl"
    name = cfg.eval.systems[0]
    system = _build_system(name, cfg, corpus, split, vocab)
    reports = shot_sweep(
        system,
        retention,
        adaptation,
        cfg.eval.shots,
        cfg.decode.beam_width,
        cfg.eval.seed,
        ece_bins=cfg.eval.ece_bins,
    )
    for n, report in zip(cfg.eval.shots, reports):
        path = out_dir / f"report_{name}_N{n}.json"
        write_report(report, path, dataset=dataset, extra={"run_config": cfg.to_dict()})
        print(f"N={n}: wrote {path}")
    return EXIT_OK


def cmd_mine_dpo(args, cfg: RunConfig, workdir: Path) -> int:
    corpus, queries, split, vocab = _load_state(cfg, workdir)
    retention, adaptation = split_queries(queries, split)
    system = IcicleSystem(corpus, split, vocab, _mock_config(cfg), negatives_k=cfg.negatives.k)
    n, seed, beam = cfg.instances.n_shots, cfg.instances.seed, cfg.decode.beam_width
    decoded = []
    for query, split_kind, condition in (
        [(q, "train", "ctx") for q in retention]
        + [(q, "train", "noise") for q in retention]
        + [(q, "new", "ctx") for q in adaptation]
    ):
        instance = system.build_instance(query, split_kind, condition, n, seed)
        result, _ = system.decode_instance(instance, beam)
        decoded.append((instance, result))
    pairs = mine_pairs(decoded, beam)
    out = workdir / "pairs.jsonl"
    write_pairs(pairs, out)
    kinds = {}
    for pair in pairs:
        kinds[pair.kind.value] = kinds.get(pair.kind.value, 0) + 1
    print(f"mined {len(pairs)} pairs {kinds} from {len(decoded)} instances -> {out}")
    return EXIT_OK


def cmd_report(args, cfg: RunConfig, workdir: Path) -> int:
    for raw in args.inputs:
        path = _require(Path(raw), "evaluate")
        payload = json.loads(path.read_text(encoding="utf-8"))
        cfg_echo = payload.get("config", {})
        print(f"== {path} [{payload.get('system')}] N={cfg_echo.get('N_shots')} "
              f"B={cfg_echo.get('B')} seed={cfg_echo.get('seed')}")
        header = f"{'split':<7}{'h@1':>8}{'h@10':>8}{'noise@1':>9}{'ece':>8}{'r_recall':>10}{'hit|copy':>10}"
        print(header)
        for split_kind in ("train", "new"):
            m = payload.get("splits", {}).get(split_kind)
            if m is None:
                continue

            def fmt(value, width=8):
                return f"{value:>{width}.3f}" if isinstance(value, (int, float)) else " " * (width - 1) + "-"

            print(
                f"{split_kind:<7}"
                + fmt(m["hits_at_1"])
                + fmt(m["hits_at_10"])
                + fmt(m["noise_hits_at_1"], 9)
                + fmt(m["ece"])
                + fmt(m["routing_recall"], 10)
                + fmt(m["hit_given_copy"], 10)
            )
    return EXIT_OK


_COMMANDS = {
    "ingest": cmd_ingest,
    "split": cmd_split,
    "mine-negatives": cmd_mine_negatives,
    "build-instances": cmd_build_instances,
    "evaluate": cmd_evaluate,
    "sweep-shots": cmd_sweep_shots,
    "mine-dpo": cmd_mine_dpo,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        workdir = _resolve_workdir(cfg)
        return _COMMANDS[args.command](args, cfg, workdir)
    except FileNotFoundError as exc:
        _emit_error("missing-input", str(exc))
        return EXIT_MISSING
    except ConfigError as exc:
        _emit_error("config", str(exc))
        return EXIT_CONFIG
    except (CorpusError, TrieCollisionError, DecodeError, ValueError) as exc:
        _emit_error("invalid", str(exc))
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
