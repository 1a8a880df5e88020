"""Command line front end.

Exit codes: 0 on success, 1 for configuration or usage mistakes, 2 for bad
data (unreadable corpora, malformed datasets or programs).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .corpus import (
    CorpusError,
    Discard,
    SynthConfig,
    corpus_stats,
    extract_fields,
    get_profile,
    load_corpus,
    synthesize_corpus,
    write_corpus,
    write_records,
)
from .critic import CriticError, export_critic_training
from .evalkit import EvalError, build_report, prediction_from_json
from .llmgate import LlmConfig, LlmError
from .pipeline import PipelineError, RunConfig, run_ablation, run_pipeline
from .progdsl import DslError, answers_to_json, run_source
from .qagen import (
    GenConfig,
    QagenError,
    dataset_mix,
    generate_questions,
    load_dataset,
    split_dataset,
    validate_records,
    write_dataset,
    write_validation_csv,
)
from .reasoner import ReasonerError, export_reasoner_training
from .retrieval import RetrievalError, build_index, hit_rate, load_index, retrieve, save_index
from .util import read_jsonl, write_jsonl


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        raise UsageError(message)


# --- helpers -------------------------------------------------------------------


def _extract_all(corpus_dir: str):
    """Records and discards for every document in a corpus directory."""
    records, discards = [], []
    for doc in load_corpus(corpus_dir):
        outcome = extract_fields(doc, get_profile(doc.company_profile))
        if isinstance(outcome, Discard):
            discards.append(outcome)
        else:
            records.append(outcome)
    return records, discards


def _load_toml(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"bad TOML in {path}: {exc}") from None


def _sub_config(factory, table: dict, where: str):
    try:
        return factory(**table)
    except TypeError as exc:
        raise UsageError(f"bad [{where}] settings: {exc}") from None


def _run_config(data: dict, overrides: dict) -> RunConfig:
    run = dict(data.get("run", {}))
    run.update({k: v for k, v in overrides.items() if v is not None})
    table_keys = {
        "out": "out_dir",
        "corpus": "corpus_dir",
        "dataset": "dataset_path",
        "ratio": "split_ratio",
    }
    kwargs = {}
    for key, value in run.items():
        kwargs[table_keys.get(key, key)] = value
    if "synth" in data:
        kwargs["synth"] = _sub_config(SynthConfig, data["synth"], "synth")
    if "gen" in data:
        kwargs["gen"] = _sub_config(GenConfig, data["gen"], "gen")
    if "llm" in data:
        kwargs["llm"] = _sub_config(LlmConfig, data["llm"], "llm")
    if "out_dir" not in kwargs:
        raise UsageError("an output directory is required (--out or [run] out)")
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise UsageError(f"bad run settings: {exc}") from None


def _parse_k_list(text: str) -> list:
    try:
        ks = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"bad k list {text!r}; expected e.g. 1,3,5") from None
    if not ks or any(k < 1 for k in ks):
        raise UsageError(f"bad k list {text!r}; values must be positive")
    return ks


# --- subcommands ----------------------------------------------------------------


def cmd_synth(args) -> int:
    config = SynthConfig(
        n_docs=args.n_docs,
        lifecycle_fraction=args.lifecycle_fraction,
        shuffle_prob=args.shuffle_prob,
        spurious_rate=args.spurious_rate,
        split_rate=args.split_rate,
    )
    docs, _ = synthesize_corpus(config, args.seed)
    write_corpus(args.out, docs)
    stats = corpus_stats(docs)
    print(
        f"wrote {stats['n_docs']} documents to {args.out} "
        f"(avg {stats['avg_words']:.0f} words, {stats['avg_pages']:.2f} pages)"
    )
    return 0


def cmd_ingest(args) -> int:
    records, discards = _extract_all(args.corpus)
    write_records(args.out, records, discards)
    print(f"extracted {len(records)} records, {len(discards)} discards -> {args.out}")
    return 0


def cmd_validate(args) -> int:
    records, _ = _extract_all(args.corpus)
    report = validate_records(records)
    write_validation_csv(args.out, report)
    failed = [row.doc_id for row in report.rows if not row.overall_ok]
    print(f"validated {len(report.rows)} records: {len(failed)} failing -> {args.out}")
    if failed:
        print("failing: " + ", ".join(failed[:10]))
    return 0


def cmd_genqa(args) -> int:
    records, _ = _extract_all(args.corpus)
    if not records:
        raise QagenError("no extractable records in corpus")
    config = GenConfig(
        word_match_per_doc=args.word_match,
        calculation_per_doc=args.calculation,
        max_min_per_doc=args.max_min,
        top_n_per_doc=args.top_n,
    )
    items = split_dataset(
        generate_questions(records, config, args.seed), args.ratio, args.seed
    )
    write_dataset(args.out, items)
    n_train = sum(1 for i in items if i.split == "train")
    print(f"wrote {len(items)} questions ({n_train} train) -> {args.out}")
    for family, (count, pct) in dataset_mix(items).items():
        print(f"  {family:<12} {count:>6}  {pct:5.1f}%")
    return 0


def cmd_index_build(args) -> int:
    index = build_index(load_corpus(args.corpus))
    save_index(args.out, index)
    print(f"indexed {len(index.doc_ids)} documents, vocabulary {len(index.vocabulary)} -> {args.out}")
    return 0


def cmd_retrieve(args) -> int:
    index = load_index(args.index)
    items = [i for i in load_dataset(args.dataset) if args.split in ("all", i.split)]
    if not items:
        raise QagenError(f"no questions in split {args.split!r}")
    rows = []
    for item in sorted(items, key=lambda i: i.qa_id):
        ranking = retrieve(index, item.question, args.k)
        rows.append(
            {
                "qa_id": item.qa_id,
                "gold_doc_id": item.doc_id,
                "ranking": [[d, s] for d, s in ranking.entries],
                "zero_query": ranking.zero_query,
            }
        )
    write_jsonl(args.out, rows)
    print(f"retrieved top-{args.k} for {len(rows)} questions -> {args.out}")
    return 0


def cmd_hitrate(args) -> int:
    ks = _parse_k_list(args.k)
    rows = read_jsonl(args.retrieval)
    if not rows:
        raise RetrievalError(f"no retrieval rows in {args.retrieval}")
    rankings = {r["qa_id"]: [d for d, _ in r["ranking"]] for r in rows}
    gold = {r["qa_id"]: r["gold_doc_id"] for r in rows}
    for k in ks:
        print(f"hit@{k} {hit_rate(rankings, gold, k):.4f}")
    return 0


def cmd_run(args) -> int:
    data = _load_toml(args.config) if args.config else {}
    overrides = {
        "out": args.out,
        "name": args.name,
        "seed": args.seed,
        "k": args.k,
        "retriever": args.retriever,
        "critic": args.critic,
        "reasoner": args.reasoner,
        "demote_gold_prob": args.demote_gold_prob,
        "corpus": args.corpus,
        "dataset": args.dataset,
        "ratio": args.ratio,
    }
    config = _run_config(data, overrides)
    if args.llm_env and config.llm is None:
        config = dataclasses.replace(config, llm=LlmConfig.from_env())
    result = run_pipeline(config)
    print(result.report.to_text())
    print(f"artifacts in {result.out_dir}")
    if result.hard_failures:
        print(f"warning: {result.hard_failures} remote calls failed hard")
    return 0


def cmd_ablate(args) -> int:
    data = _load_toml(args.config)
    runs = data.get("runs")
    if not isinstance(runs, list) or not runs:
        raise UsageError("ablation config needs a [[runs]] array")
    base_out = Path(data.get("out", args.out or "ablation"))
    shared = {k: v for k, v in data.items() if k not in ("runs", "out")}
    configs = []
    for entry in runs:
        name = entry.get("name")
        if not name:
            raise UsageError("every [[runs]] entry needs a name")
        merged = {"run": {**shared.get("run", {}), **entry}}
        for section in ("synth", "gen", "llm"):
            if section in shared:
                merged[section] = shared[section]
        merged["run"]["out"] = str(base_out / name)
        configs.append(_run_config(merged, {}))
    table = run_ablation(configs)
    print(table.to_text())
    return 0


def cmd_export_train(args) -> int:
    docs = load_corpus(args.corpus)
    items = load_dataset(args.dataset)
    if args.kind == "critic":
        n = export_critic_training(items, docs, args.k, args.out)
    else:
        n = export_reasoner_training(items, docs, args.out)
    print(f"wrote {n} {args.kind} training pairs -> {args.out}")
    return 0


def cmd_prog_run(args) -> int:
    source = sys.stdin.read() if args.file == "-" else Path(args.file).read_text("utf-8")
    answers = run_source(source)
    print(json.dumps(answers_to_json(answers)))
    return 0


def cmd_eval(args) -> int:
    items = [i for i in load_dataset(args.dataset) if args.split in ("all", i.split)]
    predictions = [prediction_from_json(row) for row in read_jsonl(args.predictions)]
    report = build_report(items, predictions)
    print(report.to_text())
    if args.json_out:
        Path(args.json_out).write_text(report.to_json() + "\n", encoding="utf-8")
        print(f"wrote {args.json_out}")
    return 0


# --- parser ---------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="cfrag", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic report corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-docs", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lifecycle-fraction", type=float, default=0.6)
    p.add_argument("--shuffle-prob", type=float, default=0.5)
    p.add_argument("--spurious-rate", type=float, default=0.3)
    p.add_argument("--split-rate", type=float, default=0.2)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="extract structured records from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("validate", help="screen extracted records")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", default="validation.csv")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("genqa", help="generate questions with gold programs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--word-match", type=int, default=6)
    p.add_argument("--calculation", type=int, default=4)
    p.add_argument("--max-min", type=int, default=2)
    p.add_argument("--top-n", type=int, default=1)
    p.set_defaults(func=cmd_genqa)

    p = sub.add_parser("index", help="retrieval index operations")
    index_sub = p.add_subparsers(dest="index_command", required=True)
    pb = index_sub.add_parser("build", help="build and save a tf-idf index")
    pb.add_argument("--corpus", required=True)
    pb.add_argument("--out", required=True)
    pb.set_defaults(func=cmd_index_build)

    p = sub.add_parser("retrieve", help="rank documents for dataset questions")
    p.add_argument("--index", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--split", choices=("all", "train", "test"), default="test")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("hitrate", help="hit@k over saved retrieval results")
    p.add_argument("--retrieval", required=True)
    p.add_argument("--k", default="1,3,5,10")
    p.set_defaults(func=cmd_hitrate)

    p = sub.add_parser("run", help="run the question answering pipeline")
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--out")
    p.add_argument("--name")
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--retriever", choices=("tfidf", "gold"))
    p.add_argument("--critic", choices=("none", "lexical", "remote"))
    p.add_argument("--reasoner", choices=("oracle", "remote"))
    p.add_argument("--demote-gold-prob", type=float)
    p.add_argument("--corpus")
    p.add_argument("--dataset")
    p.add_argument("--ratio", type=float)
    p.add_argument(
        "--llm-env",
        action="store_true",
        help="read CFRAG_LLM_URL/CFRAG_LLM_KEY/CFRAG_LLM_MODEL",
    )
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="run and tabulate stage ablations")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("export-train", help="write finetuning pairs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--kind", choices=("critic", "reasoner"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=cmd_export_train)

    p = sub.add_parser("prog", help="answer program operations")
    prog_sub = p.add_subparsers(dest="prog_command", required=True)
    pr = prog_sub.add_parser("run", help="execute a program file ('-' for stdin)")
    pr.add_argument("file")
    pr.set_defaults(func=cmd_prog_run)

    p = sub.add_parser("eval", help="score saved predictions against a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--split", choices=("all", "train", "test"), default="test")
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_eval)

    return parser


_CONFIG_ERRORS = (UsageError, PipelineError, LlmError)
_DATA_ERRORS = (
    CorpusError,
    QagenError,
    RetrievalError,
    CriticError,
    ReasonerError,
    EvalError,
    DslError,
    OSError,
    json.JSONDecodeError,
)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"cfrag: {exc}", file=sys.stderr)
        return 1
    except _DATA_ERRORS as exc:
        print(f"cfrag: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
