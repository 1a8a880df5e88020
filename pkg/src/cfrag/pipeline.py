"""End-to-end runs: retrieve, choose a reference, generate, execute, score.

A run is described by one RunConfig.  Data comes either from disk
(``corpus_dir`` plus ``dataset_path``) or from the built-in synthesizer;
synthesized inputs are persisted into the output directory so any run can be
re-examined.  All per-question processing is deterministic for a given
config, including the injected retrieval noise and the mock-served remote
stages, so artifact files are byte-reproducible.

Per-question problems (an unanswerable reference, a malformed program) never
abort a run; they become typed prediction failures and are scored.
Configuration problems always abort.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import SynthConfig, load_corpus, synthesize_corpus, write_corpus
from .critic import (
    CriticVerdict,
    build_critic_prompt,
    critic_accuracy,
    lexical_critic,
    parse_critic_response,
    resolve_verdict,
)
from .evalkit import (
    FAIL_EXEC,
    FAIL_GENERATION,
    FAIL_PARSE,
    FAIL_WRONG_DOC,
    Prediction,
    Report,
    build_report,
    prediction_to_json,
)
from .llmgate import LlmClient, LlmConfig, LlmRequest, log_row
from .progdsl import ExecError, ParseError, run_source
from .qagen import (
    GenConfig,
    generate_questions,
    load_dataset,
    split_dataset,
    write_dataset,
)
from .reasoner import (
    FAIL_NO_PROGRAM,
    GenerationFailure,
    ReasonerOutput,
    build_reasoner_prompt,
    oracle_reason,
    parse_reasoner_response,
)
from .retrieval import build_index, hit_rate, retrieve
from .util import derived_seed, write_jsonl

CRITICS = ("none", "lexical", "remote")
REASONERS = ("oracle", "remote")
RETRIEVERS = ("tfidf", "gold")

#: transport statuses that count as hard failures of a remote stage
_HARD_STATUSES = ("timeout", "rate_limited", "http_error")


class PipelineError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    out_dir: str
    name: str = "run"
    seed: int = 0
    k: int = 5
    retriever: str = "tfidf"
    critic: str = "none"
    reasoner: str = "oracle"
    demote_gold_prob: float = 0.0  # chance to push the gold doc off rank 1
    corpus_dir: str | None = None
    dataset_path: str | None = None
    synth: SynthConfig = field(default_factory=lambda: SynthConfig(n_docs=50))
    gen: GenConfig = field(default_factory=GenConfig)
    split_ratio: float = 0.8
    llm: LlmConfig | None = None

    def validate(self) -> None:
        if self.critic not in CRITICS:
            raise PipelineError(f"unknown critic {self.critic!r}, pick from {CRITICS}")
        if self.reasoner not in REASONERS:
            raise PipelineError(
                f"unknown reasoner {self.reasoner!r}, pick from {REASONERS}"
            )
        if self.retriever not in RETRIEVERS:
            raise PipelineError(
                f"unknown retriever {self.retriever!r}, pick from {RETRIEVERS}"
            )
        if self.k < 1:
            raise PipelineError(f"k must be positive, got {self.k}")
        if not 0.0 <= self.demote_gold_prob <= 1.0:
            raise PipelineError("demote_gold_prob must be within [0, 1]")
        if (self.corpus_dir is None) != (self.dataset_path is None):
            raise PipelineError("corpus_dir and dataset_path go together")
        if (self.critic == "remote" or self.reasoner == "remote") and self.llm is None:
            raise PipelineError("remote critic/reasoner need an llm configuration")

    def data_fingerprint(self) -> tuple:
        """What decides the questions being answered; ablations must agree."""
        return (
            self.corpus_dir,
            self.dataset_path,
            self.synth,
            self.gen,
            self.split_ratio,
            self.seed,
        )


@dataclass(frozen=True)
class RunResult:
    name: str
    out_dir: Path
    report: Report
    stage_stats: dict
    hard_failures: int


def _load_world(config: RunConfig, out_dir: Path):
    if config.corpus_dir is not None:
        docs = load_corpus(config.corpus_dir)
        items = load_dataset(config.dataset_path)
    else:
        docs, records = synthesize_corpus(config.synth, config.seed)
        items = split_dataset(
            generate_questions(records, config.gen, config.seed),
            config.split_ratio,
            config.seed,
        )
        write_corpus(out_dir / "corpus", docs)
        write_dataset(out_dir / "dataset.jsonl", items)
    test_items = sorted(
        (i for i in items if i.split == "test"), key=lambda i: i.qa_id
    )
    if not test_items:
        raise PipelineError("dataset has no test-split questions")
    return docs, test_items


def _retrieval_stage(config: RunConfig, docs, items):
    rows = []
    rankings = {}
    demotions = zero_queries = 0
    if config.retriever == "gold":
        for item in items:
            rankings[item.qa_id] = [(item.doc_id, 1.0)]
            rows.append(
                {
                    "qa_id": item.qa_id,
                    "gold_doc_id": item.doc_id,
                    "ranking": [[item.doc_id, 1.0]],
                    "zero_query": False,
                    "demoted": False,
                }
            )
        return rows, rankings, demotions, zero_queries

    index = build_index(docs)
    for item in items:
        ranking = retrieve(index, item.question, config.k)
        entries = list(ranking.entries)
        demoted = False
        if (
            config.demote_gold_prob > 0.0
            and len(entries) >= 2
            and entries[0][0] == item.doc_id
        ):
            rng = random.Random(derived_seed(config.seed, "demote", item.qa_id))
            if rng.random() < config.demote_gold_prob:
                entries[0], entries[1] = entries[1], entries[0]
                demoted = True
        demotions += demoted
        zero_queries += ranking.zero_query
        rankings[item.qa_id] = entries
        rows.append(
            {
                "qa_id": item.qa_id,
                "gold_doc_id": item.doc_id,
                "ranking": [[d, s] for d, s in entries],
                "zero_query": ranking.zero_query,
                "demoted": demoted,
            }
        )
    return rows, rankings, demotions, zero_queries


def _critic_stage(config: RunConfig, items, rankings, text_of, client):
    """Choose one reference per question; returns rows, choices, llm activity."""
    rows, chosen, llm_rows = [], {}, []
    hard_failures = 0
    verdicts = {}
    if config.critic == "remote":
        requests = [
            LlmRequest(
                request_id=f"critic:{item.qa_id}",
                prompt=build_critic_prompt(
                    item.question,
                    [text_of[d] for d, _ in rankings[item.qa_id]],
                ),
            )
            for item in items
        ]
        responses = client.complete_many(requests)
        for item, request, response in zip(items, requests, responses):
            llm_rows.append(log_row(request, response))
            if response.status in _HARD_STATUSES:
                hard_failures += 1
                verdicts[item.qa_id] = CriticVerdict((), parse_failed=True)
            else:
                verdicts[item.qa_id] = parse_critic_response(
                    response.completion, n_candidates=len(rankings[item.qa_id])
                )
    for item in items:
        ranked_ids = [d for d, _ in rankings[item.qa_id]]
        if config.critic == "none":
            verdict = CriticVerdict(selected=(1,))
        elif config.critic == "lexical":
            verdict = lexical_critic(item.question, [text_of[d] for d in ranked_ids])
        else:
            verdict = verdicts[item.qa_id]
        choice = resolve_verdict(verdict, ranked_ids)
        chosen[item.qa_id] = choice
        rows.append(
            {
                "qa_id": item.qa_id,
                "selected": list(verdict.selected),
                "none_applicable": verdict.none_applicable,
                "parse_failed": verdict.parse_failed,
                "chosen_doc_id": choice,
            }
        )
    return rows, chosen, llm_rows, hard_failures


def _reasoner_stage(config: RunConfig, items, chosen, text_of, client):
    rows, outputs, llm_rows = [], {}, []
    hard_failures = 0
    if config.reasoner == "oracle":
        for item in items:
            outputs[item.qa_id] = oracle_reason(item, text_of[chosen[item.qa_id]])
    else:
        requests = [
            LlmRequest(
                request_id=f"reason:{item.qa_id}",
                prompt=build_reasoner_prompt(
                    item.question, text_of[chosen[item.qa_id]]
                ),
            )
            for item in items
        ]
        responses = client.complete_many(requests)
        for item, request, response in zip(items, requests, responses):
            llm_rows.append(log_row(request, response))
            if response.status in _HARD_STATUSES:
                hard_failures += 1
                outputs[item.qa_id] = GenerationFailure(item.qa_id, FAIL_NO_PROGRAM)
            else:
                outputs[item.qa_id] = parse_reasoner_response(
                    item.qa_id, response.completion
                )
    for item in items:
        out = outputs[item.qa_id]
        if isinstance(out, ReasonerOutput):
            rows.append(
                {
                    "qa_id": item.qa_id,
                    "provenance": out.provenance,
                    "program": out.program_source,
                    "failure": None,
                }
            )
        else:
            rows.append(
                {
                    "qa_id": item.qa_id,
                    "provenance": config.reasoner,
                    "program": None,
                    "failure": out.reason,
                }
            )
    return rows, outputs, llm_rows, hard_failures


def _predict(item, reasoner_output) -> Prediction:
    if isinstance(reasoner_output, GenerationFailure):
        # A reference that lacks the queried fields means the wrong document
        # was chosen; a missing program is the generator's own failure.
        if reasoner_output.reason == FAIL_NO_PROGRAM:
            return Prediction(item.qa_id, [], failure=FAIL_GENERATION)
        return Prediction(item.qa_id, [], failure=FAIL_WRONG_DOC)
    try:
        answers = run_source(reasoner_output.program_source)
    except ParseError:
        return Prediction(item.qa_id, [], failure=FAIL_PARSE)
    except ExecError:
        return Prediction(item.qa_id, [], failure=FAIL_EXEC)
    return Prediction(item.qa_id, answers)


def run_pipeline(config: RunConfig) -> RunResult:
    config.validate()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    docs, items = _load_world(config, out_dir)
    text_of = {d.doc_id: d.raw_text for d in docs}
    missing_docs = {i.doc_id for i in items} - set(text_of)
    if missing_docs:
        raise PipelineError(f"dataset references unknown docs {sorted(missing_docs)[:3]}")

    client = LlmClient(config.llm) if config.llm is not None else None

    retrieval_rows, rankings, demotions, zero_queries = _retrieval_stage(
        config, docs, items
    )
    critic_rows, chosen, critic_llm_rows, critic_hard = _critic_stage(
        config, items, rankings, text_of, client
    )
    reasoner_rows, outputs, reasoner_llm_rows, reasoner_hard = _reasoner_stage(
        config, items, chosen, text_of, client
    )
    predictions = [_predict(item, outputs[item.qa_id]) for item in items]

    gold = {i.qa_id: i.doc_id for i in items}
    ranked_ids = {qa: [d for d, _ in entries] for qa, entries in rankings.items()}
    stage_stats = {}
    for k in sorted({kk for kk in (1, 3, 5, 10) if kk <= config.k} | {config.k}):
        stage_stats[f"hit@{k}"] = round(hit_rate(ranked_ids, gold, k), 4)
    stage_stats["reference_accuracy"] = round(critic_accuracy(chosen, gold), 4)
    stage_stats["demotions"] = demotions
    stage_stats["zero_queries"] = zero_queries

    report = build_report(items, predictions, stage_stats)
    hard_failures = critic_hard + reasoner_hard

    write_jsonl(out_dir / "retrieval.jsonl", retrieval_rows)
    write_jsonl(out_dir / "critic.jsonl", critic_rows)
    write_jsonl(out_dir / "reasoner.jsonl", reasoner_rows)
    write_jsonl(out_dir / "predictions.jsonl", map(prediction_to_json, predictions))
    if critic_llm_rows or reasoner_llm_rows:
        write_jsonl(out_dir / "llm_requests.jsonl", critic_llm_rows + reasoner_llm_rows)
    (out_dir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out_dir / "report.txt").write_text(report.to_text(), encoding="utf-8")

    return RunResult(
        name=config.name,
        out_dir=out_dir,
        report=report,
        stage_stats=stage_stats,
        hard_failures=hard_failures,
    )


# --- Ablations ----------------------------------------------------------------


@dataclass(frozen=True)
class AblationTable:
    rows: list  # of {"name", "em", "rmse", "mae"}

    def to_text(self) -> str:
        lines = [f"{'configuration':<24}{'RMSE':>10}{'MAE':>10}{'EM%':>9}"]
        for row in self.rows:
            lines.append(
                f"{row['name']:<24}{row['rmse']:>10.4f}{row['mae']:>10.4f}{row['em']:>9.2f}"
            )
        return "\n".join(lines) + "\n"


def run_ablation(configs: list) -> AblationTable:
    """Run several stage configurations over identical data, best-effort none.

    At least two configurations are required and all must share the same
    data settings; otherwise numbers would not be comparable.
    """
    if len(configs) < 2:
        raise PipelineError("an ablation needs at least two configurations")
    fingerprints = {c.data_fingerprint() for c in configs}
    if len(fingerprints) > 1:
        raise PipelineError("ablation configurations disagree on data settings")
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise PipelineError("ablation configurations need distinct names")
    rows = []
    for config in configs:
        result = run_pipeline(config)
        rows.append(
            {
                "name": config.name,
                "em": result.report.em,
                "rmse": result.report.rmse,
                "mae": result.report.mae,
            }
        )
    return AblationTable(rows=rows)
