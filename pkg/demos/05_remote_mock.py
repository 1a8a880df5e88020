"""Serve the critic and program writer over HTTP from an in-process mock.

The mock server answers the pipeline's own prompts using the deterministic
stages, so the full remote path (retries, logging, parsing) runs without any
real model. Run:  python3 demos/05_remote_mock.py
"""

import tempfile
from pathlib import Path

from cfrag.corpus import SynthConfig, synthesize_corpus, write_corpus
from cfrag.critic import lexical_critic
from cfrag.llmgate import LlmConfig, LlmRequest, LlmClient, MockLlmServer
from cfrag.pipeline import RunConfig, run_pipeline
from cfrag.qagen import GenConfig, generate_questions, split_dataset, write_dataset
from cfrag.reasoner import format_completion, oracle_reason
from cfrag.util import read_jsonl

docs, records = synthesize_corpus(SynthConfig(n_docs=15), seed=3)
items = split_dataset(generate_questions(records, GenConfig(), seed=3), 0.8, seed=3)
by_question = {i.question: i for i in items}


def respond(prompt: str) -> str:
    """Answer critic prompts with an ID list, reasoner prompts with a program."""
    sections = prompt.split("\n\n### ")
    if prompt.rstrip().endswith("### Output:"):  # critic
        question = sections[1].split(": ", 1)[1]
        references = [s.split(": ", 1)[1] for s in sections[2:-1]]
        verdict = lexical_critic(question, references)
        return f"[{verdict.selected[0]}]"
    question = sections[-3].split(": ", 1)[1]
    reference = sections[-2].split(": ", 1)[1]
    produced = oracle_reason(by_question[question], reference)
    if hasattr(produced, "program_source"):
        return format_completion(produced.program_source)
    return "cannot answer from this reference"


with tempfile.TemporaryDirectory() as tmp, MockLlmServer(responder=respond) as server:
    base = Path(tmp)
    write_corpus(base / "corpus", docs)
    write_dataset(base / "dataset.jsonl", items)

    # the raw client: one completion, hash-logged, no timestamps
    client = LlmClient(LlmConfig(url=server.url))
    reply = client.complete(LlmRequest(request_id="demo", prompt="[1] or [-1]? ### Output:"))
    print(f"one-off call -> status {reply.status!r}, completion {reply.completion!r}\n")

    result = run_pipeline(
        RunConfig(
            out_dir=str(base / "remote"),
            name="remote",
            seed=3,
            k=5,
            critic="remote",
            reasoner="remote",
            corpus_dir=str(base / "corpus"),
            dataset_path=str(base / "dataset.jsonl"),
            llm=LlmConfig(url=server.url),
        )
    )
    print(result.report.to_text())

    log = read_jsonl(base / "remote" / "llm_requests.jsonl")
    print(f"served {len(log)} calls, statuses {sorted({r['status'] for r in log})}, "
          f"hard failures {result.hard_failures}")
