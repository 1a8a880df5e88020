"""Reasoner stage: turn a question plus one reference into an answer program.

Two implementations produce the same output type.  The oracle reasoner
re-extracts structured fields from the reference text and renders the
program deterministically; it is the ceiling any learned reasoner is
measured against, and it only succeeds when the reference actually contains
the queried fields.  The remote reasoner speaks a fixed prompt format and
returns a program inside a triple-backtick fence.

Neither path ever executes model text directly; everything funnels through
the restricted-language parser.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .corpus import ExtractionRecord, extract_with_any_profile
from .qagen import QAItem, TargetNotFoundError, generate_gold_program
from .util import write_jsonl

REASONER_INSTRUCTION = (
    "You'll be provided with some questions and a reference. Based on the "
    "reference, generate the Python program to compute and answer the "
    "questions. The program is enclosed by triple backticks. The final "
    "answer in the program is of list type."
)

PROGRAM_RULES = """\
Program rules:
- One statement per line, each of the form name = expression.
- Expressions use numbers, previously assigned names, + - * /, parentheses.
- Dict literals map string keys to numbers, e.g. {"Display": 24.0}.
- List literals collect numbers or ["name", value] pairs.
- Allowed calls: max_by_value(dict), min_by_value(dict), top_n(dict, n).
- No imports, loops, conditionals or comments.
- The last assignment must set answer to a list."""

FAIL_NO_PROGRAM = "no_program"
FAIL_MISSING_TARGET = "missing_target"
FAIL_EXTRACTION = "extraction_failed"

_FENCE_RE = re.compile(r"```(?:[A-Za-z0-9_+#-]*\n)?(.*?)```", re.DOTALL)


class ReasonerError(Exception):
    pass


@dataclass(frozen=True)
class GenerationFailure:
    qa_id: str
    reason: str  # FAIL_NO_PROGRAM, FAIL_MISSING_TARGET or FAIL_EXTRACTION


@dataclass(frozen=True)
class ReasonerOutput:
    qa_id: str
    program_source: str
    provenance: str  # "oracle" or "remote"
    raw_completion: str | None = None


def build_reasoner_prompt(question: str, reference_text: str) -> str:
    parts = [
        REASONER_INSTRUCTION,
        "",
        PROGRAM_RULES,
        "",
        f"### Question: {question}",
        "",
        f"### Reference: {reference_text}",
        "",
        "### Program:",
    ]
    return "\n".join(parts)


def parse_reasoner_response(qa_id: str, text: str):
    """First fenced block in a completion, or a no-program failure."""
    match = _FENCE_RE.search(text)
    if match is None:
        return GenerationFailure(qa_id, FAIL_NO_PROGRAM)
    program = match.group(1).strip()
    if not program:
        return GenerationFailure(qa_id, FAIL_NO_PROGRAM)
    return ReasonerOutput(
        qa_id=qa_id, program_source=program, provenance="remote", raw_completion=text
    )


def format_completion(program: str) -> str:
    return f"```\n{program}\n```"


def oracle_reason(item: QAItem, reference_text: str):
    """Generate the program the reference supports, without gold access.

    Fields are re-extracted from the reference; the question contributes its
    type and target names only.  A reference that does not parse, or lacks a
    queried field, yields a GenerationFailure rather than a guess.
    """
    extracted = extract_with_any_profile(item.doc_id, reference_text)
    if not isinstance(extracted, ExtractionRecord):
        return GenerationFailure(item.qa_id, FAIL_EXTRACTION)
    try:
        program = generate_gold_program(extracted, item.qtype, item.targets)
    except TargetNotFoundError:
        return GenerationFailure(item.qa_id, FAIL_MISSING_TARGET)
    return ReasonerOutput(item.qa_id, program, provenance="oracle")


def export_reasoner_training(items: list, documents: list, path: str | Path) -> int:
    """Write prompt/completion reasoner pairs for the training split.

    The prompt pairs each question with its gold report text; the completion
    is the gold program in a plain fence.
    """
    train_items = [item for item in items if item.split == "train"]
    if not train_items:
        raise ReasonerError("no training-split items to export")
    text_of = {d.doc_id: d.raw_text for d in documents}
    missing = {i.doc_id for i in train_items} - set(text_of)
    if missing:
        raise ReasonerError(f"missing documents for export: {sorted(missing)[:3]}")
    rows = [
        {
            "qa_id": item.qa_id,
            "prompt": build_reasoner_prompt(item.question, text_of[item.doc_id]),
            "completion": format_completion(item.gold_program),
        }
        for item in train_items
    ]
    write_jsonl(path, rows)
    return len(rows)
