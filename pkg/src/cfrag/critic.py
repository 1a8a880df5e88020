"""Critic stage: pick the reference that can answer the question.

Retrieval hands the critic a short candidate list.  Two implementations
share one verdict type: a deterministic lexical critic (token overlap with
the question, digit-bearing tokens weighted up because model numbers are
the strongest signal) and a remote-model critic speaking a fixed prompt
format.  The remote contract asks for a bracketed ID list like ``[2]``,
with ``[-1]`` reserved for "none of these apply".

The exporter writes prompt/completion pairs for finetuning.  Its candidate
pool is retrieved from an index over training-split documents only, so no
held-out text can leak into training data.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .retrieval import build_index, retrieve, tokenize
from .util import write_jsonl

CRITIC_INSTRUCTION = (
    "You will be provided with a question and several reference texts, each "
    "identified by a unique ID. Your goal is to analyze these references and "
    "identify which one contains the information needed to answer the "
    "question. If a reference text suggests that it provides the necessary "
    "information, respond with its corresponding ID. If multiple references "
    "apply, respond with a list of their IDs. If none of the references "
    "apply, respond with [-1]. Ensure the final output is a list."
)

NONE_APPLICABLE = -1

_ID_LIST_RE = re.compile(r"\[\s*-?\d+(?:\s*,\s*-?\d+)*\s*\]")


class CriticError(Exception):
    pass


@dataclass(frozen=True)
class CriticVerdict:
    selected: tuple  # 1-based candidate ids, best first; may be empty
    none_applicable: bool = False
    parse_failed: bool = False


def build_critic_prompt(question: str, candidate_texts: list) -> str:
    """Render the remote-critic prompt; candidates are numbered from 1."""
    if not candidate_texts:
        raise CriticError("critic needs at least one candidate")
    parts = [CRITIC_INSTRUCTION, "", f"### Question: {question}", ""]
    for i, text in enumerate(candidate_texts, start=1):
        parts.append(f"### Reference {i}: {text}")
        parts.append("")
    parts.append("### Output:")
    return "\n".join(parts)


def parse_critic_response(text: str, n_candidates: int | None = None) -> CriticVerdict:
    """Extract the first bracketed integer list from a model completion.

    ``[-1]`` alone means no reference applies.  Ids outside 1..n_candidates
    are dropped; when nothing valid survives, the verdict is a parse failure
    (callers then fall back to the retrieval order).
    """
    match = _ID_LIST_RE.search(text)
    if match is None:
        return CriticVerdict(selected=(), parse_failed=True)
    ids = [int(tok) for tok in re.findall(r"-?\d+", match.group())]
    if ids == [NONE_APPLICABLE]:
        return CriticVerdict(selected=(), none_applicable=True)
    valid = [
        i
        for i in ids
        if i >= 1 and (n_candidates is None or i <= n_candidates)
    ]
    if not valid:
        return CriticVerdict(selected=(), parse_failed=True)
    return CriticVerdict(selected=tuple(valid))


def lexical_critic(question: str, candidate_texts: list) -> CriticVerdict:
    """Deterministic baseline: most question-token overlap wins.

    Tokens containing a digit count triple; they are usually model numbers,
    which identify the right report far more reliably than common words.
    First candidate wins ties.
    """
    if not candidate_texts:
        raise CriticError("critic needs at least one candidate")
    question_tokens = set(tokenize(question))
    best_index, best_score = 1, -1.0
    for i, text in enumerate(candidate_texts, start=1):
        shared = question_tokens & set(tokenize(text))
        score = sum(3.0 if any(c.isdigit() for c in tok) else 1.0 for tok in shared)
        if score > best_score:
            best_index, best_score = i, score
    return CriticVerdict(selected=(best_index,))


def resolve_verdict(verdict: CriticVerdict, ranked_doc_ids: list) -> str:
    """Turn a verdict into a document choice, falling back to retrieval.

    Parse failures, "none applicable" and out-of-range picks all resolve to
    the retrieval rank-1 document.
    """
    if not ranked_doc_ids:
        raise CriticError("cannot resolve a verdict without candidates")
    if verdict.selected:
        first = verdict.selected[0]
        if 1 <= first <= len(ranked_doc_ids):
            return ranked_doc_ids[first - 1]
    return ranked_doc_ids[0]


def export_critic_training(
    items: list, documents: list, k: int, path: str | Path
) -> int:
    """Write prompt/completion critic pairs for the training split.

    Candidates come from a fresh index over training-split documents only.
    The completion is the gold reference id within the retrieved candidates,
    or ``[-1]`` when retrieval misses the gold document entirely.
    """
    train_items = [item for item in items if item.split == "train"]
    if not train_items:
        raise CriticError("no training-split items to export")
    train_doc_ids = {item.doc_id for item in train_items}
    train_docs = [d for d in documents if d.doc_id in train_doc_ids]
    missing = train_doc_ids - {d.doc_id for d in train_docs}
    if missing:
        raise CriticError(f"missing documents for export: {sorted(missing)[:3]}")
    index = build_index(train_docs)
    text_of = {d.doc_id: d.raw_text for d in train_docs}

    rows = []
    for item in train_items:
        ranked = retrieve(index, item.question, k).doc_ids()
        completion = f"[{NONE_APPLICABLE}]"
        if item.doc_id in ranked:
            completion = f"[{ranked.index(item.doc_id) + 1}]"
        rows.append(
            {
                "qa_id": item.qa_id,
                "prompt": build_critic_prompt(
                    item.question, [text_of[d] for d in ranked]
                ),
                "completion": completion,
            }
        )
    write_jsonl(path, rows)
    return len(rows)


def critic_accuracy(chosen: dict, gold: dict) -> float:
    """Share of questions where the critic-chosen document is the gold one."""
    if not chosen:
        raise CriticError("no critic choices to score")
    correct = 0
    for qa_id, doc_id in chosen.items():
        if qa_id not in gold:
            raise CriticError(f"no gold document for query {qa_id!r}")
        correct += doc_id == gold[qa_id]
    return correct / len(chosen)
