"""Scoring: exact match and numeric error, with per-type breakdowns.

Exact match is positional and order-sensitive: predicted answers must line
up one-to-one with gold answers, numbers agreeing after rounding to two
decimals and labeled pairs agreeing on both the (case-insensitive) label
and the rounded value.

RMSE and MAE pool per-position numeric errors across all questions.  A gold
position with no prediction counts as if zero had been predicted (the error
is the gold magnitude), so empty or failed predictions are penalized rather
than skipped; surplus predicted positions are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .progdsl import Labeled, answers_from_json, answers_to_json
from .qagen import FAMILIES, FAMILY_OF
from .util import dumps_canonical

FAIL_PARSE = "parse_failure"
FAIL_EXEC = "exec_failure"
FAIL_GENERATION = "generation_failure"
FAIL_WRONG_DOC = "wrong_doc"
FAILURE_KINDS = (FAIL_PARSE, FAIL_EXEC, FAIL_GENERATION, FAIL_WRONG_DOC)


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class Prediction:
    qa_id: str
    answers: list
    failure: str | None = None  # a FAILURE_KINDS member when answers are empty

    def __post_init__(self):
        if self.failure is not None:
            if self.failure not in FAILURE_KINDS:
                raise EvalError(f"{self.qa_id}: unknown failure {self.failure!r}")
            if self.answers:
                raise EvalError(f"{self.qa_id}: failed predictions carry no answers")


def prediction_to_json(pred: Prediction) -> dict:
    return {
        "qa_id": pred.qa_id,
        "answers": answers_to_json(pred.answers),
        "failure": pred.failure,
    }


def prediction_from_json(row: dict) -> Prediction:
    return Prediction(
        qa_id=row["qa_id"],
        answers=answers_from_json(row["answers"]),
        failure=row["failure"],
    )


def _rounded(x: float) -> float:
    return round(x, 2)


def _item_matches(pred, gold) -> bool:
    pred_pair = isinstance(pred, Labeled)
    gold_pair = isinstance(gold, Labeled)
    if pred_pair != gold_pair:
        return False
    if pred_pair:
        return (
            pred.name.strip().casefold() == gold.name.strip().casefold()
            and _rounded(pred.value) == _rounded(gold.value)
        )
    return _rounded(pred) == _rounded(gold)


def exact_match(predicted: list, gold: list) -> bool:
    if len(predicted) != len(gold):
        return False
    return all(_item_matches(p, g) for p, g in zip(predicted, gold))


def _numeric(value) -> float:
    return value.value if isinstance(value, Labeled) else value


def rmse_mae(pairs: list) -> tuple:
    """Pooled (rmse, mae) over [(predicted_answers, gold_answers), ...]."""
    errors = []
    for predicted, gold in pairs:
        for i, gold_item in enumerate(gold):
            gold_value = _numeric(gold_item)
            if i < len(predicted):
                errors.append(_numeric(predicted[i]) - gold_value)
            else:
                errors.append(gold_value)  # missing prediction, treated as 0
    if not errors:
        return 0.0, 0.0
    rmse = math.sqrt(sum(e * e for e in errors) / len(errors))
    mae = sum(abs(e) for e in errors) / len(errors)
    return rmse, mae


@dataclass(frozen=True)
class Report:
    n: int
    em: float  # percent, rounded to 2 decimals
    rmse: float
    mae: float
    failures: dict  # failure kind -> count
    by_family: list  # of {"label", "n", "em", "rmse", "mae"}
    by_arity: list  # same shape, label = number of gold answers
    stage_stats: dict  # passthrough, e.g. hit@k and critic accuracy

    def to_json(self) -> str:
        return dumps_canonical(
            {
                "n": self.n,
                "em": self.em,
                "rmse": self.rmse,
                "mae": self.mae,
                "failures": self.failures,
                "by_family": self.by_family,
                "by_arity": self.by_arity,
                "stage_stats": self.stage_stats,
            }
        )

    def to_text(self) -> str:
        lines = [
            f"questions: {self.n}",
            f"exact match: {self.em:.2f}%   rmse: {self.rmse:.4f}   mae: {self.mae:.4f}",
            "failures: "
            + "  ".join(f"{kind}={self.failures[kind]}" for kind in FAILURE_KINDS),
            "",
            f"{'group':<28}{'n':>6}{'em%':>10}{'rmse':>12}{'mae':>12}",
        ]
        for row in self.by_family + self.by_arity:
            lines.append(
                f"{str(row['label']):<28}{row['n']:>6}{row['em']:>10.2f}"
                f"{row['rmse']:>12.4f}{row['mae']:>12.4f}"
            )
        if self.stage_stats:
            lines.append("")
            lines.append(
                "stage stats: "
                + "  ".join(f"{k}={v}" for k, v in sorted(self.stage_stats.items()))
            )
        return "\n".join(lines) + "\n"


def _group_row(label, items, by_id) -> dict:
    matches = [exact_match(by_id[i.qa_id].answers, i.gold_answers) for i in items]
    rmse, mae = rmse_mae([(by_id[i.qa_id].answers, i.gold_answers) for i in items])
    return {
        "label": label,
        "n": len(items),
        "em": round(100.0 * sum(matches) / len(matches), 2),
        "rmse": rmse,
        "mae": mae,
    }


def build_report(items: list, predictions: list, stage_stats: dict | None = None) -> Report:
    """Score predictions against the gold answers of their questions.

    Every question needs exactly one prediction; missing or surplus
    predictions are reported as errors with the offending ids.
    """
    if not items:
        raise EvalError("no questions to score")
    by_id = {p.qa_id: p for p in predictions}
    if len(by_id) != len(predictions):
        raise EvalError("duplicate prediction qa_ids")
    wanted = {i.qa_id for i in items}
    missing = sorted(wanted - set(by_id))
    if missing:
        raise EvalError(f"missing predictions for {missing[:5]} ({len(missing)} total)")
    surplus = sorted(set(by_id) - wanted)
    if surplus:
        raise EvalError(f"predictions for unknown questions {surplus[:5]}")

    overall = _group_row("all", items, by_id)
    failures = {kind: 0 for kind in FAILURE_KINDS}
    for pred in predictions:
        if pred.failure is not None:
            failures[pred.failure] += 1

    by_family = []
    for family in FAMILIES:
        family_items = [i for i in items if FAMILY_OF[i.qtype] == family]
        if family_items:
            by_family.append(_group_row(family, family_items, by_id))
    by_arity = []
    for arity in range(1, 6):
        arity_items = [i for i in items if len(i.gold_answers) == arity]
        if arity_items:
            by_arity.append(_group_row(arity, arity_items, by_id))

    return Report(
        n=len(items),
        em=overall["em"],
        rmse=overall["rmse"],
        mae=overall["mae"],
        failures=failures,
        by_family=by_family,
        by_arity=by_arity,
        stage_stats=dict(stage_stats or {}),
    )
