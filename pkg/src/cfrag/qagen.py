"""Question generation over extraction records, with gold answer programs.

Every generated question carries a gold program in the restricted answer
language; executing that program yields the gold answers.  Programs are the
single source of truth: generation asserts the round trip so a drifting
template or formatting bug cannot silently corrupt a dataset.

Question types and their family labels for reporting:

* ``word_match``   ("Word Match")   value stated verbatim in the report
* ``max``/``min``  ("Max/Min")      extreme component by share
* ``top3``/``top5`` ("Top 3/5")     largest components, ordered
* ``calculation``  ("Calculation")  kg amounts derived from percentages
"""

from __future__ import annotations

import csv
import logging
import math
import random
import re
from dataclasses import dataclass, replace
from pathlib import Path

from .corpus import SCHEMA_LIFECYCLE, ExtractionRecord
from .progdsl import Labeled, answers_from_json, answers_to_json, run_source
from .util import derived_seed, read_jsonl, write_jsonl

log = logging.getLogger(__name__)

QT_WORD_MATCH = "word_match"
QT_MAX = "max"
QT_MIN = "min"
QT_TOP3 = "top3"
QT_TOP5 = "top5"
QT_CALCULATION = "calculation"
QTYPES = (QT_WORD_MATCH, QT_MAX, QT_MIN, QT_TOP3, QT_TOP5, QT_CALCULATION)

FAMILY_OF = {
    QT_WORD_MATCH: "Word Match",
    QT_MAX: "Max/Min",
    QT_MIN: "Max/Min",
    QT_TOP3: "Top 3/5",
    QT_TOP5: "Top 3/5",
    QT_CALCULATION: "Calculation",
}
FAMILIES = ("Word Match", "Max/Min", "Top 3/5", "Calculation")

#: target token meaning "the total footprint" rather than a component/stage
TOTAL_TARGET = "total_pcf"
MANUFACTURING = "Manufacturing"


class QagenError(Exception):
    pass


class TargetNotFoundError(QagenError):
    """A program was requested for a target the record does not contain."""


@dataclass(frozen=True)
class QAItem:
    qa_id: str
    doc_id: str
    qtype: str
    question: str
    targets: tuple  # component/stage display names; empty for max/min/top
    gold_program: str
    gold_answers: list
    split: str = ""  # "train" or "test" once split_dataset has run


@dataclass(frozen=True)
class GenConfig:
    word_match_per_doc: int = 6
    calculation_per_doc: int = 4
    max_min_per_doc: int = 2  # one "max" plus one "min"
    top_n_per_doc: int = 1


# --- Gold programs -----------------------------------------------------------


def _ident(display_name: str) -> str:
    slug = re.sub(r"[^0-9a-z]+", "_", display_name.lower()).strip("_")
    if not slug or slug[0].isdigit():
        slug = f"c_{slug}"
    return slug


def _fmt(x: float) -> str:
    return repr(float(x))


def _components_dict_source(record: ExtractionRecord) -> str:
    pairs = ", ".join(
        f'"{name}": {_fmt(pct)}' for name, pct in record.component_percents.items()
    )
    return "components={" + pairs + "}"


def _lookup_percent(record: ExtractionRecord, target: str) -> float:
    if target in record.component_percents:
        return record.component_percents[target]
    if record.lifecycle_percents and target in record.lifecycle_percents:
        return record.lifecycle_percents[target]
    raise TargetNotFoundError(f"{record.doc_id} has no field {target!r}")


def generate_gold_program(
    record: ExtractionRecord, qtype: str, targets: tuple = ()
) -> str:
    """Render the answer program for one question over one record."""
    if qtype == QT_WORD_MATCH:
        if not targets:
            raise QagenError("word_match needs at least one target")
        values = [
            record.total_pcf if t == TOTAL_TARGET else _lookup_percent(record, t)
            for t in targets
        ]
        return "answer=[" + ",".join(_fmt(v) for v in values) + "]"

    if qtype == QT_CALCULATION:
        if not targets:
            raise QagenError("calculation needs at least one target")
        lifecycle = record.schema == SCHEMA_LIFECYCLE
        lines = [f"total_carbon={_fmt(record.total_pcf)}"]
        if lifecycle:
            mfg = record.lifecycle_percents[MANUFACTURING]
            lines.append(f"manufacturing_percent={_fmt(mfg / 100.0)}")
        answer_vars = []
        for target in targets:
            if target == MANUFACTURING and lifecycle:
                lines.append("manufacturing_carbon=total_carbon*manufacturing_percent")
                answer_vars.append("manufacturing_carbon")
            elif target in record.component_percents:
                slug = _ident(target)
                pct = record.component_percents[target]
                lines.append(f"{slug}_percent={_fmt(pct / 100.0)}")
                if lifecycle:
                    lines.append(
                        f"{slug}_carbon=total_carbon*manufacturing_percent*{slug}_percent"
                    )
                else:
                    lines.append(f"{slug}_carbon=total_carbon*{slug}_percent")
                answer_vars.append(f"{slug}_carbon")
            else:
                raise TargetNotFoundError(f"{record.doc_id} has no field {target!r}")
        lines.append("answer=[" + ",".join(answer_vars) + "]")
        return "\n".join(lines)

    if qtype in (QT_MAX, QT_MIN):
        call = "max_by_value" if qtype == QT_MAX else "min_by_value"
        return f"{_components_dict_source(record)}\nanswer=[{call}(components)]"
    if qtype in (QT_TOP3, QT_TOP5):
        n = 3 if qtype == QT_TOP3 else 5
        return f"{_components_dict_source(record)}\nanswer=top_n(components, {n})"
    raise QagenError(f"unknown question type {qtype!r}")


def _gold_answers(record: ExtractionRecord, qtype: str, targets: tuple) -> list:
    """Compute expected answers directly from the record."""
    if qtype == QT_WORD_MATCH:
        return [
            record.total_pcf if t == TOTAL_TARGET else _lookup_percent(record, t)
            for t in targets
        ]
    if qtype == QT_CALCULATION:
        out = []
        lifecycle = record.schema == SCHEMA_LIFECYCLE
        mfg_frac = (
            record.lifecycle_percents[MANUFACTURING] / 100.0 if lifecycle else None
        )
        for target in targets:
            if target == MANUFACTURING and lifecycle:
                out.append(record.total_pcf * mfg_frac)
            else:
                frac = record.component_percents[target] / 100.0
                if lifecycle:
                    out.append(record.total_pcf * mfg_frac * frac)
                else:
                    out.append(record.total_pcf * frac)
        return out
    pairs = list(record.component_percents.items())
    if qtype == QT_MAX:
        name, val = max(pairs, key=lambda kv: kv[1])
        return [Labeled(name, val)]
    if qtype == QT_MIN:
        name, val = min(pairs, key=lambda kv: kv[1])
        return [Labeled(name, val)]
    n = 3 if qtype == QT_TOP3 else 5
    ranked = sorted(pairs, key=lambda kv: -kv[1])[:n]
    return [Labeled(k, v) for k, v in ranked]


# --- Question text -----------------------------------------------------------


_WM_TOTAL = (
    "What is the total product carbon footprint of the {name} {type}, in kg?",
    "How many kg of carbon are reported in total for the {name} {type}?",
)
_WM_COMPONENT = (
    "What percentage does the {parts} component contribute for the {name} {type}?",
    "For the {name} {type}, what share in percent is attributed to {parts}?",
)
_WM_PAIR = (
    "For the {name} {type}, what percentages are reported for {parts}?",
    "What shares do {parts} account for in the {name} {type} report?",
)
_WM_STAGE = (
    "What share of the total footprint of the {name} {type} falls in the {parts} stage?",
    "For the {name} {type}, what percent of the footprint is the {parts} stage?",
)
_CALC_CANONICAL = (
    "For the {name} {type}, how much carbon comes from the manufacturing stage, "
    "and how much of that is due to the {parts} component, in kg?",
)
_CALC_COMPONENT = (
    "In kg, what is the carbon footprint of the {parts} of the {name} {type}?",
    "How many kg of the {name} {type} footprint come from the {parts}?",
)
_MAX_T = (
    "Which component accounts for the largest share of the {name} {type} footprint?",
)
_MIN_T = (
    "Which component accounts for the smallest share of the {name} {type} footprint?",
)
_TOP_T = (
    "Which {n} components contribute the most to the {name} {type} footprint, largest first?",
)


def _join_names(names) -> str:
    names = list(names)
    if len(names) == 1:
        return names[0]
    return ", ".join(names[:-1]) + " and " + names[-1]


def _render(rng: random.Random, templates: tuple, record: ExtractionRecord, **kw) -> str:
    return rng.choice(templates).format(
        name=record.product_name, type=record.product_type, **kw
    )


# --- Generation ---------------------------------------------------------------


def generate_questions(
    records: list[ExtractionRecord], config: GenConfig, seed: int
) -> list[QAItem]:
    items: list[QAItem] = []
    for record in records:
        rng = random.Random(derived_seed(seed, "qagen", record.doc_id))
        items.extend(_questions_for_record(record, config, rng))
    return items


def _questions_for_record(
    record: ExtractionRecord, config: GenConfig, rng: random.Random
) -> list[QAItem]:
    comps = list(record.component_percents)
    lifecycle = record.schema == SCHEMA_LIFECYCLE
    planned: list[tuple[str, str, tuple]] = []  # (qtype, variant, targets)

    # word match: always ask the total once, fill the rest from a pool
    pool: list[tuple[str, tuple]] = [("component", (c,)) for c in comps]
    if lifecycle:
        pool += [("stage", (s,)) for s in record.lifecycle_percents]
    if len(comps) >= 2:
        seen_pairs = set()
        while len(seen_pairs) < min(3, math.comb(len(comps), 2)):
            seen_pairs.add(tuple(rng.sample(comps, 2)))
        pool += [("pair", pair) for pair in sorted(seen_pairs)]
    rng.shuffle(pool)
    if config.word_match_per_doc >= 1:
        planned.append((QT_WORD_MATCH, "total", (TOTAL_TARGET,)))
        for variant, targets in pool[: config.word_match_per_doc - 1]:
            planned.append((QT_WORD_MATCH, variant, targets))

    # calculation: lifecycle docs lead with the stage-plus-component question
    calc_pool: list[tuple[str, tuple]] = [("component", (c,)) for c in comps]
    if len(comps) >= 2:
        calc_pool += [("component", tuple(rng.sample(comps, 2)))]
    rng.shuffle(calc_pool)
    quota = config.calculation_per_doc
    if lifecycle and quota > 0:
        planned.append(
            (QT_CALCULATION, "canonical", (MANUFACTURING, rng.choice(comps)))
        )
        quota -= 1
    for variant, targets in calc_pool[:quota]:
        planned.append((QT_CALCULATION, variant, targets))

    if config.max_min_per_doc >= 1:
        planned.append((QT_MAX, "max", ()))
    if config.max_min_per_doc >= 2:
        planned.append((QT_MIN, "min", ()))

    if config.top_n_per_doc >= 1:
        if len(comps) < 3:
            log.warning(
                "skipping top-n question for %s: only %d components",
                record.doc_id,
                len(comps),
            )
        else:
            use_five = len(comps) >= 5 and rng.random() < 0.5
            planned.append((QT_TOP5 if use_five else QT_TOP3, "top", ()))

    items = []
    for idx, (qtype, variant, targets) in enumerate(planned):
        program = generate_gold_program(record, qtype, targets)
        gold = _gold_answers(record, qtype, targets)
        executed = run_source(program)
        if executed != gold:
            raise QagenError(
                f"gold program for {record.doc_id}/{qtype} does not round-trip: "
                f"{executed!r} != {gold!r}"
            )
        items.append(
            QAItem(
                qa_id=f"{record.doc_id}-q{idx:03d}",
                doc_id=record.doc_id,
                qtype=qtype,
                question=_question_text(rng, record, qtype, variant, targets),
                targets=targets,
                gold_program=program,
                gold_answers=gold,
            )
        )
    return items


def _question_text(
    rng: random.Random,
    record: ExtractionRecord,
    qtype: str,
    variant: str,
    targets: tuple,
) -> str:
    if qtype == QT_WORD_MATCH:
        if variant == "total":
            return _render(rng, _WM_TOTAL, record)
        if variant == "stage":
            return _render(rng, _WM_STAGE, record, parts=targets[0])
        templates = _WM_PAIR if len(targets) > 1 else _WM_COMPONENT
        return _render(rng, templates, record, parts=_join_names(targets))
    if qtype == QT_CALCULATION:
        if variant == "canonical":
            return _render(rng, _CALC_CANONICAL, record, parts=targets[1])
        return _render(rng, _CALC_COMPONENT, record, parts=_join_names(targets))
    if qtype == QT_MAX:
        return _render(rng, _MAX_T, record)
    if qtype == QT_MIN:
        return _render(rng, _MIN_T, record)
    n = 3 if qtype == QT_TOP3 else 5
    return _render(rng, _TOP_T, record, n=n)


def dataset_mix(items: list[QAItem]) -> dict:
    """Family label -> (count, percent of all questions)."""
    counts: dict[str, int] = {family: 0 for family in FAMILIES}
    for item in items:
        counts[FAMILY_OF[item.qtype]] += 1
    total = len(items)
    return {
        family: (count, 100.0 * count / total if total else 0.0)
        for family, count in counts.items()
    }


# --- Splits -------------------------------------------------------------------


def split_dataset(items: list[QAItem], ratio: float, seed: int) -> list[QAItem]:
    """Assign train/test by document so both splits never share a report."""
    if not 0.0 < ratio < 1.0:
        raise QagenError(f"split ratio must be in (0, 1), got {ratio}")
    doc_ids = sorted({item.doc_id for item in items})
    rng = random.Random(derived_seed(seed, "split"))
    rng.shuffle(doc_ids)
    n_train = math.ceil(ratio * len(doc_ids))
    train_docs = set(doc_ids[:n_train])
    return [
        replace(item, split="train" if item.doc_id in train_docs else "test")
        for item in items
    ]


# --- Record validation --------------------------------------------------------


@dataclass(frozen=True)
class ValidationRow:
    doc_id: str
    component_sum: float
    sum_ok: bool
    total_pcf: float
    pcf_deviation: float | None
    pcf_ok: bool
    overall_ok: bool


@dataclass(frozen=True)
class ValidationReport:
    rows: list
    mean_pcf: float | None
    mae: float | None
    applicable: bool  # outlier screen needs at least two records


def validate_records(records: list[ExtractionRecord]) -> ValidationReport:
    """Screen records: component sums near 100, totals not wildly off-corpus.

    The component shares must sum to between 99 and 101 inclusive.  A total
    footprint fails when its absolute deviation from the corpus mean exceeds
    twice the corpus mean absolute deviation.
    """
    applicable = len(records) >= 2
    mean = mae = None
    if applicable:
        totals = [r.total_pcf for r in records]
        mean = sum(totals) / len(totals)
        mae = sum(abs(t - mean) for t in totals) / len(totals)
    rows = []
    for rec in records:
        comp_sum = sum(rec.component_percents.values())
        sum_ok = 99.0 <= comp_sum <= 101.0
        if applicable:
            deviation = abs(rec.total_pcf - mean)
            pcf_ok = deviation <= 2.0 * mae
        else:
            deviation, pcf_ok = None, True
        rows.append(
            ValidationRow(
                doc_id=rec.doc_id,
                component_sum=comp_sum,
                sum_ok=sum_ok,
                total_pcf=rec.total_pcf,
                pcf_deviation=deviation,
                pcf_ok=pcf_ok,
                overall_ok=sum_ok and pcf_ok,
            )
        )
    return ValidationReport(rows=rows, mean_pcf=mean, mae=mae, applicable=applicable)


def write_validation_csv(path: str | Path, report: ValidationReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["doc_id", "component_sum", "sum_check", "total_pcf", "pcf_deviation", "pcf_check", "overall"]
        )
        for row in report.rows:
            writer.writerow(
                [
                    row.doc_id,
                    row.component_sum,
                    "pass" if row.sum_ok else "fail",
                    row.total_pcf,
                    "" if row.pcf_deviation is None else row.pcf_deviation,
                    "pass" if row.pcf_ok else "fail",
                    "pass" if row.overall_ok else "fail",
                ]
            )


# --- Dataset IO ---------------------------------------------------------------


def write_dataset(path: str | Path, items: list[QAItem]) -> None:
    write_jsonl(
        path,
        (
            {
                "qa_id": item.qa_id,
                "doc_id": item.doc_id,
                "qtype": item.qtype,
                "question": item.question,
                "targets": list(item.targets),
                "gold_program": item.gold_program,
                "gold_answers": answers_to_json(item.gold_answers),
                "split": item.split,
            }
            for item in items
        ),
    )


def load_dataset(path: str | Path) -> list[QAItem]:
    items = []
    for row in read_jsonl(path):
        try:
            qtype = row["qtype"]
            if qtype not in QTYPES:
                raise QagenError(f"{row['qa_id']}: unknown question type {qtype!r}")
            split = row["split"]
            if split not in ("", "train", "test"):
                raise QagenError(f"{row['qa_id']}: bad split {split!r}")
            items.append(
                QAItem(
                    qa_id=row["qa_id"],
                    doc_id=row["doc_id"],
                    qtype=qtype,
                    question=row["question"],
                    targets=tuple(row["targets"]),
                    gold_program=row["gold_program"],
                    gold_answers=answers_from_json(row["gold_answers"]),
                    split=split,
                )
            )
        except KeyError as exc:
            raise QagenError(f"dataset row missing key {exc}") from None
    return items
