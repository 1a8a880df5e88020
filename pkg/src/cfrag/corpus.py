"""Noisy carbon-report corpus: synthesis, field extraction, disk layout.

A corpus is a set of plain-text product carbon footprint reports.  Each
report belongs to a company reporting format, captured by an
:class:`ExtractorProfile` of ordered regular expressions.  Extraction is
all-or-nothing per field: a required field matching zero times or more than
once yields a :class:`Discard` instead of a record, so downstream stages only
ever see unambiguous values.

Two formats ship by default.  ``lifecycle_v1`` reports state lifecycle stage
shares of the total footprint plus a component breakdown *within
manufacturing*; ``direct_v1`` reports component shares of the total footprint
directly.  The distinction decides how answer programs combine percentages.

The synthesizer builds reports whose field lines are exactly recoverable by
the matching profile while the surrounding text carries realistic noise:
block shuffling, filler sentences, page markers and line breaks inside
label/value gaps.
"""

from __future__ import annotations

import csv
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

from .util import derived_seed

SCHEMA_LIFECYCLE = "lifecycle_breakdown"
SCHEMA_DIRECT = "direct_component"

REASON_NO_MATCH = "no_match"
REASON_MULTIPLE_MATCHES = "multiple_matches"

#: component key -> display name as it appears in report text
COMPONENT_CATALOG = {
    "ssd": "Solid State Drive (SSD)",
    "batteries": "Batteries",
    "chassis": "Chassis",
    "mainboard": "Mainboard and other boards",
    "display": "Display",
    "hdd": "Hard Disk Drive (HDD)",
    "psu": "Power Supply Unit (PSU)",
    "packaging": "Packaging",
    "memory": "Memory",
    "cables": "Cables",
}

LIFECYCLE_STAGES = ("Manufacturing", "Use", "Transportation", "End of life")


class CorpusError(Exception):
    """Raised for malformed corpora on disk or misused profiles."""


@dataclass(frozen=True)
class Document:
    doc_id: str
    company_profile: str  # name of the ExtractorProfile that applies
    raw_text: str
    page_count: int
    char_count: int
    word_count: int


@dataclass(frozen=True)
class ExtractionRecord:
    doc_id: str
    product_name: str
    product_type: str
    total_pcf: float  # kg CO2e
    schema: str  # SCHEMA_LIFECYCLE or SCHEMA_DIRECT
    # stage name -> percent of total; None for direct-format reports
    lifecycle_percents: dict | None
    # display name -> percent, in order of first appearance in the text
    component_percents: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Discard:
    """A document dropped during extraction, with the field that failed."""

    doc_id: str
    field: str
    reason: str  # REASON_NO_MATCH or REASON_MULTIPLE_MATCHES


@dataclass(frozen=True)
class FieldPattern:
    field: str
    pattern: re.Pattern
    cast: str  # "str" or "float"


@dataclass(frozen=True)
class ExtractorProfile:
    name: str
    required: tuple  # of FieldPattern: product_name, product_type, total_pcf
    lifecycle: tuple  # of FieldPattern, empty for direct formats
    components: tuple  # of FieldPattern, one per catalog component


def _field_pattern(fieldname: str, pattern: str, cast: str) -> FieldPattern:
    compiled = re.compile(pattern)
    if compiled.groups < 1:
        raise ValueError(f"pattern for {fieldname!r} captures nothing: {pattern!r}")
    return FieldPattern(fieldname, compiled, cast)


def _percent_pattern(display_name: str) -> str:
    return rf"{re.escape(display_name)}\s*(\d+(\.\d+)?)\s*%"


def _build_profile(name: str, with_lifecycle: bool) -> ExtractorProfile:
    required = (
        _field_pattern("product_name", r"Product name:\s*([^\n]+)", "str"),
        _field_pattern("product_type", r"Product type:\s*([A-Za-z ]+)", "str"),
        _field_pattern(
            "total_pcf",
            r"Total product carbon footprint:\s*(\d+(\.\d+)?)\s*kg",
            "float",
        ),
    )
    lifecycle = tuple(
        _field_pattern(stage, _percent_pattern(stage), "float")
        for stage in (LIFECYCLE_STAGES if with_lifecycle else ())
    )
    components = tuple(
        _field_pattern(display, _percent_pattern(display), "float")
        for display in COMPONENT_CATALOG.values()
    )
    return ExtractorProfile(name, required, lifecycle, components)


PROFILES = {
    "lifecycle_v1": _build_profile("lifecycle_v1", with_lifecycle=True),
    "direct_v1": _build_profile("direct_v1", with_lifecycle=False),
}


def get_profile(name: str) -> ExtractorProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise CorpusError(f"unknown extractor profile {name!r}") from None


# --- Extraction ------------------------------------------------------------


def _cast(fp: FieldPattern, match: re.Match) -> object:
    value = match.group(1)
    return float(value) if fp.cast == "float" else value.strip()


def extract_from_text(doc_id: str, text: str, profile: ExtractorProfile):
    """Apply a profile to raw text; returns ExtractionRecord or Discard."""
    values: dict[str, object] = {}
    for fp in profile.required:
        matches = list(fp.pattern.finditer(text))
        if not matches:
            return Discard(doc_id, fp.field, REASON_NO_MATCH)
        if len(matches) > 1:
            return Discard(doc_id, fp.field, REASON_MULTIPLE_MATCHES)
        values[fp.field] = _cast(fp, matches[0])

    lifecycle: dict[str, float] | None = None
    if profile.lifecycle:
        lifecycle = {}
        for fp in profile.lifecycle:
            matches = list(fp.pattern.finditer(text))
            if not matches:
                return Discard(doc_id, fp.field, REASON_NO_MATCH)
            if len(matches) > 1:
                return Discard(doc_id, fp.field, REASON_MULTIPLE_MATCHES)
            lifecycle[fp.field] = _cast(fp, matches[0])

    positioned: list[tuple[int, str, float]] = []
    for fp in profile.components:
        matches = list(fp.pattern.finditer(text))
        if not matches:
            continue  # absent components are normal
        if len(matches) > 1:
            return Discard(doc_id, fp.field, REASON_MULTIPLE_MATCHES)
        positioned.append((matches[0].start(), fp.field, _cast(fp, matches[0])))
    if not positioned:
        return Discard(doc_id, "components", REASON_NO_MATCH)
    positioned.sort()

    return ExtractionRecord(
        doc_id=doc_id,
        product_name=values["product_name"],
        product_type=values["product_type"],
        total_pcf=values["total_pcf"],
        schema=SCHEMA_LIFECYCLE if profile.lifecycle else SCHEMA_DIRECT,
        lifecycle_percents=lifecycle,
        component_percents={name: pct for _, name, pct in positioned},
    )


def extract_fields(doc: Document, profile: ExtractorProfile):
    if doc.company_profile != profile.name:
        raise CorpusError(
            f"document {doc.doc_id} uses profile {doc.company_profile!r}, "
            f"not {profile.name!r}"
        )
    return extract_from_text(doc.doc_id, doc.raw_text, profile)


def extract_with_any_profile(doc_id: str, text: str):
    """Try each known profile in a fixed order; first full success wins.

    Lifecycle comes first: a lifecycle report also satisfies the direct
    profile but would then be read with the wrong percentage base.
    """
    outcome = None
    for name in ("lifecycle_v1", "direct_v1"):
        outcome = extract_from_text(doc_id, text, PROFILES[name])
        if isinstance(outcome, ExtractionRecord):
            return outcome
    return outcome


# --- Synthesis --------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    n_docs: int
    lifecycle_fraction: float = 0.6  # share of docs using lifecycle_v1
    shuffle_prob: float = 0.5  # chance a report's blocks are reordered
    spurious_rate: float = 0.3  # chance of filler between adjacent blocks
    split_rate: float = 0.2  # chance a numeric line breaks around its value


_COMPANIES = (
    "Veridian Systems",
    "Northwind Compute",
    "Halcyon Devices",
    "Bluepine Electronics",
    "Orvana Tech",
    "Cresthaven Industries",
    "Marlowe Hardware",
    "Sundstrom Group",
)

_BRANDS = (
    "TerraBook",
    "AeroServe",
    "VoltEdge",
    "NimbusPad",
    "QuartzStation",
    "EchoFrame",
    "IronCore",
    "LumenView",
)

_PRODUCT_TYPES = ("laptop", "desktop", "monitor", "server", "tablet", "workstation")

# Filler vocabulary: no digits, no percent signs, and no collision with any
# label word the extraction patterns anchor on.
_FILLER = (
    "assessment",
    "boundary",
    "methodology",
    "verification",
    "assurance",
    "inventory",
    "allocation",
    "scenario",
    "baseline",
    "criteria",
    "reporting",
    "supplier",
    "energy",
    "facility",
    "standard",
    "estimate",
    "material",
    "process",
    "logistics",
    "recycled",
    "emission",
    "footprint",
    "analysis",
    "impact",
    "scope",
    "dataset",
    "audit",
    "carbon",
)


def _filler_sentence(rng: random.Random) -> str:
    words = [rng.choice(_FILLER) for _ in range(rng.randint(7, 13))]
    words[0] = words[0].capitalize()
    return " ".join(words) + "."


def _rounded_shares(rng: random.Random, weights: list[float]) -> list[float]:
    """Normalize weights to a near-100 total and round to one decimal."""
    target = rng.uniform(99.5, 100.5)
    scale = target / sum(weights)
    return [round(w * scale, 1) for w in weights]


def _split_gap(rng: random.Random, line: str) -> str:
    """Break a numeric line at one of its label/value/unit gaps."""
    gaps = [m.start() for m in re.finditer(r" (?=\d)| (?=%|kg)", line)]
    if not gaps:
        return line
    at = rng.choice(gaps)
    return line[:at] + "\n" + line[at + 1 :]


def synthesize_corpus(config: SynthConfig, seed: int):
    """Generate (documents, records); every document extracts losslessly."""
    if config.n_docs < 1:
        raise ValueError("n_docs must be at least 1")
    rng = random.Random(derived_seed(seed, "corpus"))
    used_names: set[str] = set()
    documents: list[Document] = []
    records: list[ExtractionRecord] = []

    for i in range(config.n_docs):
        doc_id = f"doc{i:04d}"
        profile_name = (
            "lifecycle_v1" if rng.random() < config.lifecycle_fraction else "direct_v1"
        )
        company = rng.choice(_COMPANIES)
        while True:
            product_name = f"{rng.choice(_BRANDS)} {rng.randint(1000, 9999)}{rng.choice('ABCDEFKMRSTX')}"
            if product_name not in used_names:
                used_names.add(product_name)
                break
        product_type = rng.choice(_PRODUCT_TYPES)
        total_pcf = round(rng.uniform(150.0, 900.0), 1)

        lifecycle_percents = None
        if profile_name == "lifecycle_v1":
            weights = [
                rng.uniform(30, 70),  # manufacturing dominates in practice
                rng.uniform(20, 60),
                rng.uniform(2, 10),
                rng.uniform(1, 8),
            ]
            lifecycle_percents = dict(
                zip(LIFECYCLE_STAGES, _rounded_shares(rng, weights))
            )

        comp_keys = rng.sample(sorted(COMPONENT_CATALOG), rng.randint(4, 8))
        comp_shares = _rounded_shares(rng, [rng.uniform(1, 10) for _ in comp_keys])
        component_percents = {
            COMPONENT_CATALOG[key]: share for key, share in zip(comp_keys, comp_shares)
        }

        blocks = [
            f"Product name: {product_name}",
            f"Product type: {product_type}",
            f"Total product carbon footprint: {total_pcf:.1f} kg",
        ]
        splittable = {2}  # indexes of numeric lines; 0 and 1 must stay intact
        if lifecycle_percents is not None:
            blocks.append("Lifecycle stage shares of the total:")
            for stage, pct in lifecycle_percents.items():
                splittable.add(len(blocks))
                blocks.append(f"{stage} {pct:.1f} %")
            blocks.append("Component breakdown within manufacturing:")
        else:
            blocks.append("Component breakdown of the total footprint:")
        for display, pct in component_percents.items():
            splittable.add(len(blocks))
            blocks.append(f"{display} {pct:.1f} %")

        noised = []
        for idx, block in enumerate(blocks):
            if idx in splittable and rng.random() < config.split_rate:
                block = _split_gap(rng, block)
            noised.append(block)
        order = list(range(len(noised)))
        if rng.random() < config.shuffle_prob:
            rng.shuffle(order)
        body = [noised[j] for j in order]
        with_junk = []
        for block in body:
            if rng.random() < config.spurious_rate:
                with_junk.extend(_filler_sentence(rng) for _ in range(rng.randint(1, 2)))
            with_junk.append(block)

        preamble = [_filler_sentence(rng) for _ in range(rng.randint(6, 14))]
        appendix = [_filler_sentence(rng) for _ in range(rng.randint(10, 22))]
        lines = (
            [f"{company} product environmental report"]
            + preamble
            + with_junk
            + appendix
        )
        page_count = rng.choices((1, 2, 3), weights=(0.40, 0.45, 0.15))[0]
        for page in range(page_count, 1, -1):
            cut = (page - 1) * len(lines) // page_count
            lines.insert(cut, f"=== Page {page} ===")
        raw_text = "\n".join(lines) + "\n"

        record = ExtractionRecord(
            doc_id=doc_id,
            product_name=product_name,
            product_type=product_type,
            total_pcf=total_pcf,
            schema=SCHEMA_LIFECYCLE
            if profile_name == "lifecycle_v1"
            else SCHEMA_DIRECT,
            lifecycle_percents=lifecycle_percents,
            component_percents=_appearance_order(raw_text, component_percents),
        )
        extracted = extract_from_text(doc_id, raw_text, PROFILES[profile_name])
        if (
            not isinstance(extracted, ExtractionRecord)
            or extracted != record
            or list(extracted.component_percents) != list(record.component_percents)
        ):
            raise RuntimeError(f"synthesis produced unextractable text for {doc_id}")

        documents.append(
            Document(
                doc_id=doc_id,
                company_profile=profile_name,
                raw_text=raw_text,
                page_count=page_count,
                char_count=len(raw_text),
                word_count=len(raw_text.split()),
            )
        )
        records.append(record)
    return documents, records


def _appearance_order(text: str, component_percents: dict) -> dict:
    """Reorder a component map by first appearance in the final text."""
    order = sorted(component_percents, key=text.index)
    return {name: component_percents[name] for name in order}


# --- Disk layout ------------------------------------------------------------


def write_corpus(directory: str | Path, documents: list[Document]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with (directory / "manifest.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["doc_id", "company_profile", "pages", "file"])
        for doc in documents:
            filename = f"{doc.doc_id}.txt"
            (directory / filename).write_text(doc.raw_text, encoding="utf-8")
            writer.writerow([doc.doc_id, doc.company_profile, doc.page_count, filename])


def load_corpus(directory: str | Path) -> list[Document]:
    directory = Path(directory)
    manifest = directory / "manifest.csv"
    if not manifest.exists():
        raise CorpusError(f"no manifest.csv under {directory}")
    documents = []
    seen = set()
    with manifest.open("r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            doc_id = row["doc_id"]
            if doc_id in seen:
                raise CorpusError(f"duplicate doc_id {doc_id!r} in manifest")
            seen.add(doc_id)
            if row["company_profile"] not in PROFILES:
                raise CorpusError(
                    f"{doc_id}: unknown extractor profile {row['company_profile']!r}"
                )
            path = directory / row["file"]
            if not path.exists():
                raise CorpusError(f"{doc_id}: missing file {row['file']!r}")
            try:
                raw_text = path.read_text(encoding="utf-8")
            except UnicodeDecodeError as exc:
                raise CorpusError(f"{doc_id}: file is not UTF-8 ({exc})") from None
            documents.append(
                Document(
                    doc_id=doc_id,
                    company_profile=row["company_profile"],
                    raw_text=raw_text,
                    page_count=int(row["pages"]),
                    char_count=len(raw_text),
                    word_count=len(raw_text.split()),
                )
            )
    documents.sort(key=lambda d: d.doc_id)
    return documents


def corpus_stats(documents: list[Document]) -> dict:
    n = len(documents)
    if n == 0:
        raise CorpusError("empty corpus")
    return {
        "n_docs": n,
        "avg_chars": sum(d.char_count for d in documents) / n,
        "avg_words": sum(d.word_count for d in documents) / n,
        "avg_pages": sum(d.page_count for d in documents) / n,
    }


# --- Record CSV outputs ------------------------------------------------------


def write_records(
    directory: str | Path, records: list[ExtractionRecord], discards: list[Discard]
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    with (directory / "records.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["doc_id", "product_name", "product_type", "total_pcf", "schema"])
        for rec in records:
            writer.writerow(
                [rec.doc_id, rec.product_name, rec.product_type, rec.total_pcf, rec.schema]
            )

    with (directory / "components.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["doc_id", "component", "percent", "position"])
        for rec in records:
            for pos, (name, pct) in enumerate(rec.component_percents.items()):
                writer.writerow([rec.doc_id, name, pct, pos])

    with (directory / "lifecycle.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["doc_id", "stage", "percent"])
        for rec in records:
            for stage, pct in (rec.lifecycle_percents or {}).items():
                writer.writerow([rec.doc_id, stage, pct])

    with (directory / "discards.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["doc_id", "field", "reason"])
        for d in discards:
            writer.writerow([d.doc_id, d.field, d.reason])


def read_records(directory: str | Path):
    """Rebuild (records, discards) from the CSV outputs of write_records."""
    directory = Path(directory)
    components: dict[str, list[tuple[int, str, float]]] = {}
    with (directory / "components.csv").open("r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            components.setdefault(row["doc_id"], []).append(
                (int(row["position"]), row["component"], float(row["percent"]))
            )
    lifecycle: dict[str, dict[str, float]] = {}
    with (directory / "lifecycle.csv").open("r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            lifecycle.setdefault(row["doc_id"], {})[row["stage"]] = float(row["percent"])

    records = []
    with (directory / "records.csv").open("r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            doc_id = row["doc_id"]
            ordered = sorted(components.get(doc_id, []))
            records.append(
                ExtractionRecord(
                    doc_id=doc_id,
                    product_name=row["product_name"],
                    product_type=row["product_type"],
                    total_pcf=float(row["total_pcf"]),
                    schema=row["schema"],
                    lifecycle_percents=lifecycle.get(doc_id),
                    component_percents={name: pct for _, name, pct in ordered},
                )
            )
    discards = []
    with (directory / "discards.csv").open("r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            discards.append(Discard(row["doc_id"], row["field"], row["reason"]))
    return records, discards
