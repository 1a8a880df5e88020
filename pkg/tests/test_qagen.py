import logging

import pytest

from cfrag.corpus import SCHEMA_DIRECT, SCHEMA_LIFECYCLE, ExtractionRecord, SynthConfig, synthesize_corpus
from cfrag.progdsl import run_source
from cfrag.qagen import (
    FAMILY_OF,
    GenConfig,
    QagenError,
    TargetNotFoundError,
    dataset_mix,
    generate_gold_program,
    generate_questions,
    load_dataset,
    split_dataset,
    validate_records,
    write_dataset,
    write_validation_csv,
)


def make_record(
    doc_id="doc0000",
    total=505.0,
    schema=SCHEMA_LIFECYCLE,
    components=None,
    manufacturing=50.0,
):
    lifecycle = None
    if schema == SCHEMA_LIFECYCLE:
        rest = 100.0 - manufacturing
        lifecycle = {
            "Manufacturing": manufacturing,
            "Use": round(rest * 0.6, 1),
            "Transportation": round(rest * 0.25, 1),
            "End of life": round(rest * 0.15, 1),
        }
    return ExtractionRecord(
        doc_id=doc_id,
        product_name="TerraBook 9999X",
        product_type="laptop",
        total_pcf=total,
        schema=schema,
        lifecycle_percents=lifecycle,
        component_percents=components
        or {"Display": 24.0, "Chassis": 26.0, "Mainboard and other boards": 31.0, "Memory": 19.0},
    )


EXPECTED_CANONICAL = """\
total_carbon=505.0
manufacturing_percent=0.5
manufacturing_carbon=total_carbon*manufacturing_percent
display_percent=0.24
display_carbon=total_carbon*manufacturing_percent*display_percent
answer=[manufacturing_carbon,display_carbon]"""


class TestGoldPrograms:
    def test_stage_plus_component_program_text(self):
        program = generate_gold_program(
            make_record(), "calculation", ("Manufacturing", "Display")
        )
        assert program == EXPECTED_CANONICAL
        assert run_source(program) == pytest.approx([252.5, 60.6], abs=1e-9)

    def test_direct_schema_multiplies_total_only(self):
        record = make_record(schema=SCHEMA_DIRECT)
        program = generate_gold_program(record, "calculation", ("Display",))
        assert "manufacturing" not in program
        assert run_source(program) == pytest.approx([505.0 * 0.24], abs=1e-9)

    def test_word_match_is_literal(self):
        record = make_record()
        program = generate_gold_program(record, "word_match", ("total_pcf",))
        assert program == "answer=[505.0]"
        program = generate_gold_program(record, "word_match", ("Display", "Memory"))
        assert program == "answer=[24.0,19.0]"
        program = generate_gold_program(record, "word_match", ("Use",))
        assert run_source(program) == [30.0]

    def test_extreme_and_top_programs(self):
        record = make_record()
        assert run_source(generate_gold_program(record, "max", ())) == [
            ("Mainboard and other boards", 31.0)
        ]
        assert run_source(generate_gold_program(record, "min", ())) == [("Memory", 19.0)]
        assert run_source(generate_gold_program(record, "top3", ())) == [
            ("Mainboard and other boards", 31.0),
            ("Chassis", 26.0),
            ("Display", 24.0),
        ]

    def test_component_order_does_not_change_extremes(self):
        record = make_record()
        flipped = make_record(
            components=dict(reversed(list(record.component_percents.items())))
        )
        for qtype in ("max", "min", "top3"):
            a = run_source(generate_gold_program(record, qtype, ()))
            b = run_source(generate_gold_program(flipped, qtype, ()))
            assert a == b

    def test_missing_target_raises(self):
        record = make_record(schema=SCHEMA_DIRECT)
        with pytest.raises(TargetNotFoundError):
            generate_gold_program(record, "calculation", ("Manufacturing",))
        with pytest.raises(TargetNotFoundError):
            generate_gold_program(record, "word_match", ("Batteries",))
        with pytest.raises(QagenError):
            generate_gold_program(record, "verbify", ())


class TestGeneration:
    def test_volume_and_round_trip(self):
        _, records = synthesize_corpus(SynthConfig(n_docs=100), 31)
        items = generate_questions(records, GenConfig(), 31)
        assert len(items) >= 1000
        assert len({item.qa_id for item in items}) == len(items)
        for item in items[::7]:
            assert run_source(item.gold_program) == item.gold_answers
            assert item.qa_id.startswith(item.doc_id)

    def test_deterministic(self):
        _, records = synthesize_corpus(SynthConfig(n_docs=10), 5)
        a = generate_questions(records, GenConfig(), 99)
        b = generate_questions(records, GenConfig(), 99)
        assert a == b
        c = generate_questions(records, GenConfig(), 100)
        assert a != c

    def test_mix_covers_all_families(self):
        _, records = synthesize_corpus(SynthConfig(n_docs=60), 8)
        items = generate_questions(records, GenConfig(), 8)
        mix = dataset_mix(items)
        assert set(mix) == {"Word Match", "Max/Min", "Top 3/5", "Calculation"}
        counts = {family: n for family, (n, _) in mix.items()}
        assert counts["Word Match"] > counts["Calculation"] > counts["Max/Min"]
        assert counts["Top 3/5"] >= 1
        assert sum(counts.values()) == len(items)

    def test_questions_name_the_product(self):
        _, records = synthesize_corpus(SynthConfig(n_docs=15), 12)
        by_doc = {r.doc_id: r for r in records}
        for item in generate_questions(records, GenConfig(), 12):
            record = by_doc[item.doc_id]
            assert record.product_name in item.question
            assert record.product_type in item.question

    def test_top_n_skipped_when_too_few_components(self, caplog):
        record = make_record(components={"Display": 60.0, "Chassis": 40.0})
        with caplog.at_level(logging.WARNING, logger="cfrag.qagen"):
            items = generate_questions([record], GenConfig(), 4)
        assert not [i for i in items if i.qtype in ("top3", "top5")]
        assert any("skipping top-n" in rec.message for rec in caplog.records)

    def test_quota_of_zero_is_respected(self):
        record = make_record()
        items = generate_questions(
            [record], GenConfig(word_match_per_doc=0, top_n_per_doc=0), 4
        )
        assert all(item.qtype in ("calculation", "max", "min") for item in items)


class TestSplits:
    def test_doc_level_disjointness(self):
        _, records = synthesize_corpus(SynthConfig(n_docs=25), 2)
        items = generate_questions(records, GenConfig(), 2)
        for seed in range(20):
            split = split_dataset(items, 0.8, seed)
            train_docs = {i.doc_id for i in split if i.split == "train"}
            test_docs = {i.doc_id for i in split if i.split == "test"}
            assert train_docs and test_docs
            assert not train_docs & test_docs
            assert len(train_docs) == 20  # ceil(0.8 * 25)

    def test_ratio_bounds(self):
        record = make_record()
        items = generate_questions([record], GenConfig(), 1)
        for ratio in (0.0, 1.0, -0.3, 1.5):
            with pytest.raises(QagenError):
                split_dataset(items, ratio, 0)


class TestValidation:
    def test_component_sum_thresholds(self):
        sums = [97.0, 99.0, 100.2, 101.0, 101.5]
        records = [
            make_record(doc_id=f"doc{i}", components={"Display": s}, total=200.0)
            for i, s in enumerate(sums)
        ]
        report = validate_records(records)
        assert [row.sum_ok for row in report.rows] == [False, True, True, True, False]

    def test_outlier_screen_boundary(self):
        # totals 100, 100, 100, 500: mean 200, mean absolute deviation 150.
        # The 500 sits exactly at twice the deviation, which still passes.
        records = [
            make_record(doc_id=f"doc{i}", total=t, components={"Display": 100.0})
            for i, t in enumerate([100.0, 100.0, 100.0, 500.0])
        ]
        report = validate_records(records)
        assert report.mean_pcf == pytest.approx(200.0)
        assert report.mae == pytest.approx(150.0)
        assert [row.pcf_ok for row in report.rows] == [True, True, True, True]

    def test_outlier_screen_failure(self):
        # totals 100 x4 and 600: mean 200, deviation 160; 400 > 320 fails.
        records = [
            make_record(doc_id=f"doc{i}", total=t, components={"Display": 100.0})
            for i, t in enumerate([100.0, 100.0, 100.0, 100.0, 600.0])
        ]
        report = validate_records(records)
        assert [row.pcf_ok for row in report.rows] == [True, True, True, True, False]
        assert report.rows[-1].overall_ok is False

    def test_single_record_screen_not_applicable(self):
        report = validate_records([make_record(components={"Display": 100.0})])
        assert report.applicable is False
        assert report.rows[0].pcf_ok is True
        assert report.rows[0].pcf_deviation is None
        assert report.rows[0].sum_ok is True

    def test_csv_output(self, tmp_path):
        records = [
            make_record(doc_id="a", total=100.0, components={"Display": 100.0}),
            make_record(doc_id="b", total=100.0, components={"Display": 150.0}),
        ]
        path = tmp_path / "validation.csv"
        write_validation_csv(path, validate_records(records))
        lines = path.read_text().splitlines()
        assert lines[0].startswith("doc_id,component_sum,sum_check")
        assert "a,100.0,pass" in lines[1]
        assert "b,150.0,fail" in lines[2]


def test_dataset_io_round_trip(tmp_path):
    _, records = synthesize_corpus(SynthConfig(n_docs=6), 14)
    items = split_dataset(generate_questions(records, GenConfig(), 14), 0.8, 14)
    path = tmp_path / "dataset.jsonl"
    write_dataset(path, items)
    assert load_dataset(path) == items


def test_dataset_load_rejects_bad_rows(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(
        '{"qa_id":"x-q000","doc_id":"x","qtype":"essay","question":"?",'
        '"targets":[],"gold_program":"answer=[1]","gold_answers":[1.0],"split":"train"}\n'
    )
    with pytest.raises(QagenError, match="essay"):
        load_dataset(path)
    path.write_text('{"qa_id":"x-q000"}\n')
    with pytest.raises(QagenError, match="missing key"):
        load_dataset(path)


def test_family_labels_cover_all_types():
    assert set(FAMILY_OF) == {"word_match", "max", "min", "top3", "top5", "calculation"}
