import math

import numpy as np
import pytest

from cfrag.corpus import Document, SynthConfig, synthesize_corpus
from cfrag.qagen import GenConfig, generate_questions
from cfrag.retrieval import (
    RetrievalError,
    build_index,
    embed_query,
    hit_rate,
    load_index,
    retrieve,
    save_index,
    tokenize,
)


def doc(doc_id: str, text: str) -> Document:
    return Document(
        doc_id=doc_id,
        company_profile="direct_v1",
        raw_text=text,
        page_count=1,
        char_count=len(text),
        word_count=len(text.split()),
    )


def test_tokenize():
    assert tokenize("TerraBook 4821B, laptop!") == ["terrabook", "4821b", "laptop"]
    assert tokenize("a b cd-ef") == ["cd", "ef"]
    assert tokenize("...") == []


class TestIndexMath:
    def test_term_in_every_document_gets_unit_idf(self):
        index = build_index([doc("d1", "panel panel"), doc("d2", "panel wind")])
        assert index.idf[index.vocabulary["panel"]] == pytest.approx(1.0, abs=1e-12)

    def test_weights_match_hand_computation(self):
        # Two documents; idf and cosine recomputed here from the definitions:
        # idf(t) = ln((1 + N) / (1 + df(t))) + 1, tf = raw counts, rows
        # L2-normalized, query embedded with the same idf.
        index = build_index([doc("d1", "solar panel panel"), doc("d2", "wind panel")])
        idf_solar = math.log(3 / 2) + 1
        idf_panel = math.log(3 / 3) + 1
        w_solar, w_panel = 1 * idf_solar, 2 * idf_panel
        norm = math.hypot(w_solar, w_panel)
        expected_d1_solar_cosine = (w_solar / norm) * 1.0

        ranking = retrieve(index, "solar", k=2)
        assert ranking.entries[0][0] == "d1"
        assert ranking.entries[0][1] == pytest.approx(expected_d1_solar_cosine, abs=1e-12)
        assert ranking.entries[1] == ("d2", 0.0)

    def test_rows_are_unit_length(self):
        docs, _ = synthesize_corpus(SynthConfig(n_docs=20), 3)
        index = build_index(docs)
        norms = np.linalg.norm(index.doc_matrix, axis=1)
        assert np.allclose(norms, 1.0, atol=1e-9)

    def test_build_is_deterministic(self):
        docs, _ = synthesize_corpus(SynthConfig(n_docs=10), 4)
        a, b = build_index(docs), build_index(docs)
        assert a.doc_ids == b.doc_ids
        assert a.vocabulary == b.vocabulary
        assert np.array_equal(a.doc_matrix, b.doc_matrix)

    def test_empty_corpus_rejected(self):
        with pytest.raises(RetrievalError):
            build_index([])


class TestRetrieve:
    def test_ties_fall_back_to_doc_id_order(self):
        same = "identical text body"
        index = build_index([doc("d2", same), doc("d1", same), doc("d3", same)])
        ranking = retrieve(index, "identical body", k=3)
        assert ranking.doc_ids() == ["d1", "d2", "d3"]

    def test_out_of_vocabulary_query_is_flagged(self):
        index = build_index([doc("d1", "solar panel"), doc("d2", "wind turbine")])
        ranking = retrieve(index, "zz qq xx", k=2)
        assert ranking.zero_query is True
        assert ranking.entries == [("d1", 0.0), ("d2", 0.0)]
        assert retrieve(index, "solar", k=2).zero_query is False

    def test_k_clamps_and_validates(self):
        index = build_index([doc("d1", "solar panel")])
        assert len(retrieve(index, "solar", k=10).entries) == 1
        with pytest.raises(RetrievalError):
            retrieve(index, "solar", k=0)

    def test_query_finds_its_product_report(self):
        docs, records = synthesize_corpus(SynthConfig(n_docs=30), 6)
        index = build_index(docs)
        items = generate_questions(records, GenConfig(), 6)
        top1 = 0
        for item in items:
            ranking = retrieve(index, item.question, k=5)
            top1 += ranking.doc_ids()[0] == item.doc_id
        assert top1 / len(items) > 0.9

    def test_hit_rate_monotone_in_k(self):
        docs, records = synthesize_corpus(SynthConfig(n_docs=25), 7)
        index = build_index(docs)
        items = generate_questions(records, GenConfig(), 7)[:120]
        rankings = {i.qa_id: retrieve(index, i.question, k=25).doc_ids() for i in items}
        gold = {i.qa_id: i.doc_id for i in items}
        rates = [hit_rate(rankings, gold, k) for k in (1, 3, 5, 10, 25)]
        assert all(a <= b for a, b in zip(rates, rates[1:]))
        assert rates[-1] == 1.0  # k equals the corpus size


class TestHitRate:
    def test_exact_values(self):
        rankings = {"q1": ["a", "b"], "q2": ["b", "a"], "q3": ["c", "a"]}
        gold = {"q1": "a", "q2": "a", "q3": "a"}
        assert hit_rate(rankings, gold, 1) == pytest.approx(1 / 3)
        assert hit_rate(rankings, gold, 2) == pytest.approx(1.0)

    def test_unknown_query_rejected(self):
        with pytest.raises(RetrievalError, match="q9"):
            hit_rate({"q9": ["a"]}, {"q1": "a"}, 1)
        with pytest.raises(RetrievalError):
            hit_rate({}, {}, 1)
        with pytest.raises(RetrievalError):
            hit_rate({"q1": ["a"]}, {"q1": "a"}, 0)


def test_index_round_trip(tmp_path):
    docs, _ = synthesize_corpus(SynthConfig(n_docs=12), 9)
    index = build_index(docs)
    path = tmp_path / "index.json"
    save_index(path, index)
    loaded = load_index(path)
    assert loaded.doc_ids == index.doc_ids
    assert loaded.vocabulary == index.vocabulary
    assert np.allclose(loaded.idf, index.idf, atol=0)
    assert np.allclose(loaded.doc_matrix, index.doc_matrix, atol=0)
    query = "TerraBook laptop footprint"
    assert retrieve(loaded, query, 5) == retrieve(index, query, 5)


def test_index_format_guard(tmp_path):
    path = tmp_path / "index.json"
    path.write_text('{"format": "something.else"}')
    with pytest.raises(RetrievalError, match="something.else"):
        load_index(path)


def test_embed_query_is_unit_or_zero():
    index = build_index([doc("d1", "solar panel"), doc("d2", "wind turbine")])
    assert np.linalg.norm(embed_query(index, "solar wind")) == pytest.approx(1.0)
    assert not embed_query(index, "nothing known").any()
