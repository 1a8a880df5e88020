import json

import pytest

from cfrag.corpus import SynthConfig, synthesize_corpus
from cfrag.critic import (
    CriticError,
    CriticVerdict,
    build_critic_prompt,
    critic_accuracy,
    export_critic_training,
    lexical_critic,
    parse_critic_response,
    resolve_verdict,
)
from cfrag.qagen import GenConfig, generate_questions, split_dataset

EXPECTED_INSTRUCTION = (
    "You will be provided with a question and several reference texts, each "
    "identified by a unique ID. Your goal is to analyze these references and "
    "identify which one contains the information needed to answer the "
    "question. If a reference text suggests that it provides the necessary "
    "information, respond with its corresponding ID. If multiple references "
    "apply, respond with a list of their IDs. If none of the references "
    "apply, respond with [-1]. Ensure the final output is a list."
)


class TestPrompt:
    def test_exact_layout(self):
        prompt = build_critic_prompt("Which is it?", ["first text", "second text"])
        assert prompt == (
            EXPECTED_INSTRUCTION
            + "\n\n### Question: Which is it?\n\n"
            + "### Reference 1: first text\n\n"
            + "### Reference 2: second text\n\n"
            + "### Output:"
        )

    def test_multiline_references_stay_within_sections(self):
        prompt = build_critic_prompt("Q?", ["line one\nline two"])
        assert "### Reference 1: line one\nline two" in prompt
        assert prompt.endswith("### Output:")

    def test_rejects_empty_candidates(self):
        with pytest.raises(CriticError):
            build_critic_prompt("Q?", [])


class TestParse:
    def test_single_id(self):
        assert parse_critic_response("[2]") == CriticVerdict(selected=(2,))

    def test_embedded_list(self):
        verdict = parse_critic_response("The answer is [1, 3]. Thanks!")
        assert verdict.selected == (1, 3)
        assert not verdict.none_applicable and not verdict.parse_failed

    def test_none_applicable(self):
        verdict = parse_critic_response("[-1]")
        assert verdict == CriticVerdict(selected=(), none_applicable=True)

    def test_no_brackets_is_a_parse_failure(self):
        verdict = parse_critic_response("Reference 2 looks right.")
        assert verdict.parse_failed is True

    def test_out_of_range_ids_dropped(self):
        assert parse_critic_response("[7]", n_candidates=5).parse_failed is True
        assert parse_critic_response("[1, -1]", n_candidates=5).selected == (1,)
        assert parse_critic_response("[0]").parse_failed is True
        assert parse_critic_response("[9, 2]", n_candidates=5).selected == (2,)

    def test_first_bracket_group_wins(self):
        assert parse_critic_response("[2] but maybe [3]").selected == (2,)


class TestLexicalCritic:
    def test_hand_scored_fixture(self):
        # Question tokens: what/is/the/footprint/of/terrabook/4821/laptop.
        # Candidate 1 shares terrabook+4821+laptop = 1+3+1 = 5 points;
        # candidate 2 shares laptop+footprint+the = 3 points.
        verdict = lexical_critic(
            "What is the footprint of TerraBook 4821 laptop?",
            ["TerraBook 4821 laptop report", "laptop footprint guide the"],
        )
        assert verdict == CriticVerdict(selected=(1,))

    def test_digit_tokens_outweigh_words(self):
        verdict = lexical_critic(
            "alpha beta 4821", ["alpha beta", "4821", "alpha beta"]
        )
        assert verdict.selected == (2,)

    def test_tie_goes_to_first_candidate(self):
        verdict = lexical_critic("alpha", ["alpha one", "alpha two"])
        assert verdict.selected == (1,)

    def test_never_answers_none(self):
        verdict = lexical_critic("zz", ["alpha", "beta"])
        assert verdict.selected == (1,)
        assert verdict.none_applicable is False

    def test_requires_candidates(self):
        with pytest.raises(CriticError):
            lexical_critic("q", [])


class TestResolve:
    RANKED = ["docA", "docB", "docC"]

    def test_selected_id_resolves_one_based(self):
        assert resolve_verdict(CriticVerdict(selected=(2,)), self.RANKED) == "docB"

    def test_fallbacks_pick_rank_one(self):
        top = self.RANKED[0]
        assert resolve_verdict(CriticVerdict((), parse_failed=True), self.RANKED) == top
        assert resolve_verdict(CriticVerdict((), none_applicable=True), self.RANKED) == top
        assert resolve_verdict(CriticVerdict(selected=(9,)), self.RANKED) == top

    def test_empty_ranking_rejected(self):
        with pytest.raises(CriticError):
            resolve_verdict(CriticVerdict(selected=(1,)), [])


class TestExport:
    def build(self, tmp_path, seed=19):
        docs, records = synthesize_corpus(SynthConfig(n_docs=15), seed)
        items = split_dataset(generate_questions(records, GenConfig(), seed), 0.8, seed)
        path = tmp_path / "critic_train.jsonl"
        n = export_critic_training(items, docs, k=5, path=path)
        return docs, items, path, n

    def test_only_training_split_is_exported(self, tmp_path):
        docs, items, path, n = self.build(tmp_path)
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(rows) == n == sum(1 for i in items if i.split == "train")
        train_ids = {i.qa_id for i in items if i.split == "train"}
        assert {r["qa_id"] for r in rows} <= train_ids

        test_doc_ids = {i.doc_id for i in items if i.split == "test"}
        by_id = {d.doc_id: d for d in docs}
        leak_markers = [by_id[d].raw_text.splitlines()[1] for d in test_doc_ids]
        for row in rows:
            for marker in leak_markers:
                assert marker not in row["prompt"]

    def test_completions_parse_under_the_response_grammar(self, tmp_path):
        _, _, path, _ = self.build(tmp_path)
        for line in path.read_text().splitlines():
            row = json.loads(line)
            verdict = parse_critic_response(row["completion"], n_candidates=5)
            assert verdict.parse_failed is False
            assert row["prompt"].endswith("### Output:")

    def test_export_is_deterministic(self, tmp_path):
        _, _, path_a, _ = self.build(tmp_path / "a")
        _, _, path_b, _ = self.build(tmp_path / "b")
        assert path_a.read_bytes() == path_b.read_bytes()

    def test_no_training_items_rejected(self, tmp_path):
        docs, records = synthesize_corpus(SynthConfig(n_docs=2), 3)
        items = generate_questions(records, GenConfig(), 3)  # split never assigned
        with pytest.raises(CriticError):
            export_critic_training(items, docs, 5, tmp_path / "x.jsonl")


def test_critic_accuracy():
    chosen = {"q1": "a", "q2": "b", "q3": "c"}
    gold = {"q1": "a", "q2": "a", "q3": "c"}
    assert critic_accuracy(chosen, gold) == pytest.approx(2 / 3)
    with pytest.raises(CriticError):
        critic_accuracy({}, {})
    with pytest.raises(CriticError, match="q9"):
        critic_accuracy({"q9": "a"}, gold)
