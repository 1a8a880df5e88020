import json

import pytest

from cfrag.corpus import SynthConfig
from cfrag.llmgate import LlmConfig, MockLlmServer
from cfrag.pipeline import (
    PipelineError,
    RunConfig,
    run_ablation,
    run_pipeline,
)
from cfrag.qagen import load_dataset
from mock_brain import make_responder


def config(tmp_path, **kw):
    values = {
        "out_dir": str(tmp_path / kw.pop("sub", "run")),
        "seed": 17,
        "synth": SynthConfig(n_docs=20),
    }
    values.update(kw)
    return RunConfig(**values)


def read_rows(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


class TestOracleRuns:
    def test_gold_reference_bypass_is_perfect(self, tmp_path):
        result = run_pipeline(config(tmp_path, retriever="gold"))
        assert result.report.em == 100.0
        assert result.report.rmse == 0.0
        assert result.report.mae == 0.0
        assert sum(result.report.failures.values()) == 0
        assert result.hard_failures == 0

    def test_rank_one_hit_implies_exact_answer(self, tmp_path):
        result = run_pipeline(config(tmp_path))
        retrieval = read_rows(result.out_dir / "retrieval.jsonl")
        predictions = {r["qa_id"]: r for r in read_rows(result.out_dir / "predictions.jsonl")}
        items = {i.qa_id: i for i in load_dataset(result.out_dir / "dataset.jsonl")}
        for row in retrieval:
            if row["ranking"][0][0] == row["gold_doc_id"]:
                pred = predictions[row["qa_id"]]
                assert pred["failure"] is None
                from cfrag.evalkit import exact_match
                from cfrag.progdsl import answers_from_json

                assert exact_match(
                    answers_from_json(pred["answers"]),
                    items[row["qa_id"]].gold_answers,
                )

    def test_artifacts_written(self, tmp_path):
        result = run_pipeline(config(tmp_path))
        names = {p.name for p in result.out_dir.iterdir()}
        assert {
            "corpus",
            "dataset.jsonl",
            "retrieval.jsonl",
            "critic.jsonl",
            "reasoner.jsonl",
            "predictions.jsonl",
            "report.json",
            "report.txt",
        } <= names
        assert "llm_requests.jsonl" not in names  # no remote stage ran
        n_test = sum(1 for i in load_dataset(result.out_dir / "dataset.jsonl") if i.split == "test")
        assert len(read_rows(result.out_dir / "predictions.jsonl")) == n_test
        assert result.report.n == n_test

    def test_runs_are_byte_reproducible(self, tmp_path):
        a = run_pipeline(config(tmp_path, sub="a"))
        b = run_pipeline(config(tmp_path, sub="b"))
        for name in ("retrieval.jsonl", "predictions.jsonl", "report.json"):
            assert (a.out_dir / name).read_bytes() == (b.out_dir / name).read_bytes()

    def test_stage_stats_present(self, tmp_path):
        result = run_pipeline(config(tmp_path, k=5))
        for key in ("hit@1", "hit@3", "hit@5", "reference_accuracy", "demotions", "zero_queries"):
            assert key in result.stage_stats
        assert result.stage_stats["hit@1"] <= result.stage_stats["hit@5"]


class TestDemotionAndCritic:
    def test_demotion_hurts_plain_retrieval(self, tmp_path):
        base = run_pipeline(config(tmp_path, sub="base"))
        noisy = run_pipeline(config(tmp_path, sub="noisy", demote_gold_prob=1.0))
        assert noisy.stage_stats["demotions"] > 0
        assert noisy.stage_stats["hit@1"] < base.stage_stats["hit@1"]
        assert noisy.report.em < base.report.em

    def test_lexical_critic_recovers_demoted_gold(self, tmp_path):
        none_run = run_pipeline(
            config(tmp_path, sub="none", demote_gold_prob=1.0, critic="none")
        )
        lex_run = run_pipeline(
            config(tmp_path, sub="lex", demote_gold_prob=1.0, critic="lexical")
        )
        assert lex_run.report.em > none_run.report.em
        assert (
            lex_run.stage_stats["reference_accuracy"]
            > none_run.stage_stats["reference_accuracy"]
        )

    def test_demotion_is_per_question_deterministic(self, tmp_path):
        a = run_pipeline(config(tmp_path, sub="a", demote_gold_prob=0.5))
        b = run_pipeline(config(tmp_path, sub="b", demote_gold_prob=0.5))
        rows_a = read_rows(a.out_dir / "retrieval.jsonl")
        rows_b = read_rows(b.out_dir / "retrieval.jsonl")
        assert [r["demoted"] for r in rows_a] == [r["demoted"] for r in rows_b]
        assert 0 < a.stage_stats["demotions"] < len(rows_a)


class TestRemoteStages:
    def test_remote_critic_and_reasoner_against_mock(self, tmp_path):
        local = run_pipeline(config(tmp_path, sub="local", critic="lexical"))
        items = load_dataset(local.out_dir / "dataset.jsonl")
        with MockLlmServer(responder=make_responder(items)) as server:
            remote = run_pipeline(
                config(
                    tmp_path,
                    sub="remote",
                    critic="remote",
                    reasoner="remote",
                    llm=LlmConfig(url=server.url, model="mock", backoff=0.01),
                )
            )
        assert remote.hard_failures == 0
        assert remote.report.em == local.report.em
        log = read_rows(remote.out_dir / "llm_requests.jsonl")
        assert len(log) == 2 * remote.report.n  # one critic + one reasoner call each
        assert all(row["status"] == "ok" for row in log)

    def test_remote_requires_llm_config(self, tmp_path):
        with pytest.raises(PipelineError, match="llm"):
            run_pipeline(config(tmp_path, critic="remote"))


class TestValidation:
    def test_unknown_stage_names(self, tmp_path):
        with pytest.raises(PipelineError):
            run_pipeline(config(tmp_path, critic="vibes"))
        with pytest.raises(PipelineError):
            run_pipeline(config(tmp_path, reasoner="guess"))
        with pytest.raises(PipelineError):
            run_pipeline(config(tmp_path, retriever="bm25"))
        with pytest.raises(PipelineError):
            run_pipeline(config(tmp_path, k=0))
        with pytest.raises(PipelineError):
            run_pipeline(config(tmp_path, demote_gold_prob=1.5))

    def test_corpus_dir_needs_dataset(self, tmp_path):
        with pytest.raises(PipelineError, match="go together"):
            run_pipeline(config(tmp_path, corpus_dir=str(tmp_path)))


class TestAblation:
    def test_table_rows_follow_config_order(self, tmp_path):
        table = run_ablation(
            [
                config(tmp_path, sub="a", name="plain"),
                config(tmp_path, sub="b", name="noisy", demote_gold_prob=1.0),
                config(tmp_path, sub="c", name="noisy+critic", demote_gold_prob=1.0, critic="lexical"),
            ]
        )
        assert [r["name"] for r in table.rows] == ["plain", "noisy", "noisy+critic"]
        text = table.to_text()
        assert "RMSE" in text and "MAE" in text and "EM%" in text

    def test_requires_two_configs(self, tmp_path):
        with pytest.raises(PipelineError, match="two"):
            run_ablation([config(tmp_path)])

    def test_rejects_mismatched_data(self, tmp_path):
        with pytest.raises(PipelineError, match="data settings"):
            run_ablation(
                [
                    config(tmp_path, sub="a", name="a"),
                    config(tmp_path, sub="b", name="b", seed=18),
                ]
            )

    def test_rejects_duplicate_names(self, tmp_path):
        with pytest.raises(PipelineError, match="names"):
            run_ablation([config(tmp_path, sub="a"), config(tmp_path, sub="b")])
