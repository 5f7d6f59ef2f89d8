"""Tests for the resumable summarize-then-rank pipeline."""

import pytest

from rankdigest.config import PipelineConfig, RerankerSpec, SummarizerSpec, SyntheticConfig, WindowPlan
from rankdigest.corpus_io import read_run
from rankdigest.errors import ConfigError, StageError
from rankdigest.pipeline import run_pipeline
from rankdigest.policy import PolicyParams, save_checkpoint
from rankdigest.synthetic import generate_synthetic, write_synthetic


@pytest.fixture
def dataset_dir(tmp_path):
    directory = tmp_path / "data"
    write_synthetic(generate_synthetic(SyntheticConfig(queries=6, filler_vocabulary=200)), directory)
    return directory


def _config(dataset_dir, out, **updates):
    return PipelineConfig(
        corpus=dataset_dir / "corpus.jsonl",
        queries=dataset_dir / "queries.tsv",
        qrels=dataset_dir / "qrels.txt",
        output_dir=out,
        **updates,
    )


def test_oracle_pipeline_is_ideal(dataset_dir, tmp_path):
    """Test oracle reranking of full retrieval reaches the ideal ordering."""
    result = run_pipeline(_config(dataset_dir, tmp_path / "run", reranker=RerankerSpec(kind="oracle")))
    assert result.report.means["ndcg@10"] == pytest.approx(1.0, abs=1e-6)
    assert result.report.means["map@100"] == pytest.approx(1.0, abs=1e-6)
    assert len(result.report.per_query) == 6
    for stage in ("retrieve", "summarize", "rerank", "eval"):
        assert result.artifacts[stage].exists()
    assert (tmp_path / "run" / "config.yaml").exists()


def test_rerun_reuses_every_stage(dataset_dir, tmp_path):
    """Test an unchanged rerun skips all stages with identical metrics."""
    cfg = _config(dataset_dir, tmp_path / "run")
    first = run_pipeline(cfg)
    second = run_pipeline(cfg)
    assert first.skipped == []
    assert second.skipped == ["retrieve", "summarize", "rerank", "eval"]
    assert second.report.per_query == first.report.per_query


def test_changed_window_reruns_downstream(dataset_dir, tmp_path):
    """Test a new window plan reuses retrieval and summaries only."""
    run_pipeline(_config(dataset_dir, tmp_path / "run"))
    result = run_pipeline(_config(dataset_dir, tmp_path / "run", window=WindowPlan(window_size=5, step=2)))
    assert result.skipped[:2] == ["retrieve", "summarize"]
    assert "rerank" not in result.skipped


def test_force_recomputes(dataset_dir, tmp_path):
    """Test force ignores the stage manifest."""
    cfg = _config(dataset_dir, tmp_path / "run")
    run_pipeline(cfg)
    assert run_pipeline(cfg, force=True).skipped == []


def test_deterministic_outputs(dataset_dir, tmp_path):
    """Test two fresh runs write the same reranked lists."""
    first = run_pipeline(_config(dataset_dir, tmp_path / "a"))
    second = run_pipeline(_config(dataset_dir, tmp_path / "b"))
    assert read_run(first.artifacts["rerank"]) == read_run(second.artifacts["rerank"])
    assert first.report.per_query == second.report.per_query


def test_policy_summarizer_pipeline(dataset_dir, tmp_path):
    """Test the policy backend runs end to end with the lexical reranker."""
    checkpoint = tmp_path / "policy.txt"
    save_checkpoint(PolicyParams.zeros(), checkpoint)
    cfg = _config(dataset_dir, tmp_path / "run", summarizer=SummarizerSpec(kind="policy", checkpoint=checkpoint))
    result = run_pipeline(cfg)
    assert 0.0 <= result.report.means["ndcg@10"] <= 1.0


def test_failed_stage_keeps_earlier_artifacts(dataset_dir, tmp_path):
    """Test a failing summarizer reports its stage and leaves the retrieval run."""
    checkpoint = tmp_path / "broken.txt"
    checkpoint.write_text("not a checkpoint\n", encoding="utf-8")
    cfg = _config(dataset_dir, tmp_path / "run", summarizer=SummarizerSpec(kind="policy", checkpoint=checkpoint))
    with pytest.raises(StageError) as exc_info:
        run_pipeline(cfg)
    assert exc_info.value.stage == "summarize"
    assert (tmp_path / "run" / "run.bm25.txt").exists()
    assert not (tmp_path / "run" / "summaries.jsonl").exists()


def test_missing_inputs(tmp_path):
    """Test missing dataset files fail before any stage."""
    cfg = PipelineConfig(
        corpus=tmp_path / "c", queries=tmp_path / "q", qrels=tmp_path / "r", output_dir=tmp_path / "o"
    )
    with pytest.raises(ConfigError):
        run_pipeline(cfg)
    assert not (tmp_path / "o").exists()
