"""Tests for configuration loading."""

import pytest
import yaml
from pydantic import ValidationError

from rankdigest.config import (
    CONFIG_ENV,
    Bm25Params,
    PipelineConfig,
    RlDataConfig,
    SummarizerSpec,
    SyntheticConfig,
    WindowPlan,
    deep_merge,
    dump_config,
    load_config,
)
from rankdigest.errors import ConfigError


def _write(path, data):
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def test_defaults():
    """Test evaluation-protocol defaults."""
    cfg = PipelineConfig(corpus="c", queries="q", qrels="r")
    assert cfg.topk == 100
    assert (cfg.window.window_size, cfg.window.step) == (20, 10)
    assert (cfg.bm25.k1, cfg.bm25.b) == (0.9, 0.4)
    assert cfg.summarizer.name == "firstp-128"
    assert cfg.grpo.group_size == 8
    assert cfg.grpo.penalty_lambda == 0.25


def test_window_step_bounds():
    """Test the step may not exceed the window."""
    with pytest.raises(ValidationError):
        WindowPlan(window_size=5, step=6)
    with pytest.raises(ValidationError):
        WindowPlan(window_size=5, step=0)


def test_bm25_bounds():
    """Test BM25 parameter ranges."""
    with pytest.raises(ValidationError):
        Bm25Params(k1=0.0)
    with pytest.raises(ValidationError):
        Bm25Params(b=1.5)


def test_rl_data_k_below_n():
    """Test the injection count must be smaller than the list size."""
    with pytest.raises(ValidationError):
        RlDataConfig(n=3, k=3)


def test_summarizer_backend_settings():
    """Test policy and remote summarizers need their settings."""
    with pytest.raises(ValidationError):
        SummarizerSpec(kind="policy")
    with pytest.raises(ValidationError):
        SummarizerSpec(kind="remote")


def test_synthetic_sentence_range():
    """Test sentence bounds are ordered."""
    with pytest.raises(ValidationError):
        SyntheticConfig(min_sentences=20, max_sentences=10)


def test_synthetic_lead_fits_query_terms():
    """Test hard-negative lead sentences must hold one sentence per query term."""
    with pytest.raises(ValidationError):
        SyntheticConfig(query_terms=4, lead_sentences=3)


def test_unknown_keys_rejected(tmp_path):
    """Test typos in the file are reported."""
    path = _write(tmp_path / "cfg.yaml", {"corpus": "c", "queries": "q", "qrels": "r", "topkk": 5})
    with pytest.raises(ConfigError):
        load_config(path)


def test_load_with_overrides(tmp_path):
    """Test CLI overrides win over the file and None leaves it alone."""
    path = _write(
        tmp_path / "cfg.yaml",
        {"corpus": "c", "queries": "q", "qrels": "r", "topk": 50, "summarizer": {"kind": "firstp", "k": 64}},
    )
    cfg = load_config(path, {"topk": None, "summarizer": {"k": 256, "kind": None}, "reranker": {"kind": "oracle"}})
    assert cfg.topk == 50
    assert cfg.summarizer.k == 256
    assert cfg.summarizer.kind == "firstp"
    assert cfg.reranker.kind == "oracle"


def test_env_config(tmp_path, monkeypatch):
    """Test the config path falls back to the environment."""
    path = _write(tmp_path / "cfg.yaml", {"corpus": "c", "queries": "q", "qrels": "r", "seed": 3})
    monkeypatch.setenv(CONFIG_ENV, str(path))
    assert load_config().seed == 3


def test_invalid_yaml(tmp_path):
    """Test unparsable YAML is a configuration error."""
    path = tmp_path / "cfg.yaml"
    path.write_text("corpus: [unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)


def test_top_level_must_be_mapping(tmp_path):
    """Test a YAML list is refused."""
    path = tmp_path / "cfg.yaml"
    path.write_text("- a\n- b\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)


def test_deep_merge_ignores_empty_overrides():
    """Test nested overrides of only None leave the base untouched."""
    base = {"a": 1, "nested": {"x": 1}}
    assert deep_merge(base, {"a": None, "nested": {"x": None}, "other": {"y": None}}) == base
    assert deep_merge(base, {"nested": {"y": 2}}) == {"a": 1, "nested": {"x": 1, "y": 2}}


def test_validate_paths(tmp_path):
    """Test missing dataset files are reported before any work."""
    (tmp_path / "c").write_text("", encoding="utf-8")
    cfg = PipelineConfig(corpus=tmp_path / "c", queries=tmp_path / "q", qrels=tmp_path / "r")
    with pytest.raises(ConfigError):
        cfg.validate_paths()


def test_dump_config_reloads(tmp_path):
    """Test a dumped config loads back to the same values."""
    cfg = PipelineConfig(corpus="c", queries="q", qrels="r", topk=7)
    path = tmp_path / "cfg.yaml"
    path.write_text(dump_config(cfg), encoding="utf-8")
    assert load_config(path) == cfg
