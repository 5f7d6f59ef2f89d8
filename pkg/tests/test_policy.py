"""Tests for the extractive summarization policy."""

import math

import numpy as np
import pytest

from rankdigest.errors import CheckpointError, IoFailure
from rankdigest.model import Query
from rankdigest.policy import (
    CONTINUE,
    INCLUDE,
    REJECT,
    SKIP,
    DecodeCounter,
    DocFeatures,
    FeatureCache,
    PolicyParams,
    PolicySummarizer,
    enumerate_rollouts,
    features,
    free_tokens,
    greedy_rollout,
    load_checkpoint,
    render_summary,
    rollout_log_prob,
    sample_rollouts,
    save_checkpoint,
    teacher_labels,
)
from rankdigest.summarize import SAFEGUARD_PHRASE


def _feats(overlaps=(0.0, 0.5, 0.25, 1.0, 0.5), seed=0):
    rng = np.random.default_rng(seed)
    n = len(overlaps)
    return DocFeatures(
        doc_id="d",
        sentences=tuple(f"Sentence number {i}." for i in range(n)),
        gate=np.array([1.0, max(overlaps), sum(overlaps) / n]),
        sentence=rng.uniform(0.0, 1.0, size=(n, 5)),
        overlaps=tuple(overlaps),
    )


def _random_params(seed):
    rng = np.random.default_rng(seed)
    return PolicyParams.from_flat(rng.normal(0.0, 1.0, size=8))


def test_params_shape_checked():
    """Test weight vectors must have the right sizes."""
    with pytest.raises(ValueError):
        PolicyParams(np.zeros(2), np.zeros(5))
    params = PolicyParams.from_flat(np.arange(8.0))
    assert params.gate_weights.tolist() == [0.0, 1.0, 2.0]
    assert params.flat().tolist() == list(np.arange(8.0))


def test_features_of_document(docs, index):
    """Test sentence overlap and gate features."""
    feats = features(Query("q1", "apple pie"), docs[0], index)
    assert len(feats) == 3
    assert feats.overlaps == (1.0, 0.5, 0.0)
    assert feats.gate.tolist() == pytest.approx([1.0, 1.0, 0.5])
    assert feats.sentence[:, 0].tolist() == [1.0, 1.0, 1.0]
    assert feats.sentence[:, 3].tolist() == pytest.approx([1.0, 0.5, 1.0 / 3.0])
    assert feats.sentence[0, 2] == pytest.approx(1.0)


def test_feature_cache_reuses(corpus_map, index):
    """Test cached features are computed once per pair."""
    cache = FeatureCache(index, corpus_map)
    query = Query("q1", "apple pie")
    assert cache.get(query, "d1") is cache.get(query, "d1")


def test_enumeration_sums_to_one():
    """Test rollout probabilities form a distribution."""
    feats = _feats()
    for seed in range(5):
        total = sum(prob for _, prob in enumerate_rollouts(_random_params(seed), feats, budget=2))
        assert total == pytest.approx(1.0, abs=1e-12)


def test_zero_weights_log_prob():
    """Test every free token has probability one half under zero weights."""
    feats = _feats()
    params = PolicyParams.zeros()
    assert rollout_log_prob(params, feats, (REJECT,)) == pytest.approx(math.log(0.5))
    included_three = (CONTINUE, INCLUDE, INCLUDE, INCLUDE, SKIP, SKIP)
    assert rollout_log_prob(params, feats, included_three, budget=3) == pytest.approx(4 * math.log(0.5))
    skipped = (CONTINUE, SKIP, SKIP, SKIP, SKIP, SKIP)
    assert rollout_log_prob(params, feats, skipped, budget=3) == pytest.approx(6 * math.log(0.5))


def test_forced_tokens_excluded():
    """Test tokens after the budget is met are forced and carry no features."""
    phi, actions, forced = free_tokens(_feats(), (CONTINUE, INCLUDE, SKIP, INCLUDE, SKIP, SKIP), budget=2)
    assert forced == (False, False, False, False, True, True)
    assert phi.shape == (4, 8)
    assert actions.tolist() == [1.0, 1.0, 0.0, 1.0]


def test_free_tokens_validation():
    """Test wrong lengths and includes past the budget are refused."""
    feats = _feats()
    with pytest.raises(ValueError):
        free_tokens(feats, (CONTINUE, INCLUDE), budget=3)
    with pytest.raises(ValueError):
        free_tokens(feats, (CONTINUE, INCLUDE, INCLUDE, INCLUDE, INCLUDE, SKIP), budget=3)
    with pytest.raises(ValueError):
        free_tokens(feats, (), budget=3)


def test_render_summary():
    """Test kept sentences in order and the safeguard phrase otherwise."""
    feats = _feats()
    assert render_summary(feats, (REJECT,)) == SAFEGUARD_PHRASE
    assert render_summary(feats, (CONTINUE, SKIP, SKIP, SKIP, SKIP, SKIP)) == SAFEGUARD_PHRASE
    assert render_summary(feats, (CONTINUE, SKIP, INCLUDE, SKIP, INCLUDE, SKIP)) == (
        "Sentence number 1. Sentence number 3."
    )


def test_teacher_labels():
    """Test heuristic labels with a budget."""
    feats = _feats()
    assert teacher_labels(feats, tau=0.2, budget=3) == (CONTINUE, SKIP, INCLUDE, INCLUDE, INCLUDE, SKIP)
    assert teacher_labels(feats, tau=0.9, budget=3) == (CONTINUE, SKIP, SKIP, SKIP, INCLUDE, SKIP)
    assert teacher_labels(_feats(overlaps=(0.0, 0.0)), tau=0.2) == (REJECT,)


def test_greedy_ties_include():
    """Test zero weights decode CONTINUE and fill the budget from the top."""
    rollout = greedy_rollout(PolicyParams.zeros(), _feats(), budget=2)
    assert rollout.decisions == (CONTINUE, INCLUDE, INCLUDE, SKIP, SKIP, SKIP)
    assert rollout.free_token_count == 3
    assert not rollout.rejected


def test_sampling_reproducible():
    """Test the same seed gives the same group and counts decodes."""
    feats = _feats()
    params = _random_params(1)
    counter = DecodeCounter()
    first = sample_rollouts(params, feats, 8, seed=11, counter=counter)
    second = sample_rollouts(params, feats, 8, seed=11, counter=counter)
    assert [r.decisions for r in first] == [r.decisions for r in second]
    assert counter.count == 16
    assert counter.reset() == 16
    assert counter.count == 0
    for rollout in first:
        assert rollout.log_prob == pytest.approx(rollout_log_prob(params, feats, rollout.decisions))
        assert sum(rollout.decisions[1:]) <= 3


def test_sampling_needs_a_group():
    """Test groups need at least two rollouts."""
    with pytest.raises(ValueError):
        sample_rollouts(PolicyParams.zeros(), _feats(), 1, seed=0)


def test_strong_gate_rejects():
    """Test a strongly negative gate bias always rejects."""
    params = PolicyParams(np.array([-50.0, 0.0, 0.0]), np.zeros(5))
    for rollout in sample_rollouts(params, _feats(), 4, seed=3):
        assert rollout.rejected
        assert rollout.text == SAFEGUARD_PHRASE


def test_policy_summarizer(docs, index):
    """Test the greedy summarizer extracts document sentences."""
    params = PolicyParams(np.array([0.0, 5.0, 0.0]), np.array([-2.0, 6.0, 0.0, 0.0, 0.0]))
    summarizer = PolicySummarizer(params, index)
    text = summarizer.summarize(Query("q1", "apple pie"), docs[0])
    assert text.startswith("Apple pie Apple pie recipe")
    assert "Serve warm" not in text
    assert summarizer.summarize(Query("q1", "apple pie"), docs[3]) == SAFEGUARD_PHRASE


def test_checkpoint_round_trip(tmp_path):
    """Test weights survive a save and load exactly."""
    params = _random_params(4)
    path = tmp_path / "policy.txt"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path)
    assert loaded.flat().tolist() == params.flat().tolist()


def test_checkpoint_errors(tmp_path):
    """Test bad headers, missing vectors and missing files."""
    path = tmp_path / "policy.txt"
    path.write_text("something else\n", encoding="utf-8")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    path.write_text("rankdigest-policy v1\ngate_weights\t1 2 3\n", encoding="utf-8")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    path.write_text("rankdigest-policy v1\ngate_weights\t1 2\ninclude_weights\t1 2 3 4 5\n", encoding="utf-8")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    with pytest.raises(IoFailure):
        load_checkpoint(tmp_path / "absent.txt")


def test_checkpoint_refuses_nan(tmp_path):
    """Test non-finite weights are never written."""
    params = PolicyParams(np.array([np.nan, 0.0, 0.0]), np.zeros(5))
    with pytest.raises(CheckpointError):
        save_checkpoint(params, tmp_path / "policy.txt")
