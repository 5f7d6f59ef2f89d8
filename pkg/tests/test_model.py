"""Tests for the domain model."""

import pytest

from rankdigest.errors import RunInvariantError
from rankdigest.model import (
    Document,
    Label,
    LabeledCandidate,
    QrelsTable,
    Query,
    RankEntry,
    RankedList,
    RlInstance,
    Summary,
)


def test_document_text_joins_title_and_body():
    """Test title and body joined by one space."""
    assert Document("d", "Title", "Body text").text == "Title Body text"
    assert Document("d", "", "Body text").text == "Body text"


def test_qrels_unjudged_is_zero(qrels):
    """Test unjudged pairs read as grade 0."""
    assert qrels.grade("q1", "d1") == 2
    assert qrels.grade("q1", "missing") == 0
    assert qrels.grade("nope", "d1") == 0
    assert not qrels.has_query("nope")


def test_qrels_add_returns_previous():
    """Test repeated judgments replace the earlier grade."""
    table = QrelsTable()
    assert table.add("q", "d", 1) is None
    assert table.add("q", "d", 3) == 1
    assert table.grade("q", "d") == 3
    assert len(table) == 1


def test_qrels_rejects_negative_grade():
    """Test negative grades are refused."""
    with pytest.raises(ValueError):
        QrelsTable().add("q", "d", -1)


def test_qrels_pools(qrels):
    """Test positive and negative pools split on the threshold."""
    assert qrels.positives("q1") == ["d1", "d3"]
    assert qrels.negatives("q1") == ["d2", "d4"]
    assert qrels.positives("q1", threshold=2) == ["d1"]


def test_qrels_restrict(qrels):
    """Test restricting judgments to a candidate list."""
    restricted = qrels.restrict("q1", ["d3", "d4"])
    assert restricted.judged("q1") == {"d3": 1, "d4": 0}
    assert not restricted.has_query("q2")


def test_ranked_list_from_scores_breaks_ties_by_doc_id():
    """Test equal scores are ordered by ascending doc_id."""
    ranked = RankedList.from_scores("q", [("b", 1.0), ("a", 1.0), ("c", 2.0)], "t")
    assert ranked.doc_ids() == ["c", "a", "b"]
    assert [e.rank for e in ranked.entries] == [1, 2, 3]
    ranked.validate()


def test_ranked_list_from_order_scores():
    """Test synthetic scores n..1."""
    ranked = RankedList.from_order("q", ["x", "y", "z"], "t")
    assert [e.score for e in ranked.entries] == [3.0, 2.0, 1.0]
    ranked.validate()


def test_ranked_list_rejects_rank_gap():
    """Test ranks must run 1..n."""
    ranked = RankedList("q", (RankEntry("a", 2.0, 1), RankEntry("b", 1.0, 3)))
    with pytest.raises(RunInvariantError):
        ranked.validate()


def test_ranked_list_rejects_duplicate():
    """Test duplicate doc ids are refused."""
    ranked = RankedList("q", (RankEntry("a", 2.0, 1), RankEntry("a", 1.0, 2)))
    with pytest.raises(RunInvariantError):
        ranked.validate()


def test_ranked_list_rejects_increasing_scores():
    """Test scores may not increase down the list."""
    ranked = RankedList("q", (RankEntry("a", 1.0, 1), RankEntry("b", 2.0, 2)))
    with pytest.raises(RunInvariantError):
        ranked.validate()


def test_summary_requires_text():
    """Test empty summaries are refused."""
    with pytest.raises(ValueError):
        Summary("d", "q", "", False, "firstp-128")


def test_rl_instance_needs_both_labels():
    """Test an instance without a negative is invalid."""
    candidates = [LabeledCandidate("a", Label.POSITIVE), LabeledCandidate("b", Label.POSITIVE)]
    instance = RlInstance(Query("q", "x"), candidates)
    with pytest.raises(ValueError):
        instance.validate()


def test_rl_instance_background_alignment():
    """Test background summaries must follow candidate order."""
    candidates = [LabeledCandidate("a", Label.POSITIVE), LabeledCandidate("b", Label.NEGATIVE)]
    background = [Summary("b", "q", "text", False, "x"), Summary("a", "q", "text", False, "x")]
    instance = RlInstance(Query("q", "x"), candidates, background)
    with pytest.raises(ValueError):
        instance.validate()
    instance.background = list(reversed(background))
    instance.validate()
    assert instance.positive_positions() == [0]
    assert instance.negative_positions() == [1]
