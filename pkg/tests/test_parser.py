"""Tests for reranker output parsing and sentence splitting."""

import random

import pytest

from rankdigest.parser import (
    parse_permutation,
    parse_permutation_with_repairs,
    render_permutation,
    sentence_split,
)


def test_parse_clean_permutation():
    """Test a well-formed ranking."""
    assert parse_permutation("[3] > [1] > [2]", 3) == [3, 1, 2]


def test_parse_tolerates_noise():
    """Test surrounding prose and spacing inside brackets."""
    assert parse_permutation("Sure! [ 2 ] then [1], finally [3].", 3) == [2, 1, 3]


def test_parse_appends_missing():
    """Test missing ids are appended in window order."""
    assert parse_permutation("[4] > [2]", 5) == [4, 2, 1, 3, 5]


def test_parse_counts_repairs():
    """Test duplicates, out-of-range ids and missing ids each count as a repair."""
    order, repairs = parse_permutation_with_repairs("[2] > [2] > [9] > [0]", 3)
    assert order == [2, 1, 3]
    assert repairs == 5


def test_parse_huge_index_is_out_of_range():
    """Test an index thousands of digits long counts as one out-of-range repair."""
    order, repairs = parse_permutation_with_repairs(f"[{'9' * 5000}] > [2] > [1]", 3)
    assert order == [2, 1, 3]
    assert repairs == 2


def test_parse_leading_zeros():
    """Test zero-padded ids parse to their value."""
    assert parse_permutation("[002] > [0001] > [3]", 3) == [2, 1, 3]
    assert parse_permutation_with_repairs("[0000]", 1) == ([1], 2)


def test_parse_empty_output():
    """Test empty output falls back to the incoming order."""
    assert parse_permutation("", 4) == [1, 2, 3, 4]
    assert parse_permutation(None, 2) == [1, 2]


def test_parse_rejects_empty_window():
    """Test a window needs at least one candidate."""
    with pytest.raises(ValueError):
        parse_permutation("[1]", 0)


def test_parse_always_returns_permutation():
    """Test arbitrary strings always yield a permutation."""
    rng = random.Random(13)
    alphabet = "[]>0123456789 ,abc\n"
    for _ in range(10000):
        window_len = rng.randint(1, 20)
        raw = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 60)))
        order = parse_permutation(raw, window_len)
        assert sorted(order) == list(range(1, window_len + 1))


def test_render_then_parse():
    """Test a rendered ordering parses back unchanged."""
    order = [5, 3, 1, 2, 4]
    assert render_permutation(order) == "[5] > [3] > [1] > [2] > [4]"
    assert parse_permutation(render_permutation(order), 5) == order


def test_sentence_split_basic():
    """Test splitting on terminal punctuation."""
    assert sentence_split("A b c. D e f!") == ["A b c.", "D e f!"]


def test_sentence_split_empty():
    """Test empty and whitespace-only input."""
    assert sentence_split("") == []
    assert sentence_split("   \n ") == []


def test_sentence_split_short_fragments_merge():
    """Test short fragments join their neighbours."""
    assert sentence_split("Hi. Yes.") == ["Hi. Yes."]
    assert sentence_split("Ok. The cat sat down. No.") == ["Ok. The cat sat down. No."]


def test_sentence_split_without_punctuation():
    """Test text without boundaries stays one sentence."""
    assert sentence_split("one two three four") == ["one two three four"]
