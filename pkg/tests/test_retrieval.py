"""Tests for BM25 retrieval."""

import math
import random
from collections import Counter

import pytest

from rankdigest.config import Bm25Params
from rankdigest.errors import EmptyCorpus
from rankdigest.model import Document, Query
from rankdigest.retrieval import (
    InvertedIndex,
    analyze,
    bm25_term_score,
    build_index,
    first_p,
    retrieve_top_n,
    tokenize,
)


def _brute_force_scores(docs, query_text, params):
    tokenized = {d.doc_id: tokenize(f"{d.title} {d.body}") for d in docs}
    avg = sum(len(t) for t in tokenized.values()) / len(tokenized)
    n = len(docs)
    scores = {}
    for doc_id, terms in tokenized.items():
        counts = Counter(terms)
        score = 0.0
        for term in tokenize(query_text):
            tf = counts[term]
            if not tf:
                continue
            df = sum(1 for t in tokenized.values() if term in t)
            idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
            norm = params.k1 * (1.0 - params.b + params.b * len(terms) / avg)
            score += idf * tf * (params.k1 + 1.0) / (tf + norm)
        if score > 0:
            scores[doc_id] = score
    return scores


def test_tokenize():
    """Test lowercased letter and digit runs."""
    assert tokenize("Hello, World_foo 42!") == ["hello", "world", "foo", "42"]


def test_analyze_options():
    """Test optional stopword removal and suffix stripping."""
    assert analyze("The cats jumped") == ["the", "cats", "jumped"]
    assert analyze("The cats jumped", stem=True, stopwords=True) == ["cat", "jump"]


def _check_against_brute_force(rng, trials, max_docs):
    vocab = [f"w{i}" for i in range(30)]
    for trial in range(trials):
        docs = [
            Document(f"d{i:02d}", "", " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 40))))
            for i in range(rng.randint(1, max_docs))
        ]
        index = build_index(docs)
        params = Bm25Params(k1=rng.uniform(0.5, 2.0), b=rng.uniform(0.0, 1.0))
        query = Query("q", " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 4))))
        expected = _brute_force_scores(docs, query.text, params)
        n = rng.randint(1, max_docs)
        ranked = retrieve_top_n(index, query, n, params)
        ranked.validate()
        order = [doc_id for doc_id, _ in sorted(expected.items(), key=lambda item: (-item[1], item[0]))]
        assert ranked.doc_ids() == order[:n]
        for entry in ranked.entries:
            assert entry.score == pytest.approx(expected[entry.doc_id], rel=1e-9)


def test_bm25_matches_brute_force():
    """Test indexed BM25 against a direct computation on random corpora."""
    _check_against_brute_force(random.Random(3), trials=20, max_docs=25)


@pytest.mark.slow
def test_bm25_matches_brute_force_at_scale():
    """Test exact order against brute force on 200 corpora of up to 50 documents."""
    _check_against_brute_force(random.Random(4), trials=200, max_docs=50)


def test_bm25_term_score_monotone_in_tf():
    """Test one more occurrence of a query term never lowers the score, other statistics fixed."""
    rng = random.Random(5)
    for _ in range(1000):
        params = Bm25Params(k1=rng.uniform(0.1, 3.0), b=rng.uniform(0.0, 1.0))
        idf = rng.uniform(0.01, 5.0)
        tf = rng.randint(0, 50)
        length = rng.randint(max(tf, 1), 500)
        avg_length = rng.uniform(1.0, 300.0)
        lower = bm25_term_score(idf, tf, length, avg_length, params)
        assert bm25_term_score(idf, tf + 1, length, avg_length, params) >= lower


def test_repeated_query_terms_count_twice(index):
    """Test each query occurrence adds its term score."""
    once = retrieve_top_n(index, Query("q", "apple"), 4)
    twice = retrieve_top_n(index, Query("q", "apple apple"), 4)
    assert once.doc_ids() == twice.doc_ids()
    for a, b in zip(once.entries, twice.entries):
        assert b.score == pytest.approx(2 * a.score)


def test_no_match_gives_empty_list(index):
    """Test a query with no indexed term."""
    assert len(retrieve_top_n(index, Query("q", "zebra"), 10)) == 0


def test_topn_validation(index):
    """Test n must be positive."""
    with pytest.raises(ValueError):
        retrieve_top_n(index, Query("q", "apple"), 0)


def test_empty_corpus():
    """Test indexing nothing fails."""
    with pytest.raises(EmptyCorpus):
        build_index([])


def test_relevant_doc_first(index):
    """Test the matching document leads the list."""
    ranked = retrieve_top_n(index, Query("q", "apple pie"), 10)
    assert ranked.doc_ids()[0] == "d1"
    assert set(ranked.doc_ids()) == {"d1", "d3"}


def test_index_save_and_load(tmp_path, index):
    """Test a persisted index retrieves identically."""
    index.save(tmp_path / "idx")
    loaded = InvertedIndex.load(tmp_path / "idx")
    assert loaded.doc_count == index.doc_count
    assert loaded.terms() == index.terms()
    query = Query("q", "apple oil rain")
    assert retrieve_top_n(loaded, query, 4) == retrieve_top_n(index, query, 4)


def test_first_p():
    """Test truncation to the first k whitespace tokens."""
    doc = Document("d", "Title", "one  two\nthree four")
    assert first_p(doc, 3) == "Title one two"
    assert first_p(doc, 100) == "Title one two three four"
    with pytest.raises(ValueError):
        first_p(doc, 0)
