"""Tests for the HTTP service."""

import pytest
from fastapi.testclient import TestClient

from rankdigest.corpus_io import write_qrels, write_run
from rankdigest.errors import BackendUnavailable
from rankdigest.model import RankedList
from rankdigest.rerank import LexicalReranker
from rankdigest.server import REQUEST_ID_HEADER, create_app
from rankdigest.summarize import SAFEGUARD_PHRASE, FirstPSummarizer


class DownSummarizer:
    name = "down"

    def summarize(self, query, doc):
        raise BackendUnavailable("down", "connection refused")

    def probe(self):
        return None


@pytest.fixture
def client(index):
    return TestClient(create_app(summarizer=FirstPSummarizer(4), reranker=LexicalReranker(index)))


def test_healthz(client):
    """Test the health endpoint and a generated request id."""
    response = client.get("/healthz")
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "ok"
    assert response.headers[REQUEST_ID_HEADER] == body["request_id"]


def test_request_id_echo(client):
    """Test a caller-supplied request id comes back."""
    response = client.get("/healthz", headers={REQUEST_ID_HEADER: "abc-123"})
    assert response.headers[REQUEST_ID_HEADER] == "abc-123"
    assert response.json()["request_id"] == "abc-123"


def test_summarize(client):
    """Test a FirstP summary over the wire."""
    response = client.post("/v1/summarize", json={"query": "apple", "document": "one two three four five six"})
    assert response.status_code == 200
    body = response.json()
    assert body["summary"] == "one two three four"
    assert body["is_safeguard"] is False
    assert body["backend"] == "firstp-4"


def test_summarize_empty_document(client):
    """Test an empty document yields the safeguard phrase."""
    body = client.post("/v1/summarize", json={"query": "apple", "document": ""}).json()
    assert body["summary"] == SAFEGUARD_PHRASE
    assert body["is_safeguard"] is True


def test_rerank_single_candidate(client):
    """Test one candidate comes back as [1]."""
    response = client.post("/v1/rerank", json={"query": "apple", "candidates": ["anything"]})
    assert response.status_code == 200
    assert response.json()["order"] == [1]


def test_rerank_order(client):
    """Test the lexical order with the safeguard last."""
    candidates = ["Rain in the valley.", SAFEGUARD_PHRASE, "Apple pie recipe."]
    response = client.post("/v1/rerank", json={"query": "apple pie", "candidates": candidates})
    assert response.json()["order"] == [3, 1, 2]


def test_rerank_rejects_empty(client):
    """Test an empty candidate list is a validation error."""
    assert client.post("/v1/rerank", json={"query": "apple", "candidates": []}).status_code == 422


def test_backend_down_is_503(index):
    """Test an unavailable backend maps to 503 with a structured error."""
    client = TestClient(create_app(summarizer=DownSummarizer(), reranker=LexicalReranker(index)))
    response = client.post(
        "/v1/summarize", json={"query": "apple", "document": "text"}, headers={REQUEST_ID_HEADER: "r1"}
    )
    assert response.status_code == 503
    body = response.json()
    assert body["error"]["type"] == "BackendUnavailable"
    assert body["error"]["stage"] == "summarize"
    assert body["request_id"] == "r1"


def test_evaluate(client, tmp_path, qrels):
    """Test evaluation of files on the server's disk."""
    write_run([RankedList.from_order("q1", ["d1", "d3"], "t")], tmp_path / "run.txt")
    write_qrels(qrels, tmp_path / "qrels.txt")
    response = client.post(
        "/v1/evaluate", json={"run_path": str(tmp_path / "run.txt"), "qrels_path": str(tmp_path / "qrels.txt")}
    )
    assert response.status_code == 200
    assert response.json()["means"]["ndcg@10"] == pytest.approx(1.0)


def test_evaluate_missing_file(client, tmp_path):
    """Test a missing run file maps to 404."""
    response = client.post(
        "/v1/evaluate", json={"run_path": str(tmp_path / "none.txt"), "qrels_path": str(tmp_path / "none.txt")}
    )
    assert response.status_code == 404
    assert response.json()["error"]["type"] == "IoFailure"


def test_create_app_needs_backends():
    """Test the app cannot be built from nothing."""
    with pytest.raises(ValueError):
        create_app()
