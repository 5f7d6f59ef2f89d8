"""Shared fixtures: a hand-written four-document collection."""

import pytest

from rankdigest.model import Document, QrelsTable, Query
from rankdigest.retrieval import build_index

DOCS = [
    Document(
        "d1",
        "Apple pie",
        "Apple pie recipe with apples and cinnamon. Bake the pie for forty minutes. Serve warm with cream.",
    ),
    Document(
        "d2",
        "Car repair",
        "Engine oil change steps for old cars. Check the tire pressure every month. Drive safely at night.",
    ),
    Document(
        "d3",
        "Apple orchard",
        "The orchard grows many apple trees. Pickers harvest fruit every autumn season. Cider is pressed nearby.",
    ),
    Document(
        "d4",
        "Weather",
        "Rain is expected tomorrow in the valley. Temperatures stay cool all week long. Winds blow from the west.",
    ),
]


@pytest.fixture
def docs():
    return list(DOCS)


@pytest.fixture
def corpus_map():
    return {doc.doc_id: doc for doc in DOCS}


@pytest.fixture
def index():
    return build_index(DOCS)


@pytest.fixture
def queries():
    return [Query("q1", "apple pie"), Query("q2", "engine oil")]


@pytest.fixture
def qrels():
    table = QrelsTable()
    table.add("q1", "d1", 2)
    table.add("q1", "d3", 1)
    table.add("q1", "d2", 0)
    table.add("q1", "d4", 0)
    table.add("q2", "d2", 1)
    table.add("q2", "d4", 0)
    return table
