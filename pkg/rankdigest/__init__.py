"""Summarize-then-rank document reranking."""

__version__ = "0.1.0"
