"""First-stage BM25 retrieval over an in-memory inverted index."""

import json
import logging
import math
import re
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from rankdigest.config import Bm25Params
from rankdigest.errors import EmptyCorpus, IoFailure, MalformedRecord
from rankdigest.model import Document, Query, RankedList

logger = logging.getLogger(__name__)

INDEX_FORMAT = "rankdigest-index v1"

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)

_STOPWORDS = frozenset(
    "a an and are as at be by for from has he in is it its of on or that the to was were will with".split()
)
_SUFFIXES = ("ing", "ed", "es", "s")


def tokenize(text: str) -> List[str]:
    """Lowercased maximal runs of Unicode letters and digits."""
    return _TOKEN.findall(text.lower())


def _stem(term: str) -> str:
    for suffix in _SUFFIXES:
        if term.endswith(suffix) and len(term) - len(suffix) >= 3:
            return term[: -len(suffix)]
    return term


def analyze(text: str, stem: bool = False, stopwords: bool = False) -> List[str]:
    """Tokenize, then optionally drop stopwords and strip suffixes."""
    terms = tokenize(text)
    if stopwords:
        terms = [t for t in terms if t not in _STOPWORDS]
    if stem:
        terms = [_stem(t) for t in terms]
    return terms


class InvertedIndex:
    """Term -> postings of (internal id, tf), sorted by internal id. Read-only once built."""

    def __init__(
        self,
        postings: Mapping[str, Sequence[Tuple[int, int]]],
        doc_ids: Sequence[str],
        doc_lengths: Sequence[int],
        stem: bool = False,
        stopwords: bool = False,
    ):
        self._postings: Dict[str, Tuple[Tuple[int, int], ...]] = {
            term: tuple(sorted(plist)) for term, plist in postings.items()
        }
        self._doc_ids: Tuple[str, ...] = tuple(doc_ids)
        self._internal: Dict[str, int] = {doc_id: i for i, doc_id in enumerate(self._doc_ids)}
        self._doc_lengths: Tuple[int, ...] = tuple(doc_lengths)
        self.stem = stem
        self.stopwords = stopwords
        self.doc_count = len(self._doc_ids)
        self.avg_length = sum(self._doc_lengths) / self.doc_count if self.doc_count else 0.0

    def analyze(self, text: str) -> List[str]:
        """Analyze text with the same options the index was built with."""
        return analyze(text, stem=self.stem, stopwords=self.stopwords)

    def postings(self, term: str) -> Tuple[Tuple[int, int], ...]:
        return self._postings.get(term, ())

    def df(self, term: str) -> int:
        return len(self._postings.get(term, ()))

    def idf(self, term: str) -> float:
        """Robertson idf with +1 inside the log, so it never goes negative."""
        df = self.df(term)
        return math.log(1.0 + (self.doc_count - df + 0.5) / (df + 0.5))

    def doc_length(self, internal_id: int) -> int:
        return self._doc_lengths[internal_id]

    def doc_id(self, internal_id: int) -> str:
        return self._doc_ids[internal_id]

    def internal_id(self, doc_id: str) -> int:
        return self._internal[doc_id]

    def has_doc(self, doc_id: str) -> bool:
        return doc_id in self._internal

    def terms(self) -> List[str]:
        return sorted(self._postings)

    def save(self, directory: Union[str, Path]) -> None:
        """Persist as meta.json, docs.tsv and postings.txt (one term per line)."""
        directory = Path(directory)
        try:
            directory.mkdir(parents=True, exist_ok=True)
            meta = {
                "format": INDEX_FORMAT,
                "doc_count": self.doc_count,
                "avg_length": self.avg_length,
                "stem": self.stem,
                "stopwords": self.stopwords,
            }
            (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            with (directory / "docs.tsv").open("w", encoding="utf-8", newline="\n") as handle:
                for i, (doc_id, length) in enumerate(zip(self._doc_ids, self._doc_lengths)):
                    handle.write(f"{i}\t{doc_id}\t{length}\n")
            with (directory / "postings.txt").open("w", encoding="utf-8", newline="\n") as handle:
                for term in self.terms():
                    plist = " ".join(f"{i}:{tf}" for i, tf in self._postings[term])
                    handle.write(f"{term}\t{plist}\n")
        except OSError as exc:
            raise IoFailure(str(directory), exc)

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "InvertedIndex":
        directory = Path(directory)
        try:
            meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
            doc_lines = (directory / "docs.tsv").read_text(encoding="utf-8").splitlines()
            posting_lines = (directory / "postings.txt").read_text(encoding="utf-8").splitlines()
        except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise IoFailure(str(directory), exc)
        index_format = meta.get("format") if isinstance(meta, dict) else None
        if index_format != INDEX_FORMAT:
            raise MalformedRecord(str(directory / "meta.json"), 1, str(index_format), "unknown index format")
        doc_ids: List[str] = []
        lengths: List[int] = []
        for line_no, line in enumerate(doc_lines, start=1):
            parts = line.split("\t")
            if len(parts) != 3 or int(parts[0]) != line_no - 1:
                raise MalformedRecord(str(directory / "docs.tsv"), line_no, line)
            doc_ids.append(parts[1])
            lengths.append(int(parts[2]))
        postings: Dict[str, List[Tuple[int, int]]] = {}
        for line_no, line in enumerate(posting_lines, start=1):
            term, _, plist = line.partition("\t")
            try:
                postings[term] = [(int(a), int(b)) for a, b in (item.split(":") for item in plist.split())]
            except ValueError:
                raise MalformedRecord(str(directory / "postings.txt"), line_no, line)
        return cls(postings, doc_ids, lengths, stem=bool(meta.get("stem")), stopwords=bool(meta.get("stopwords")))


def build_index(corpus: Iterable[Document], stem: bool = False, stopwords: bool = False) -> InvertedIndex:
    """
    Build an inverted index over title + " " + body of every document.

    Raises:
        EmptyCorpus: If the corpus has no documents
    """
    postings: Dict[str, List[Tuple[int, int]]] = {}
    doc_ids: List[str] = []
    lengths: List[int] = []
    for internal_id, doc in enumerate(corpus):
        terms = analyze(f"{doc.title} {doc.body}", stem=stem, stopwords=stopwords)
        doc_ids.append(doc.doc_id)
        lengths.append(len(terms))
        for term, tf in Counter(terms).items():
            postings.setdefault(term, []).append((internal_id, tf))
    if not doc_ids:
        raise EmptyCorpus()
    index = InvertedIndex(postings, doc_ids, lengths, stem=stem, stopwords=stopwords)
    logger.info("Indexed %d documents, %d terms, avg length %.1f", index.doc_count, len(postings), index.avg_length)
    return index


def bm25_term_score(idf: float, tf: int, doc_length: int, avg_length: float, params: Bm25Params) -> float:
    norm = params.k1 * (1.0 - params.b + params.b * doc_length / avg_length) if avg_length > 0 else params.k1
    return idf * tf * (params.k1 + 1.0) / (tf + norm)


def retrieve_top_n(
    index: InvertedIndex, query: Query, n: int, params: Optional[Bm25Params] = None, tag: str = "bm25"
) -> RankedList:
    """
    Score every document containing a query term with BM25 and keep the top n.

    Query terms are summed per occurrence. Ties go to the smaller doc_id and
    documents scoring 0 are left out.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    params = params or Bm25Params()
    scores: Dict[int, float] = {}
    for term in index.analyze(query.text):
        idf = index.idf(term)
        for internal_id, tf in index.postings(term):
            scores[internal_id] = scores.get(internal_id, 0.0) + bm25_term_score(
                idf, tf, index.doc_length(internal_id), index.avg_length, params
            )
    scored = [(index.doc_id(i), s) for i, s in scores.items() if s > 0.0]
    ranked = RankedList.from_scores(query.query_id, scored, tag)
    return RankedList(ranked.query_id, ranked.entries[:n], tag)


def first_p(doc: Document, k: int) -> str:
    """First k whitespace tokens of title + body, joined by single spaces."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return " ".join(f"{doc.title} {doc.body}".split()[:k])
