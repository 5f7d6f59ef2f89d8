"""Domain model shared by every stage of a summarize-then-rank run."""

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from rankdigest.errors import RunInvariantError


@dataclass(frozen=True)
class Document:
    """A corpus record. The body is kept untruncated."""

    doc_id: str
    title: str
    body: str

    @property
    def text(self) -> str:
        """Title and body joined by a single space (title omitted when empty)."""
        if self.title:
            return f"{self.title} {self.body}"
        return self.body


@dataclass(frozen=True)
class Query:
    """A topic with its id and free text."""

    query_id: str
    text: str


class QrelsTable:
    """Graded relevance judgments keyed by (query_id, doc_id).

    Unjudged pairs read as grade 0.
    """

    def __init__(self):
        self._grades: Dict[str, Dict[str, int]] = {}

    def add(self, query_id: str, doc_id: str, grade: int) -> Optional[int]:
        """Set a grade and return the grade it replaced, if any."""
        if grade < 0:
            raise ValueError(f"grade must be non-negative, got {grade}")
        per_query = self._grades.setdefault(query_id, {})
        previous = per_query.get(doc_id)
        per_query[doc_id] = grade
        return previous

    def grade(self, query_id: str, doc_id: str) -> int:
        """Grade of a pair; 0 when unjudged."""
        return self._grades.get(query_id, {}).get(doc_id, 0)

    def has_query(self, query_id: str) -> bool:
        return query_id in self._grades

    def query_ids(self) -> List[str]:
        return list(self._grades.keys())

    def judged(self, query_id: str) -> Dict[str, int]:
        """All judged docs for a query (a copy)."""
        return dict(self._grades.get(query_id, {}))

    def positives(self, query_id: str, threshold: int = 1) -> List[str]:
        """Judged docs with grade >= threshold, sorted by doc_id."""
        return sorted(d for d, g in self._grades.get(query_id, {}).items() if g >= threshold)

    def negatives(self, query_id: str, threshold: int = 1) -> List[str]:
        """Judged docs with grade < threshold, sorted by doc_id."""
        return sorted(d for d, g in self._grades.get(query_id, {}).items() if g < threshold)

    def restrict(self, query_id: str, doc_ids: Iterable[str]) -> "QrelsTable":
        """A table holding only this query's judgments for the given docs."""
        restricted = QrelsTable()
        for doc_id in doc_ids:
            restricted.add(query_id, doc_id, self.grade(query_id, doc_id))
        return restricted

    def items(self) -> Iterator[Tuple[str, str, int]]:
        for query_id, per_query in self._grades.items():
            for doc_id, grade in per_query.items():
                yield query_id, doc_id, grade

    def __len__(self) -> int:
        return sum(len(per_query) for per_query in self._grades.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QrelsTable):
            return NotImplemented
        return self._grades == other._grades

    def __repr__(self) -> str:
        return f"QrelsTable(queries={len(self._grades)}, judgments={len(self)})"


@dataclass(frozen=True)
class RankEntry:
    doc_id: str
    score: float
    rank: int


@dataclass(frozen=True)
class RankedList:
    """One query's ordered documents, as stored in a run file."""

    query_id: str
    entries: Tuple[RankEntry, ...]
    tag: str = "rankdigest"

    def validate(self) -> None:
        """Check ranks 1..n, unique doc_ids and non-increasing scores.

        Raises:
            RunInvariantError: If any invariant is violated
        """
        seen = set()
        previous_score = math.inf
        for position, entry in enumerate(self.entries, start=1):
            if entry.rank != position:
                raise RunInvariantError(
                    f"Query {self.query_id}: rank {entry.rank} at position {position}, ranks must be 1..n"
                )
            if entry.doc_id in seen:
                raise RunInvariantError(f"Query {self.query_id}: duplicate doc_id {entry.doc_id}")
            if not math.isfinite(entry.score):
                raise RunInvariantError(f"Query {self.query_id}: non-finite score for {entry.doc_id}")
            if entry.score > previous_score:
                raise RunInvariantError(f"Query {self.query_id}: scores increase at rank {entry.rank}")
            seen.add(entry.doc_id)
            previous_score = entry.score

    def doc_ids(self) -> List[str]:
        return [entry.doc_id for entry in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_scores(cls, query_id: str, scored: Iterable[Tuple[str, float]], tag: str) -> "RankedList":
        """Sort by score descending, ties by ascending doc_id, and assign ranks."""
        ordered = sorted(scored, key=lambda pair: (-pair[1], pair[0]))
        entries = tuple(RankEntry(doc_id, float(score), rank) for rank, (doc_id, score) in enumerate(ordered, start=1))
        return cls(query_id, entries, tag)

    @classmethod
    def from_order(cls, query_id: str, doc_ids: Sequence[str], tag: str) -> "RankedList":
        """Ranked list in the given order with synthetic scores n..1."""
        n = len(doc_ids)
        entries = tuple(RankEntry(doc_id, float(n - i), i + 1) for i, doc_id in enumerate(doc_ids))
        return cls(query_id, entries, tag)


@dataclass(frozen=True)
class Summary:
    """A query-grounded compression of one document."""

    doc_id: str
    query_id: str
    text: str
    is_safeguard: bool
    backend: str

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"Summary of {self.doc_id} for {self.query_id} has empty text")

    def to_record(self) -> Dict[str, object]:
        return {
            "query_id": self.query_id,
            "doc_id": self.doc_id,
            "text": self.text,
            "is_safeguard": self.is_safeguard,
            "backend": self.backend,
        }


class Label(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class LabeledCandidate:
    doc_id: str
    label: Label


@dataclass
class RlInstance:
    """One query's candidate list plus its frozen background summaries."""

    query: Query
    candidates: List[LabeledCandidate]
    background: List[Summary] = field(default_factory=list)
    injected_count: int = 0
    seed: int = 0

    def validate(self) -> None:
        """Check the positive-and-negative composition and background alignment."""
        labels = {candidate.label for candidate in self.candidates}
        if Label.POSITIVE not in labels or Label.NEGATIVE not in labels:
            raise ValueError(f"Instance {self.query.query_id} needs at least one positive and one negative")
        if len({candidate.doc_id for candidate in self.candidates}) != len(self.candidates):
            raise ValueError(f"Instance {self.query.query_id} repeats a candidate")
        if self.background:
            if len(self.background) != len(self.candidates):
                raise ValueError(f"Instance {self.query.query_id}: background length mismatch")
            for candidate, summary in zip(self.candidates, self.background):
                if candidate.doc_id != summary.doc_id:
                    raise ValueError(
                        f"Instance {self.query.query_id}: background {summary.doc_id} "
                        f"misaligned with {candidate.doc_id}"
                    )

    def doc_ids(self) -> List[str]:
        return [candidate.doc_id for candidate in self.candidates]

    def positive_positions(self) -> List[int]:
        return [i for i, c in enumerate(self.candidates) if c.label is Label.POSITIVE]

    def negative_positions(self) -> List[int]:
        return [i for i, c in enumerate(self.candidates) if c.label is Label.NEGATIVE]
