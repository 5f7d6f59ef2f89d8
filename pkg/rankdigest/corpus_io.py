"""Reading and writing corpus, query, qrels and run files."""

import json
import logging
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Tuple, Union

from rankdigest.errors import DuplicateDocId, IoFailure, MalformedRecord, NegativeGrade
from rankdigest.model import Document, QrelsTable, Query, RankEntry, RankedList

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SCORE_DECIMALS = 6


def load_corpus(path: PathLike) -> List[Document]:
    """
    Load a line-delimited corpus of {"docid", "title", "body"} records.

    Args:
        path: Corpus file, one JSON record per line

    Returns:
        Documents in file order

    Raises:
        MalformedRecord: If a line is not a valid record
        DuplicateDocId: If a doc_id repeats
    """
    path = Path(path)
    documents: List[Document] = []
    seen: Dict[str, int] = {}
    for line_no, line in read_lines(path):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError:
            raise MalformedRecord(str(path), line_no, line, "invalid JSON")
        if not isinstance(record, dict):
            raise MalformedRecord(str(path), line_no, line, "record is not an object")
        doc_id = record.get("docid")
        title = record.get("title", "")
        body = record.get("body")
        if not isinstance(doc_id, str) or not doc_id:
            raise MalformedRecord(str(path), line_no, line, "missing or empty docid")
        if not isinstance(title, str) or not isinstance(body, str):
            raise MalformedRecord(str(path), line_no, line, "title and body must be strings")
        if doc_id in seen:
            raise DuplicateDocId(doc_id, line_no)
        seen[doc_id] = line_no
        documents.append(Document(doc_id, title, body))
    logger.info("Loaded %d documents from %s", len(documents), path)
    return documents


def write_corpus(documents: Iterable[Document], path: PathLike) -> None:
    lines = [
        json.dumps({"docid": doc.doc_id, "title": doc.title, "body": doc.body}, ensure_ascii=False)
        for doc in documents
    ]
    _write_lines(Path(path), lines)


def load_queries(path: PathLike) -> List[Query]:
    """Load `qid<TAB>text` lines."""
    path = Path(path)
    queries: List[Query] = []
    seen = set()
    for line_no, line in read_lines(path):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t", 1)
        if len(parts) != 2 or not parts[0].strip():
            raise MalformedRecord(str(path), line_no, line, "expected qid<TAB>text")
        query_id = parts[0].strip()
        if query_id in seen:
            raise MalformedRecord(str(path), line_no, line, f"duplicate query id {query_id}")
        seen.add(query_id)
        queries.append(Query(query_id, parts[1].strip()))
    logger.info("Loaded %d queries from %s", len(queries), path)
    return queries


def write_queries(queries: Iterable[Query], path: PathLike) -> None:
    _write_lines(Path(path), [f"{q.query_id}\t{q.text}" for q in queries])


def load_qrels(path: PathLike) -> QrelsTable:
    """
    Load TREC qrels lines `qid 0 docid grade`.

    A repeated (qid, docid) keeps the last grade and logs a warning.

    Raises:
        MalformedRecord: If a line does not have four fields or an integer grade
        NegativeGrade: If a grade is below zero
    """
    path = Path(path)
    qrels = QrelsTable()
    for line_no, line in read_lines(path):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 4:
            raise MalformedRecord(str(path), line_no, line.rstrip("\n"), "expected `qid 0 docid grade`")
        query_id, _, doc_id, raw_grade = fields
        try:
            grade = int(raw_grade)
        except ValueError:
            raise MalformedRecord(str(path), line_no, line.rstrip("\n"), "grade is not an integer")
        if grade < 0:
            raise NegativeGrade(line_no, grade)
        previous = qrels.add(query_id, doc_id, grade)
        if previous is not None:
            logger.warning(
                "Repeated judgment for (%s, %s) on line %d: %d replaces %d",
                query_id, doc_id, line_no, grade, previous,
            )
    logger.info("Loaded %d judgments from %s", len(qrels), path)
    return qrels


def write_qrels(qrels: QrelsTable, path: PathLike) -> None:
    _write_lines(Path(path), [f"{qid} 0 {did} {grade}" for qid, did, grade in qrels.items()])


def format_score(score: float) -> str:
    """Fixed 6-decimal rendering with trailing zeros trimmed (9.5 -> "9.5")."""
    text = f"{score:.{SCORE_DECIMALS}f}"
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    if text in ("-0", ""):
        text = "0"
    return text


def write_run(lists: Iterable[RankedList], path: PathLike) -> None:
    """
    Write ranked lists as TREC run lines `qid Q0 docid rank score tag`.

    Every list is validated before anything is written.

    Raises:
        RunInvariantError: If a list violates its invariants
        IoFailure: If the file cannot be written
    """
    lists = list(lists)
    for ranked in lists:
        ranked.validate()
    lines = [
        f"{ranked.query_id} Q0 {entry.doc_id} {entry.rank} {format_score(entry.score)} {ranked.tag}"
        for ranked in lists
        for entry in ranked.entries
    ]
    _write_lines(Path(path), lines)


def read_run(path: PathLike) -> List[RankedList]:
    """Read a TREC run file, grouping lines by query in first-appearance order."""
    path = Path(path)
    grouped: Dict[str, List[RankEntry]] = {}
    tags: Dict[str, str] = {}
    for line_no, line in read_lines(path):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 6:
            raise MalformedRecord(str(path), line_no, line.rstrip("\n"), "expected `qid Q0 docid rank score tag`")
        query_id, _, doc_id, raw_rank, raw_score, tag = fields
        try:
            entry = RankEntry(doc_id, float(raw_score), int(raw_rank))
        except ValueError:
            raise MalformedRecord(str(path), line_no, line.rstrip("\n"), "rank or score not numeric")
        grouped.setdefault(query_id, []).append(entry)
        tags.setdefault(query_id, tag)
    lists = []
    for query_id, entries in grouped.items():
        ranked = RankedList(query_id, tuple(sorted(entries, key=lambda e: e.rank)), tags[query_id])
        ranked.validate()
        lists.append(ranked)
    return lists


def read_lines(path: Path) -> Iterator[Tuple[int, str]]:
    """Yield (line_no, text) pairs; a line that is not valid UTF-8 is a MalformedRecord."""
    try:
        handle = path.open("rb")
    except OSError as exc:
        raise IoFailure(str(path), exc)
    with handle:
        for line_no, raw in enumerate(handle, start=1):
            try:
                text = raw.decode("utf-8")
            except UnicodeDecodeError:
                raise MalformedRecord(str(path), line_no, raw.decode("utf-8", "replace").rstrip(), "invalid UTF-8")
            yield line_no, text.replace("\r\n", "\n")


def _write_lines(path: Path, lines: List[str]) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as handle:
            for line in lines:
                handle.write(line)
                handle.write("\n")
    except OSError as exc:
        raise IoFailure(str(path), exc)
