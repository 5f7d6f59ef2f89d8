"""Graded-relevance ranking metrics: NDCG@k and MAP@k."""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

from rankdigest.config import MetricConfig
from rankdigest.errors import EmptyIntersection, IoFailure, MalformedRecord
from rankdigest.model import QrelsTable, RankedList

logger = logging.getLogger(__name__)


def gain_value(grade: int, gain: str = "linear") -> float:
    if gain == "linear":
        return float(grade)
    if gain == "exponential":
        return float(2**grade - 1)
    raise ValueError(f"Unknown gain mode: {gain}")


def dcg(grades: Sequence[int], k: int, gain: str = "linear") -> float:
    """Discounted cumulative gain of the first k grades, log2(i + 1) discount."""
    return sum(gain_value(g, gain) / math.log2(i + 2) for i, g in enumerate(grades[:k]))


def ndcg_for_doc_ids(doc_ids: Sequence[str], query_id: str, qrels: QrelsTable, k: int, gain: str = "linear") -> float:
    """NDCG@k of an ordering of doc ids; 0 when the ideal DCG is 0."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ideal = sorted(qrels.judged(query_id).values(), reverse=True)
    idcg = dcg(ideal, k, gain)
    if idcg <= 0.0:
        return 0.0
    return dcg([qrels.grade(query_id, d) for d in doc_ids], k, gain) / idcg


def ndcg_at_k(ranked: RankedList, qrels: QrelsTable, k: int, gain: str = "linear") -> float:
    """
    NDCG@k of a ranked list.

    The ideal ordering uses every judged document of the query, retrieved or
    not, sorted by grade.

    Args:
        ranked: Ranked list for one query
        qrels: Relevance judgments
        k: Cutoff, >= 1
        gain: "linear" (g = r) or "exponential" (g = 2^r - 1)

    Returns:
        Value in [0, 1]
    """
    return ndcg_for_doc_ids(ranked.doc_ids(), ranked.query_id, qrels, k, gain)


def map_at_k(ranked: RankedList, qrels: QrelsTable, k: int, threshold: int = 1) -> float:
    """Average precision over the top k, relevance = grade >= threshold, normalized by all relevant docs."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    total_relevant = sum(1 for g in qrels.judged(ranked.query_id).values() if g >= threshold)
    if total_relevant == 0:
        return 0.0
    hits = 0
    precision_sum = 0.0
    for i, doc_id in enumerate(ranked.doc_ids()[:k], start=1):
        if qrels.grade(ranked.query_id, doc_id) >= threshold:
            hits += 1
            precision_sum += hits / i
    return precision_sum / total_relevant


@dataclass
class EvaluationReport:
    """Per-query metric values plus unweighted means over evaluated queries."""

    ndcg_name: str
    map_name: str
    per_query: Dict[str, Dict[str, float]] = field(default_factory=dict)
    skipped: List[str] = field(default_factory=list)

    @property
    def means(self) -> Dict[str, float]:
        count = len(self.per_query)
        if count == 0:
            return {self.ndcg_name: 0.0, self.map_name: 0.0}
        return {
            name: sum(values[name] for values in self.per_query.values()) / count
            for name in (self.ndcg_name, self.map_name)
        }

    def to_dict(self) -> Dict[str, object]:
        return {"per_query": self.per_query, "means": self.means, "skipped": self.skipped}


def evaluate_run(run: Iterable[RankedList], qrels: QrelsTable, cfg: Optional[MetricConfig] = None) -> EvaluationReport:
    """
    Evaluate a run query by query.

    Queries without judgments are skipped with a warning.

    Raises:
        EmptyIntersection: If no run query has judgments
    """
    cfg = cfg or MetricConfig()
    report = EvaluationReport(ndcg_name=f"ndcg@{cfg.ndcg_k}", map_name=f"map@{cfg.map_k}")
    for ranked in run:
        if not qrels.has_query(ranked.query_id):
            logger.warning("Query %s has no judgments, skipped", ranked.query_id)
            report.skipped.append(ranked.query_id)
            continue
        report.per_query[ranked.query_id] = {
            report.ndcg_name: ndcg_at_k(ranked, qrels, cfg.ndcg_k, cfg.gain),
            report.map_name: map_at_k(ranked, qrels, cfg.map_k, cfg.map_binarize_threshold),
        }
    if not report.per_query:
        raise EmptyIntersection()
    return report


def format_table(report: EvaluationReport) -> str:
    """Aligned text table, one row per query plus a closing `all` row."""
    names = [report.ndcg_name, report.map_name]
    rows = [(qid, *(f"{values[n]:.4f}" for n in names)) for qid, values in report.per_query.items()]
    rows.append(("all", *(f"{report.means[n]:.4f}" for n in names)))
    header = ("query", *names)
    widths = [max(len(str(row[i])) for row in [header, *rows]) for i in range(len(header))]
    lines = ["  ".join(str(cell).ljust(width) for cell, width in zip(row, widths)).rstrip() for row in [header, *rows]]
    return "\n".join(lines) + "\n"


def write_per_query(report: EvaluationReport, path: Union[str, Path]) -> None:
    """TSV lines `qid<TAB>metric<TAB>value`, trec_eval style, with `all` rows last."""
    lines = []
    for qid, values in report.per_query.items():
        for name, value in values.items():
            lines.append(f"{qid}\t{name}\t{value:.6f}")
    for name, value in report.means.items():
        lines.append(f"all\t{name}\t{value:.6f}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(path), exc)


def read_per_query(path: Union[str, Path]) -> EvaluationReport:
    """Inverse of write_per_query; metric names come from the file."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise IoFailure(str(path), exc)
    per_query: Dict[str, Dict[str, float]] = {}
    names: List[str] = []
    for line_no, line in enumerate(lines, start=1):
        parts = line.split("\t")
        if len(parts) != 3:
            raise MalformedRecord(str(path), line_no, line, "expected qid<TAB>metric<TAB>value")
        qid, name, value = parts
        if name not in names:
            names.append(name)
        if qid != "all":
            per_query.setdefault(qid, {})[name] = float(value)
    if len(names) != 2:
        raise MalformedRecord(str(path), 1, lines[0] if lines else "", "expected exactly two metrics")
    return EvaluationReport(ndcg_name=names[0], map_name=names[1], per_query=per_query)
