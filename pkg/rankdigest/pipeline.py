"""End-to-end retrieve, summarize, rerank and evaluate runs with resumable stages."""

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Union

from rankdigest.config import PipelineConfig, dump_config
from rankdigest.corpus_io import load_corpus, load_qrels, load_queries, read_run, write_run
from rankdigest.errors import IoFailure, RankDigestError, StageError
from rankdigest.metrics import EvaluationReport, evaluate_run, read_per_query, write_per_query
from rankdigest.model import Document, QrelsTable, Query
from rankdigest.rerank import backend_from_spec, rerank_run
from rankdigest.retrieval import InvertedIndex, build_index, retrieve_top_n
from rankdigest.summarize import load_summaries, summarize_run, summarizer_from_spec, write_summaries

logger = logging.getLogger(__name__)

MANIFEST = "stages.json"
ARTIFACTS = {
    "retrieve": "run.bm25.txt",
    "summarize": "summaries.jsonl",
    "rerank": "run.rerank.txt",
    "eval": "metrics.tsv",
}


def file_checksum(path: Union[str, Path]) -> str:
    path = Path(path)
    digest = hashlib.sha256()
    try:
        with path.open("rb") as handle:
            for block in iter(lambda: handle.read(1 << 16), b""):
                digest.update(block)
    except OSError as exc:
        raise IoFailure(str(path), exc)
    return digest.hexdigest()


def stage_checksum(parts: Mapping[str, object]) -> str:
    """SHA-256 of the canonical JSON of a stage's inputs."""
    return hashlib.sha256(json.dumps(parts, sort_keys=True, default=str).encode("utf-8")).hexdigest()


@dataclass
class PipelineResult:
    report: EvaluationReport
    artifacts: Dict[str, Path]
    skipped: List[str] = field(default_factory=list)
    seconds_per_query: Dict[str, float] = field(default_factory=dict)


class _Context:
    """Lazily loaded inputs shared by the stages of one run."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self._corpus: Optional[Dict[str, Document]] = None
        self._queries: Optional[List[Query]] = None
        self._qrels: Optional[QrelsTable] = None
        self._index: Optional[InvertedIndex] = None

    @property
    def corpus(self) -> Dict[str, Document]:
        if self._corpus is None:
            self._corpus = {doc.doc_id: doc for doc in load_corpus(self.cfg.corpus)}
        return self._corpus

    @property
    def queries(self) -> List[Query]:
        if self._queries is None:
            self._queries = load_queries(self.cfg.queries)
        return self._queries

    @property
    def query_map(self) -> Dict[str, Query]:
        return {query.query_id: query for query in self.queries}

    @property
    def qrels(self) -> QrelsTable:
        if self._qrels is None:
            self._qrels = load_qrels(self.cfg.qrels)
        return self._qrels

    @property
    def index(self) -> InvertedIndex:
        if self._index is None:
            self._index = build_index(self.corpus.values(), stem=self.cfg.stem, stopwords=self.cfg.stopwords)
        return self._index


def _load_manifest(path: Path) -> Dict[str, Dict[str, str]]:
    if not path.exists():
        return {}
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        logger.warning("Ignoring unreadable stage manifest %s: %s", path, exc)
        return {}


def _save_manifest(path: Path, manifest: Mapping[str, Mapping[str, str]]) -> None:
    try:
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(path), exc)


def run_pipeline(cfg: PipelineConfig, force: bool = False) -> PipelineResult:
    """
    Run retrieve, summarize, rerank and eval in order.

    A stage is reused when its artifact exists and the checksum of its inputs
    matches the one recorded in stages.json.

    Args:
        cfg: Validated pipeline configuration
        force: Recompute every stage

    Returns:
        PipelineResult with the evaluation report and artifact paths

    Raises:
        ConfigError: If a dataset path is missing
        StageError: If a stage fails; earlier artifacts stay on disk
    """
    cfg.validate_paths()
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.yaml").write_text(dump_config(cfg), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(out), exc)

    manifest_path = out / MANIFEST
    manifest = _load_manifest(manifest_path)
    ctx = _Context(cfg)
    artifacts = {stage: out / name for stage, name in ARTIFACTS.items()}
    result_skipped: List[str] = []
    timings: Dict[str, float] = {}

    corpus_sum = file_checksum(cfg.corpus)
    queries_sum = file_checksum(cfg.queries)
    qrels_sum = file_checksum(cfg.qrels)
    checkpoint_sum = file_checksum(cfg.summarizer.checkpoint) if cfg.summarizer.checkpoint else None

    def run_stage(stage: str, inputs: Mapping[str, object], work: Callable[[Path], int]) -> str:
        checksum = stage_checksum(inputs)
        artifact = artifacts[stage]
        recorded = manifest.get(stage, {})
        if not force and recorded.get("checksum") == checksum and artifact.exists():
            logger.info("Stage %s unchanged, reusing %s", stage, artifact)
            result_skipped.append(stage)
            return file_checksum(artifact)
        started = time.perf_counter()
        try:
            count = work(artifact)
        except StageError:
            raise
        except (RankDigestError, OSError, ValueError, KeyError) as exc:
            raise StageError(stage, exc)
        elapsed = time.perf_counter() - started
        timings[stage] = elapsed / max(count, 1)
        logger.info("Stage %s done in %.2fs (%.4fs/query)", stage, elapsed, timings[stage])
        manifest[stage] = {"checksum": checksum, "artifact": artifact.name}
        _save_manifest(manifest_path, manifest)
        return file_checksum(artifact)

    def retrieve(path: Path) -> int:
        run = [retrieve_top_n(ctx.index, query, cfg.topk, cfg.bm25) for query in ctx.queries]
        write_run(run, path)
        return len(run)

    run_sum = run_stage(
        "retrieve",
        {
            "corpus": corpus_sum,
            "queries": queries_sum,
            "topk": cfg.topk,
            "bm25": cfg.bm25.model_dump(),
            "stem": cfg.stem,
            "stopwords": cfg.stopwords,
        },
        retrieve,
    )

    def summarize(path: Path) -> int:
        backend = summarizer_from_spec(cfg.summarizer, ctx.index)
        backend.probe()
        run = read_run(artifacts["retrieve"])
        summaries = summarize_run(backend, run, ctx.corpus, ctx.query_map, cfg.summarizer.parallelism)
        write_summaries(summaries, path)
        return len(run)

    summaries_sum = run_stage(
        "summarize",
        {
            "run": run_sum,
            "corpus": corpus_sum,
            "queries": queries_sum,
            "summarizer": cfg.summarizer.model_dump(mode="json"),
            "checkpoint": checkpoint_sum,
        },
        summarize,
    )

    def rerank(path: Path) -> int:
        backend = backend_from_spec(cfg.reranker, ctx.index, ctx.qrels)
        backend.probe()
        run = read_run(artifacts["retrieve"])
        summaries = load_summaries(artifacts["summarize"])
        texts: Dict[str, Dict[str, str]] = {}
        for (qid, doc_id), summary in summaries.items():
            texts.setdefault(qid, {})[doc_id] = summary.text
        for ranked in run:
            texts.setdefault(ranked.query_id, {})
        reranked = rerank_run(backend, ctx.query_map, run, texts, cfg.window, cfg.reranker.parallelism)
        write_run(reranked, path)
        return len(reranked)

    rerank_sum = run_stage(
        "rerank",
        {
            "run": run_sum,
            "summaries": summaries_sum,
            "reranker": cfg.reranker.model_dump(mode="json"),
            "window": cfg.window.model_dump(),
            "qrels": qrels_sum if cfg.reranker.kind == "oracle" else None,
            "corpus": corpus_sum if cfg.reranker.kind == "lexical" else None,
        },
        rerank,
    )

    def evaluate(path: Path) -> int:
        report = evaluate_run(read_run(artifacts["rerank"]), ctx.qrels, cfg.metrics)
        write_per_query(report, path)
        return len(report.per_query)

    run_stage("eval", {"run": rerank_sum, "qrels": qrels_sum, "metrics": cfg.metrics.model_dump()}, evaluate)
    report = read_per_query(artifacts["eval"])
    return PipelineResult(report, artifacts, result_skipped, timings)

