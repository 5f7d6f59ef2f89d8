"""HTTP wire API over the summarizer, the reranker and the evaluator."""

import logging
import uuid
from typing import Dict, List, Optional

import uvicorn
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from rankdigest import __version__
from rankdigest.config import MetricConfig, PipelineConfig, WindowPlan
from rankdigest.corpus_io import load_corpus, load_qrels, read_run
from rankdigest.errors import BackendUnavailable, IoFailure, RankDigestError
from rankdigest.metrics import evaluate_run
from rankdigest.model import Document, Query
from rankdigest.rerank import Candidate, RerankerBackend, backend_from_spec, sliding_window_order
from rankdigest.retrieval import build_index
from rankdigest.summarize import SAFEGUARD_PHRASE, Summarizer, detect_safeguard, summarizer_from_spec

logger = logging.getLogger(__name__)

REQUEST_ID_HEADER = "X-Request-ID"


class SummarizeRequest(BaseModel):
    query: str = Field(min_length=1)
    document: str
    query_id: str = "q"
    doc_id: str = "d"


class SummarizeResponse(BaseModel):
    summary: str
    is_safeguard: bool
    backend: str
    request_id: str


class RerankRequest(BaseModel):
    query: str = Field(min_length=1)
    candidates: List[str] = Field(min_length=1)


class RerankResponse(BaseModel):
    order: List[int]
    request_id: str


class EvaluateRequest(BaseModel):
    run_path: str
    qrels_path: str
    metrics: MetricConfig = MetricConfig()


class EvaluateResponse(BaseModel):
    per_query: Dict[str, Dict[str, float]]
    means: Dict[str, float]
    skipped: List[str]
    request_id: str


class HealthResponse(BaseModel):
    status: str
    version: str
    request_id: str


_STAGES = {"/v1/summarize": "summarize", "/v1/rerank": "rerank", "/v1/evaluate": "evaluate"}


def _request_id(request: Request) -> str:
    return getattr(request.state, "request_id", None) or str(uuid.uuid4())


def _error_body(request: Request, exc: RankDigestError) -> Dict[str, object]:
    return {
        "error": {
            "type": type(exc).__name__,
            "stage": _STAGES.get(request.url.path, "serve"),
            "cause": exc.message,
        },
        "request_id": _request_id(request),
    }


def create_app(
    cfg: Optional[PipelineConfig] = None,
    summarizer: Optional[Summarizer] = None,
    reranker: Optional[RerankerBackend] = None,
    window: Optional[WindowPlan] = None,
    probe: bool = True,
) -> FastAPI:
    """
    Build the service. Backends come from cfg unless passed in directly.

    Shared state (index, checkpoints, backends) is read-only once built.

    Raises:
        BackendUnavailable: If a startup probe fails
    """
    if summarizer is None or reranker is None:
        if cfg is None:
            raise ValueError("create_app needs a config or both backends")
        corpus = load_corpus(cfg.corpus)
        index = build_index(corpus, stem=cfg.stem, stopwords=cfg.stopwords)
        if summarizer is None:
            summarizer = summarizer_from_spec(cfg.summarizer, index)
        if reranker is None:
            qrels = load_qrels(cfg.qrels) if cfg.reranker.kind == "oracle" else None
            reranker = backend_from_spec(cfg.reranker, index, qrels)
    window = window or (cfg.window if cfg is not None else WindowPlan())
    if probe:
        summarizer.probe()
        reranker.probe()
    logger.info("Serving summarizer %s and reranker %s", summarizer.name, reranker.name)

    app = FastAPI(title="rankdigest", version=__version__)

    @app.middleware("http")
    async def attach_request_id(request: Request, call_next):
        request.state.request_id = request.headers.get(REQUEST_ID_HEADER) or str(uuid.uuid4())
        response = await call_next(request)
        response.headers[REQUEST_ID_HEADER] = request.state.request_id
        return response

    @app.exception_handler(BackendUnavailable)
    async def backend_unavailable(request: Request, exc: BackendUnavailable):
        logger.error("Backend unavailable on %s: %s", request.url.path, exc.message)
        return JSONResponse(status_code=503, content=_error_body(request, exc))

    @app.exception_handler(IoFailure)
    async def io_failure(request: Request, exc: IoFailure):
        return JSONResponse(status_code=404, content=_error_body(request, exc))

    @app.exception_handler(RankDigestError)
    async def rankdigest_error(request: Request, exc: RankDigestError):
        return JSONResponse(status_code=400, content=_error_body(request, exc))

    @app.get("/healthz", response_model=HealthResponse)
    def healthz(request: Request) -> HealthResponse:
        return HealthResponse(status="ok", version=__version__, request_id=_request_id(request))

    @app.post("/v1/summarize", response_model=SummarizeResponse)
    def summarize(body: SummarizeRequest, request: Request) -> SummarizeResponse:
        text = summarizer.summarize(Query(body.query_id, body.query), Document(body.doc_id, "", body.document))
        if not text.strip():
            text = SAFEGUARD_PHRASE
        return SummarizeResponse(
            summary=text,
            is_safeguard=detect_safeguard(text),
            backend=summarizer.name,
            request_id=_request_id(request),
        )

    @app.post("/v1/rerank", response_model=RerankResponse)
    def rerank(body: RerankRequest, request: Request) -> RerankResponse:
        candidates = [Candidate(str(i), text) for i, text in enumerate(body.candidates, start=1)]
        reordered = sliding_window_order(reranker, Query("q", body.query), candidates, window)
        return RerankResponse(order=[int(c.doc_id) for c in reordered], request_id=_request_id(request))

    @app.post("/v1/evaluate", response_model=EvaluateResponse)
    def evaluate(body: EvaluateRequest, request: Request) -> EvaluateResponse:
        report = evaluate_run(read_run(body.run_path), load_qrels(body.qrels_path), body.metrics)
        return EvaluateResponse(
            per_query=report.per_query,
            means=report.means,
            skipped=report.skipped,
            request_id=_request_id(request),
        )

    return app


def serve(cfg: PipelineConfig, host: str = "127.0.0.1", port: int = 8000) -> None:
    """Run the service with uvicorn until interrupted."""
    uvicorn.run(create_app(cfg), host=host, port=port, log_config=None)
