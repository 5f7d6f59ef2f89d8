"""Listwise reranking: window backends and sliding-window aggregation."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Protocol, Sequence, Tuple

from rankdigest.config import RerankerSpec, WindowPlan
from rankdigest.errors import ConfigError
from rankdigest.model import QrelsTable, Query, RankedList
from rankdigest.parser import parse_permutation
from rankdigest.remote import RemoteChatClient
from rankdigest.retrieval import InvertedIndex
from rankdigest.summarize import detect_safeguard, load_prompt_text, substitute

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Candidate:
    """A document as the reranker sees it: its id and the text standing in for it."""

    doc_id: str
    text: str


class RerankerBackend(Protocol):
    name: str
    deterministic: bool

    def order(self, query: Query, candidates: Sequence[Candidate]) -> List[int]:
        """1-based permutation of the window, best first."""
        ...

    def probe(self) -> None:
        ...


class OracleReranker:
    """Sorts by judged grade, descending; ties keep their incoming order."""

    name = "oracle"
    deterministic = True

    def __init__(self, qrels: QrelsTable):
        self.qrels = qrels

    def order(self, query: Query, candidates: Sequence[Candidate]) -> List[int]:
        grades = [self.qrels.grade(query.query_id, c.doc_id) for c in candidates]
        return [i + 1 for i in sorted(range(len(candidates)), key=lambda i: -grades[i])]

    def probe(self) -> None:
        return None


class LexicalReranker:
    """
    Sorts by idf-weighted query-term coverage of each candidate text.

    A text scores the sum of idf(t) over the distinct query terms it contains;
    repeating a term adds nothing. Safeguard texts always go after every other
    text and ties keep incoming order.
    """

    name = "lexical"
    deterministic = True

    def __init__(self, index: InvertedIndex):
        self.index = index

    def query_terms(self, query: Query) -> Dict[str, float]:
        return {term: self.index.idf(term) for term in dict.fromkeys(self.index.analyze(query.text))}

    def score(self, weights: Mapping[str, float], text: str) -> float:
        present = set(self.index.analyze(text))
        return sum(idf for t, idf in weights.items() if t in present)

    def order(self, query: Query, candidates: Sequence[Candidate]) -> List[int]:
        weights = self.query_terms(query)
        keys = []
        for i, candidate in enumerate(candidates):
            if detect_safeguard(candidate.text):
                keys.append((1, 0.0, i))
            else:
                keys.append((0, -self.score(weights, candidate.text), i))
        return [key[2] + 1 for key in sorted(keys)]

    def probe(self) -> None:
        return None


class RemoteReranker:
    """Asks a remote LLM for a bracketed ordering and repairs whatever comes back."""

    deterministic = False

    def __init__(self, client: RemoteChatClient, template_version: str = "v1", max_chars: int = 2000):
        self.client = client
        self.template = load_prompt_text("rerank", template_version)
        self.template_version = template_version
        self.max_chars = max_chars
        self.name = f"{client.name}@rerank_{template_version}"

    def build_prompt(self, query: Query, candidates: Sequence[Candidate]) -> str:
        passages = "\n".join(f"[{i}] {c.text[: self.max_chars]}" for i, c in enumerate(candidates, start=1))
        return substitute(self.template, {"query": query.text, "passages": passages, "count": str(len(candidates))})

    def order(self, query: Query, candidates: Sequence[Candidate]) -> List[int]:
        raw = self.client.complete(self.build_prompt(query, candidates))
        return parse_permutation(raw, len(candidates))

    def probe(self) -> None:
        self.client.probe()


def backend_from_spec(
    spec: RerankerSpec,
    index: Optional[InvertedIndex] = None,
    qrels: Optional[QrelsTable] = None,
) -> RerankerBackend:
    if spec.kind == "oracle":
        if qrels is None:
            raise ConfigError("oracle reranker needs qrels")
        return OracleReranker(qrels)
    if spec.kind == "lexical":
        if index is None:
            raise ConfigError("lexical reranker needs the retrieval index")
        return LexicalReranker(index)
    return RemoteReranker(RemoteChatClient(spec.remote))


def rerank_window(backend: RerankerBackend, query: Query, candidates: Sequence[Candidate]) -> List[int]:
    """
    Reorder one window with a single backend call.

    Returns:
        1-based permutation of the window

    Raises:
        BackendUnavailable: From remote backends, after retries
    """
    if not candidates:
        raise ValueError("rerank_window needs at least one candidate")
    order = backend.order(query, candidates)
    if sorted(order) != list(range(1, len(candidates) + 1)):
        raise ValueError(f"{backend.name} returned a non-permutation {order}")
    return order


def window_spans(n: int, plan: WindowPlan) -> List[Tuple[int, int]]:
    """[start, end) spans in traversal order: last window first, then toward the front by step."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    spans = []
    start = max(0, n - plan.window_size)
    while True:
        spans.append((start, min(start + plan.window_size, n)))
        if start == 0:
            break
        start = max(0, start - plan.step)
    return spans


def sliding_window_order(
    backend: RerankerBackend, query: Query, candidates: Sequence[Candidate], plan: WindowPlan
) -> List[Candidate]:
    """Back-to-front sliding window; each window is reordered in place before the next is taken."""
    current = list(candidates)
    for start, end in window_spans(len(current), plan):
        window = current[start:end]
        order = rerank_window(backend, query, window)
        current[start:end] = [window[i - 1] for i in order]
    return current


def sliding_window_rerank(
    backend: RerankerBackend,
    query: Query,
    items: RankedList,
    texts: Mapping[str, str],
    plan: Optional[WindowPlan] = None,
    tag: Optional[str] = None,
) -> RankedList:
    """
    Rerank a retrieved list using the given text for each document.

    Returns:
        A RankedList over the same doc_ids with synthetic scores n..1
    """
    plan = plan or WindowPlan()
    if not len(items):
        return RankedList(items.query_id, (), tag or items.tag)
    candidates = [Candidate(doc_id, texts[doc_id]) for doc_id in items.doc_ids()]
    reordered = sliding_window_order(backend, query, candidates, plan)
    return RankedList.from_order(items.query_id, [c.doc_id for c in reordered], tag or f"rerank-{backend.name}")


def rerank_run(
    backend: RerankerBackend,
    queries: Mapping[str, Query],
    run: Sequence[RankedList],
    texts: Mapping[str, Mapping[str, str]],
    plan: Optional[WindowPlan] = None,
    parallelism: int = 1,
    tag: Optional[str] = None,
) -> List[RankedList]:
    """
    Rerank every query of a run; distinct queries may run concurrently.

    Args:
        texts: query_id -> doc_id -> text to rank by

    Returns:
        Reranked lists in input order
    """
    plan = plan or WindowPlan()

    def one(ranked: RankedList) -> RankedList:
        return sliding_window_rerank(backend, queries[ranked.query_id], ranked, texts[ranked.query_id], plan, tag)

    if parallelism <= 1:
        results = [one(ranked) for ranked in run]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(one, run))
    logger.info(
        "Reranked %d queries with %s (window %d, step %d)", len(results), backend.name, plan.window_size, plan.step
    )
    return results
