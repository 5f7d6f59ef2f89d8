"""Pointwise query-grounded summarization and safeguard detection."""

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Protocol, Sequence, Tuple, Union

from rankdigest.config import SummarizerSpec
from rankdigest.corpus_io import read_lines
from rankdigest.errors import BackendUnavailable, ConfigError, IoFailure, MalformedRecord, MissingPlaceholder
from rankdigest.model import Document, Query, RankedList, Summary
from rankdigest.remote import RemoteChatClient
from rankdigest.retrieval import first_p

logger = logging.getLogger(__name__)

SAFEGUARD_PHRASE = "No relevant information found."
_SAFEGUARD_KEY = "no relevant information found"
_PLACEHOLDER = re.compile(r"\{(\w+)\}")

FALLBACK_FIRSTP_K = 128


def detect_safeguard(text: str) -> bool:
    """True iff the lowercased, whitespace-collapsed text contains the safeguard phrase."""
    normalized = " ".join(text.lower().split())
    return _SAFEGUARD_KEY in normalized


def substitute(text: str, values: Mapping[str, str]) -> str:
    """Single-pass placeholder substitution; inserted values are never rescanned."""
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)] if m.group(1) in values else m.group(0), text)


class PromptTemplate:
    """
    Prompt text with {query} and {document} placeholders, each present exactly once.

    Raises:
        MissingPlaceholder: If a placeholder is absent or repeated
    """

    PLACEHOLDERS = ("query", "document")

    def __init__(self, text: str, version: str):
        for name in self.PLACEHOLDERS:
            count = text.count("{" + name + "}")
            if count != 1:
                raise MissingPlaceholder(name, count)
        self.text = text
        self.version = version

    @classmethod
    def from_package(cls, name: str = "summarize", version: str = "v1") -> "PromptTemplate":
        return cls(load_prompt_text(name, version), version)


def load_prompt_text(name: str, version: str) -> str:
    """Read a bundled template file rankdigest/prompts/<name>_<version>.txt."""
    resource = resources.files("rankdigest").joinpath("prompts", f"{name}_{version}.txt")
    return resource.read_text(encoding="utf-8").rstrip("\n")


def render_prompt(tpl: PromptTemplate, query: Query, doc_text: str) -> str:
    """Substitute the query and document verbatim into the template."""
    return substitute(tpl.text, {"query": query.text, "document": doc_text})


def make_summary(query_id: str, doc_id: str, text: str, backend: str) -> Summary:
    return Summary(doc_id=doc_id, query_id=query_id, text=text, is_safeguard=detect_safeguard(text), backend=backend)


class Summarizer(Protocol):
    """Anything that compresses one document for one query."""

    name: str

    def summarize(self, query: Query, doc: Document) -> str:
        ...

    def probe(self) -> None:
        ...


class FirstPSummarizer:
    """Truncation baseline: the first k whitespace tokens."""

    def __init__(self, k: int = 128):
        self.k = k
        self.name = f"firstp-{k}"

    def summarize(self, query: Query, doc: Document) -> str:
        return first_p(doc, self.k)

    def probe(self) -> None:
        return None


class RemoteSummarizer:
    """Prompts a remote LLM with the summarization template."""

    def __init__(self, client: RemoteChatClient, template: Optional[PromptTemplate] = None):
        self.client = client
        self.template = template or PromptTemplate.from_package()
        self.name = f"{client.name}@{self.template.version}"

    def summarize(self, query: Query, doc: Document) -> str:
        return self.client.complete(render_prompt(self.template, query, doc.text)).strip()

    def probe(self) -> None:
        self.client.probe()


def summarizer_from_spec(spec: SummarizerSpec, index=None) -> Summarizer:
    """Build the summarizer a config asks for; the policy backend needs the retrieval index."""
    if spec.kind == "firstp":
        return FirstPSummarizer(spec.k)
    if spec.kind == "remote":
        return RemoteSummarizer(RemoteChatClient(spec.remote))
    from rankdigest.policy import PolicySummarizer, load_checkpoint

    if index is None:
        raise ConfigError("policy summarizer needs the retrieval index for idf features")
    return PolicySummarizer(load_checkpoint(spec.checkpoint), index)


def _summarize_one(backend: Summarizer, query: Query, doc: Document, fallback_k: int) -> Summary:
    try:
        text = backend.summarize(query, doc)
        name = backend.name
    except BackendUnavailable as exc:
        logger.warning(
            "Summarizer failed on %s/%s (%s); falling back to FirstP-%d", query.query_id, doc.doc_id, exc, fallback_k
        )
        text = first_p(doc, fallback_k)
        name = f"firstp-{fallback_k}-fallback"
    if not text.strip():
        logger.warning("Empty summary for %s/%s; using the safeguard phrase", query.query_id, doc.doc_id)
        text = SAFEGUARD_PHRASE
    return make_summary(query.query_id, doc.doc_id, text, name)


def summarize_pointwise(
    backend: Summarizer,
    query: Query,
    docs: Sequence[Document],
    parallelism: int = 1,
    fallback_k: int = FALLBACK_FIRSTP_K,
) -> List[Summary]:
    """
    Summarize each document independently.

    Failed documents fall back to FirstP so the output always has one
    summary per input document, in input order.
    """
    if not docs:
        raise ValueError("summarize_pointwise needs at least one document")
    if parallelism <= 1 or len(docs) == 1:
        return [_summarize_one(backend, query, doc, fallback_k) for doc in docs]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(lambda doc: _summarize_one(backend, query, doc, fallback_k), docs))


def summarize_run(
    backend: Summarizer,
    run: Iterable[RankedList],
    corpus: Mapping[str, Document],
    queries: Mapping[str, Query],
    parallelism: int = 1,
) -> List[Summary]:
    """Summaries for every (query, doc) of a run, in run order."""
    summaries: List[Summary] = []
    for ranked in run:
        if not len(ranked):
            continue
        docs = [corpus[doc_id] for doc_id in ranked.doc_ids()]
        summaries.extend(summarize_pointwise(backend, queries[ranked.query_id], docs, parallelism))
    logger.info("Summarized %d documents with %s", len(summaries), backend.name)
    return summaries


def write_summaries(summaries: Iterable[Summary], path: Union[str, Path]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as handle:
            for summary in summaries:
                handle.write(json.dumps(summary.to_record(), ensure_ascii=False, sort_keys=True))
                handle.write("\n")
    except OSError as exc:
        raise IoFailure(str(path), exc)


def load_summaries(path: Union[str, Path]) -> Dict[Tuple[str, str], Summary]:
    """Summaries keyed by (query_id, doc_id); later lines win."""
    path = Path(path)
    summaries: Dict[Tuple[str, str], Summary] = {}
    for line_no, line in read_lines(path):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            summary = make_summary(record["query_id"], record["doc_id"], record["text"], record["backend"])
        except (ValueError, KeyError, TypeError):
            raise MalformedRecord(str(path), line_no, line.rstrip("\n"), "invalid summary record")
        summaries[(summary.query_id, summary.doc_id)] = summary
    return summaries
