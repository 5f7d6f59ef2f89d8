"""Training environment: labeled candidate lists and frozen background summaries."""

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from rankdigest.config import Bm25Params, RlDataConfig
from rankdigest.errors import InsufficientJudgments, IoFailure, MalformedRecord
from rankdigest.model import Document, Label, LabeledCandidate, QrelsTable, Query, RlInstance, Summary
from rankdigest.retrieval import InvertedIndex, retrieve_top_n
from rankdigest.summarize import FirstPSummarizer, Summarizer, make_summary, summarize_pointwise

logger = logging.getLogger(__name__)


def derive_seed(global_seed: int, query_id: str) -> int:
    """Per-query seed: the first 8 bytes of SHA-256 over "{seed}:{query_id}"."""
    digest = hashlib.sha256(f"{global_seed}:{query_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _label(qrels: QrelsTable, query_id: str, doc_id: str, threshold: int) -> Label:
    return Label.POSITIVE if qrels.grade(query_id, doc_id) >= threshold else Label.NEGATIVE


def _sample(pool: Sequence[str], exclude: Sequence[str], size: int, rng: np.random.Generator) -> List[str]:
    taken = set(exclude)
    eligible = sorted(d for d in pool if d not in taken)
    size = min(size, len(eligible))
    if size == 0:
        return []
    return [eligible[i] for i in rng.choice(len(eligible), size=size, replace=False)]


def build_candidate_list(
    query: Query,
    index: InvertedIndex,
    qrels: QrelsTable,
    cfg: Optional[RlDataConfig] = None,
    bm25: Optional[Bm25Params] = None,
) -> Tuple[List[LabeledCandidate], int]:
    """
    Top-n BM25 candidates guaranteed to hold both a positive and a negative.

    When one label is missing from the retrieved list, its k lowest-ranked
    entries are replaced by docs sampled from the judged pool of the missing
    label. Short lists are first padded from both judged pools. The result is
    shuffled with the per-query seed.

    Returns:
        (labeled candidates, number of injected docs)

    Raises:
        InsufficientJudgments: If the judged pools cannot supply both labels or a full list
    """
    cfg = cfg or RlDataConfig()
    qid = query.query_id
    positives = [d for d in qrels.positives(qid, cfg.positive_threshold) if index.has_doc(d)]
    negatives = [d for d in qrels.negatives(qid, cfg.positive_threshold) if index.has_doc(d)]
    if not positives:
        raise InsufficientJudgments(qid, "no judged positive in the corpus")
    if not negatives:
        raise InsufficientJudgments(qid, "no judged negative in the corpus")

    rng = np.random.default_rng(derive_seed(cfg.seed, qid))
    doc_ids = retrieve_top_n(index, query, cfg.n, bm25).doc_ids()
    injected = 0
    if len(doc_ids) < cfg.n:
        padding = _sample(positives + negatives, doc_ids, cfg.n - len(doc_ids), rng)
        doc_ids.extend(padding)
        injected += len(padding)
        if len(doc_ids) < cfg.n:
            raise InsufficientJudgments(qid, f"only {len(doc_ids)} candidates available for a list of {cfg.n}")

    labels = {_label(qrels, qid, d, cfg.positive_threshold) for d in doc_ids}
    for missing, pool in ((Label.POSITIVE, positives), (Label.NEGATIVE, negatives)):
        if missing in labels:
            continue
        sampled = _sample(pool, doc_ids, cfg.k, rng)
        doc_ids = doc_ids[: len(doc_ids) - len(sampled)] + sampled
        injected += len(sampled)

    order = rng.permutation(len(doc_ids))
    candidates = [
        LabeledCandidate(doc_ids[i], _label(qrels, qid, doc_ids[i], cfg.positive_threshold)) for i in order
    ]
    return candidates, injected


def build_background_summaries(
    query: Query,
    candidates: Sequence[LabeledCandidate],
    backend: Summarizer,
    corpus: Mapping[str, Document],
) -> List[Summary]:
    """One summary per candidate, positionally aligned, decoded once and frozen."""
    return summarize_pointwise(backend, query, [corpus[c.doc_id] for c in candidates])


def background_backend(kind: str, policy_backend: Optional[Summarizer] = None) -> Summarizer:
    """The summarizer for a background source: the cold-start policy or raw FirstP text."""
    if kind == "sft":
        if policy_backend is None:
            raise ValueError("background 'sft' needs the cold-start policy")
        return policy_backend
    return FirstPSummarizer(int(kind.split("-")[1]))


def build_rl_dataset(
    queries: Sequence[Query],
    index: InvertedIndex,
    qrels: QrelsTable,
    corpus: Mapping[str, Document],
    cfg: Optional[RlDataConfig] = None,
    background: Optional[Summarizer] = None,
    bm25: Optional[Bm25Params] = None,
    parallelism: int = 1,
) -> Tuple[List[RlInstance], List[str]]:
    """
    Build one instance per usable query.

    Backgrounds are filled when a summarizer is given; otherwise they stay
    empty until attach_backgrounds is called with the cold-start policy.

    Returns:
        (instances in query order, ids of skipped queries)
    """
    cfg = cfg or RlDataConfig()

    def one(query: Query) -> Optional[RlInstance]:
        try:
            candidates, injected = build_candidate_list(query, index, qrels, cfg, bm25)
        except InsufficientJudgments as exc:
            logger.warning("Skipping query: %s", exc.message)
            return None
        instance = RlInstance(query, candidates, [], injected, derive_seed(cfg.seed, query.query_id))
        if background is not None:
            instance.background = build_background_summaries(query, candidates, background, corpus)
        instance.validate()
        return instance

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            built = list(pool.map(one, queries))
    else:
        built = [one(query) for query in queries]
    instances = [instance for instance in built if instance is not None]
    skipped = [query.query_id for query, instance in zip(queries, built) if instance is None]
    injected = sum(instance.injected_count for instance in instances)
    logger.info("Built %d RL instances (%d skipped, %d injected docs)", len(instances), len(skipped), injected)
    return instances, skipped


def attach_backgrounds(
    instances: Sequence[RlInstance], backend: Summarizer, corpus: Mapping[str, Document], overwrite: bool = False
) -> None:
    """Fill missing background lists in place."""
    filled = 0
    for instance in instances:
        if instance.background and not overwrite:
            continue
        instance.background = build_background_summaries(instance.query, instance.candidates, backend, corpus)
        filled += 1
    logger.info("Decoded backgrounds for %d instances with %s", filled, backend.name)


def background_checksum(instance: RlInstance) -> str:
    """SHA-256 over the background texts, in order."""
    digest = hashlib.sha256()
    for summary in instance.background:
        digest.update(summary.text.encode("utf-8"))
        digest.update(b"\0")
    return digest.hexdigest()


def instance_to_record(instance: RlInstance) -> dict:
    return {
        "query_id": instance.query.query_id,
        "query": instance.query.text,
        "candidates": [{"doc_id": c.doc_id, "label": c.label.value} for c in instance.candidates],
        "background": [s.to_record() for s in instance.background],
        "injected_count": instance.injected_count,
        "seed": instance.seed,
    }


def instance_from_record(record: dict) -> RlInstance:
    query = Query(record["query_id"], record["query"])
    candidates = [LabeledCandidate(c["doc_id"], Label(c["label"])) for c in record["candidates"]]
    background = [
        make_summary(s["query_id"], s["doc_id"], s["text"], s["backend"]) for s in record.get("background", [])
    ]
    instance = RlInstance(query, candidates, background, int(record["injected_count"]), int(record["seed"]))
    instance.validate()
    return instance


def write_rl_instances(instances: Sequence[RlInstance], path: Union[str, Path]) -> None:
    """One JSON instance per line."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as handle:
            for instance in instances:
                handle.write(json.dumps(instance_to_record(instance), ensure_ascii=False, sort_keys=True))
                handle.write("\n")
    except OSError as exc:
        raise IoFailure(str(path), exc)


def load_rl_instances(path: Union[str, Path]) -> List[RlInstance]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise IoFailure(str(path), exc)
    instances = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            instances.append(instance_from_record(json.loads(line)))
        except (ValueError, KeyError, TypeError):
            raise MalformedRecord(str(path), line_no, line, "invalid RL instance")
    return instances


def split_instances(
    instances: Sequence[RlInstance], heldout_ids: Sequence[str]
) -> Tuple[List[RlInstance], List[RlInstance]]:
    """(training instances, held-out instances) by query id."""
    heldout = set(heldout_ids)
    train = [i for i in instances if i.query.query_id not in heldout]
    held = [i for i in instances if i.query.query_id in heldout]
    return train, held
