"""
Extractive summarization policy.

A rollout is a token sequence: a gate token (REJECT or CONTINUE) followed,
when the gate continues, by one INCLUDE/SKIP token per sentence. Every free
token is a Bernoulli draw whose logit is a linear function of hand-built
features. Once `budget` sentences are included the remaining tokens are
forced SKIPs; forced tokens carry no probability mass and never enter a loss.
"""

import logging
import math
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from rankdigest.errors import CheckpointError, IoFailure
from rankdigest.model import Document, Query
from rankdigest.parser import sentence_split
from rankdigest.retrieval import InvertedIndex
from rankdigest.summarize import SAFEGUARD_PHRASE

logger = logging.getLogger(__name__)

CHECKPOINT_HEADER = "rankdigest-policy v1"

GATE_DIM = 3
SENTENCE_DIM = 5
PARAM_DIM = GATE_DIM + SENTENCE_DIM
LENGTH_SCALE = 30.0
DEFAULT_BUDGET = 3

REJECT, CONTINUE = 0, 1
SKIP, INCLUDE = 0, 1


def log_sigmoid(z: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -z)


def sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(log_sigmoid(z))


@dataclass
class PolicyParams:
    """Gate weights (one per gate feature) and include weights (one per sentence feature)."""

    gate_weights: np.ndarray
    include_weights: np.ndarray

    def __post_init__(self):
        self.gate_weights = np.asarray(self.gate_weights, dtype=float).reshape(-1)
        self.include_weights = np.asarray(self.include_weights, dtype=float).reshape(-1)
        if self.gate_weights.shape != (GATE_DIM,) or self.include_weights.shape != (SENTENCE_DIM,):
            raise ValueError(
                f"expected {GATE_DIM} gate and {SENTENCE_DIM} include weights, "
                f"got {self.gate_weights.size} and {self.include_weights.size}"
            )

    @classmethod
    def zeros(cls) -> "PolicyParams":
        return cls(np.zeros(GATE_DIM), np.zeros(SENTENCE_DIM))

    @classmethod
    def from_flat(cls, flat: np.ndarray) -> "PolicyParams":
        flat = np.asarray(flat, dtype=float)
        return cls(flat[:GATE_DIM].copy(), flat[GATE_DIM:].copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.gate_weights, self.include_weights])

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.gate_weights.copy(), self.include_weights.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.flat())))


@dataclass(frozen=True)
class DocFeatures:
    """Features of one document for one query."""

    doc_id: str
    sentences: Tuple[str, ...]
    gate: np.ndarray
    sentence: np.ndarray
    overlaps: Tuple[float, ...]

    def __len__(self) -> int:
        return len(self.sentences)


def extract_features(
    query_terms: Mapping[str, float], doc_id: str, sentences: Sequence[str], index: InvertedIndex
) -> DocFeatures:
    """
    Per-sentence [bias, overlap fraction, idf-weighted overlap, 1/(1+position), min(1, length/30)]
    and gate [bias, max overlap, mean overlap].

    Args:
        query_terms: Distinct analyzed query terms mapped to their idf
        doc_id: Id of the document the sentences come from
        sentences: Output of sentence_split
        index: Index whose analyzer tokenizes the sentences
    """
    total_idf = sum(query_terms.values())
    rows = []
    overlaps = []
    for position, sentence in enumerate(sentences):
        matched = set(index.analyze(sentence)) & query_terms.keys()
        overlap = len(matched) / len(query_terms) if query_terms else 0.0
        idf_overlap = sum(query_terms[t] for t in matched) / total_idf if total_idf > 0 else 0.0
        length = min(1.0, len(sentence.split()) / LENGTH_SCALE)
        rows.append([1.0, overlap, idf_overlap, 1.0 / (1.0 + position), length])
        overlaps.append(overlap)
    if overlaps:
        gate = np.array([1.0, max(overlaps), sum(overlaps) / len(overlaps)])
    else:
        gate = np.array([1.0, 0.0, 0.0])
    sentence_matrix = np.array(rows, dtype=float).reshape(len(rows), SENTENCE_DIM)
    return DocFeatures(doc_id, tuple(sentences), gate, sentence_matrix, tuple(overlaps))


def query_term_weights(query: Query, index: InvertedIndex) -> Dict[str, float]:
    return {term: index.idf(term) for term in dict.fromkeys(index.analyze(query.text))}


def features(query: Query, doc: Document, index: InvertedIndex) -> DocFeatures:
    """Split a document into sentences and extract its features for a query."""
    return extract_features(query_term_weights(query, index), doc.doc_id, sentence_split(doc.text), index)


class FeatureCache:
    """Features per (query_id, doc_id), computed on first use."""

    def __init__(self, index: InvertedIndex, corpus: Mapping[str, Document]):
        self.index = index
        self.corpus = corpus
        self._cache: Dict[Tuple[str, str], DocFeatures] = {}
        self._lock = threading.Lock()

    def get(self, query: Query, doc_id: str) -> DocFeatures:
        key = (query.query_id, doc_id)
        with self._lock:
            cached = self._cache.get(key)
        if cached is None:
            cached = features(query, self.corpus[doc_id], self.index)
            with self._lock:
                self._cache[key] = cached
        return cached


@dataclass(frozen=True, eq=False)
class Rollout:
    """
    One decoded summary.

    decisions[0] is the gate token; decisions[1:] are per-sentence tokens
    (empty after a REJECT). `phi` holds one flat feature row per free token,
    `actions` the chosen value of each free token and `logprobs` their
    log-probabilities under the sampling policy.
    """

    doc_id: str
    decisions: Tuple[int, ...]
    forced: Tuple[bool, ...]
    phi: np.ndarray
    actions: np.ndarray
    logprobs: np.ndarray
    text: str

    @property
    def rejected(self) -> bool:
        return self.decisions[0] == REJECT

    @property
    def free_token_count(self) -> int:
        return int(self.actions.size)

    @property
    def log_prob(self) -> float:
        return float(self.logprobs.sum())


def _gate_row(feats: DocFeatures) -> np.ndarray:
    row = np.zeros(PARAM_DIM)
    row[:GATE_DIM] = feats.gate
    return row


def _sentence_row(feats: DocFeatures, i: int) -> np.ndarray:
    row = np.zeros(PARAM_DIM)
    row[GATE_DIM:] = feats.sentence[i]
    return row


def free_tokens(
    feats: DocFeatures, decisions: Sequence[int], budget: int
) -> Tuple[np.ndarray, np.ndarray, Tuple[bool, ...]]:
    """
    Flat feature rows and actions of the non-forced tokens of a decision sequence.

    Returns:
        (phi of shape (T, PARAM_DIM), actions of shape (T,), forced flag per decision)

    Raises:
        ValueError: If the sequence does not fit the document or breaks the budget
    """
    if not decisions:
        raise ValueError("a rollout has at least the gate token")
    expected = 1 if decisions[0] == REJECT else 1 + len(feats)
    if len(decisions) != expected:
        raise ValueError(f"{feats.doc_id}: expected {expected} decisions, got {len(decisions)}")
    rows = [_gate_row(feats)]
    actions = [decisions[0]]
    forced = [False]
    included = 0
    for i, action in enumerate(decisions[1:]):
        if included >= budget:
            if action != SKIP:
                raise ValueError(f"{feats.doc_id}: sentence {i} included past the budget of {budget}")
            forced.append(True)
            continue
        rows.append(_sentence_row(feats, i))
        actions.append(action)
        forced.append(False)
        included += action
    return np.array(rows), np.array(actions, dtype=float), tuple(forced)


def token_log_probs(params: PolicyParams, phi: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """log pi(a_t) for each free token: a*log(sigmoid(z)) + (1-a)*log(1-sigmoid(z))."""
    z = phi @ params.flat()
    return actions * log_sigmoid(z) + (1.0 - actions) * log_sigmoid(-z)


def rollout_log_prob(
    params: PolicyParams, feats: DocFeatures, decisions: Sequence[int], budget: int = DEFAULT_BUDGET
) -> float:
    """Sum of chosen-token log-probabilities over the non-forced tokens."""
    phi, actions, _ = free_tokens(feats, decisions, budget)
    return float(token_log_probs(params, phi, actions).sum())


def render_summary(feats: DocFeatures, decisions: Sequence[int]) -> str:
    """Included sentences in source order; the safeguard phrase when nothing is kept."""
    if decisions[0] == REJECT:
        return SAFEGUARD_PHRASE
    kept = [sentence for sentence, action in zip(feats.sentences, decisions[1:]) if action == INCLUDE]
    return " ".join(kept) if kept else SAFEGUARD_PHRASE


def make_rollout(
    params: PolicyParams, feats: DocFeatures, decisions: Sequence[int], budget: int = DEFAULT_BUDGET
) -> Rollout:
    decisions = tuple(int(d) for d in decisions)
    phi, actions, forced = free_tokens(feats, decisions, budget)
    logprobs = token_log_probs(params, phi, actions)
    return Rollout(feats.doc_id, decisions, forced, phi, actions, logprobs, render_summary(feats, decisions))


class DecodeCounter:
    """Thread-safe count of policy decodes."""

    def __init__(self):
        self._count = 0
        self._lock = threading.Lock()

    def increment(self, n: int = 1) -> None:
        with self._lock:
            self._count += n

    @property
    def count(self) -> int:
        return self._count

    def reset(self) -> int:
        with self._lock:
            previous, self._count = self._count, 0
        return previous


# every decode in the process, whichever caller asked for it
DECODES = DecodeCounter()


def _decode(params: PolicyParams, feats: DocFeatures, budget: int, choose) -> Tuple[int, ...]:
    DECODES.increment()
    gate = int(choose(float(sigmoid(feats.gate @ params.gate_weights))))
    if gate == REJECT:
        return (REJECT,)
    decisions = [CONTINUE]
    included = 0
    logits = feats.sentence @ params.include_weights if len(feats) else np.zeros(0)
    for i in range(len(feats)):
        if included >= budget:
            decisions.append(SKIP)
            continue
        action = int(choose(float(sigmoid(logits[i]))))
        decisions.append(action)
        included += action
    return tuple(decisions)


def sample_rollouts(
    params: PolicyParams,
    feats: DocFeatures,
    group_size: int,
    seed: Union[int, np.random.Generator],
    budget: int = DEFAULT_BUDGET,
    counter: Optional[DecodeCounter] = None,
) -> List[Rollout]:
    """
    Draw independent rollouts by ancestral sampling.

    Stored log-probabilities are those of `params`, the sampling-time policy.
    """
    if group_size < 2:
        raise ValueError(f"group_size must be >= 2, got {group_size}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    group = []
    for _ in range(group_size):
        decisions = _decode(params, feats, budget, lambda p: rng.random() < p)
        group.append(make_rollout(params, feats, decisions, budget))
    if counter is not None:
        counter.increment(group_size)
    return group


def greedy_rollout(
    params: PolicyParams, feats: DocFeatures, budget: int = DEFAULT_BUDGET, counter: Optional[DecodeCounter] = None
) -> Rollout:
    """Deterministic decode; probability ties go to CONTINUE and INCLUDE."""
    decisions = _decode(params, feats, budget, lambda p: p >= 0.5)
    if counter is not None:
        counter.increment()
    return make_rollout(params, feats, decisions, budget)


def enumerate_rollouts(
    params: PolicyParams, feats: DocFeatures, budget: int = DEFAULT_BUDGET
) -> List[Tuple[Rollout, float]]:
    """Every possible rollout with its probability. Exponential in sentences; small documents only."""
    sequences: List[Tuple[int, ...]] = [(REJECT,)]

    def extend(prefix: Tuple[int, ...], included: int) -> None:
        i = len(prefix) - 1
        if i == len(feats):
            sequences.append(prefix)
            return
        if included >= budget:
            extend(prefix + (SKIP,), included)
            return
        extend(prefix + (SKIP,), included)
        extend(prefix + (INCLUDE,), included + 1)

    extend((CONTINUE,), 0)
    rollouts = [make_rollout(params, feats, seq, budget) for seq in sequences]
    return [(r, math.exp(r.log_prob)) for r in rollouts]


def teacher_labels(feats: DocFeatures, tau: float = 0.2, budget: int = DEFAULT_BUDGET) -> Tuple[int, ...]:
    """
    Heuristic teacher decisions: INCLUDE iff a sentence's overlap >= tau, REJECT iff none qualifies.

    Qualifying sentences past the budget become forced SKIPs.
    """
    qualifies = [overlap >= tau for overlap in feats.overlaps]
    if not any(qualifies):
        return (REJECT,)
    decisions = [CONTINUE]
    included = 0
    for ok in qualifies:
        if ok and included < budget:
            decisions.append(INCLUDE)
            included += 1
        else:
            decisions.append(SKIP)
    return tuple(decisions)


class PolicySummarizer:
    """Summarizer backend decoding the policy greedily."""

    name = "policy"

    def __init__(
        self,
        params: PolicyParams,
        index: InvertedIndex,
        budget: int = DEFAULT_BUDGET,
        counter: Optional[DecodeCounter] = None,
    ):
        self.params = params
        self.index = index
        self.budget = budget
        self.counter = counter

    def summarize(self, query: Query, doc: Document) -> str:
        return greedy_rollout(self.params, features(query, doc, self.index), self.budget, self.counter).text

    def probe(self) -> None:
        return None


def save_checkpoint(params: PolicyParams, path: Union[str, Path]) -> None:
    """Versioned text checkpoint: a header line, then `name<TAB>v1 v2 ...` per vector."""
    if not params.is_finite():
        raise CheckpointError("Refusing to save a checkpoint with non-finite weights")
    lines = [CHECKPOINT_HEADER]
    for name in ("gate_weights", "include_weights"):
        lines.append(name + "\t" + " ".join(repr(float(v)) for v in getattr(params, name)))
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(path), exc)
    logger.info("Saved policy checkpoint to %s", path)


def load_checkpoint(path: Union[str, Path]) -> PolicyParams:
    """
    Read a checkpoint written by save_checkpoint.

    Raises:
        IoFailure: If the file cannot be read
        CheckpointError: On a wrong header, missing vectors, bad numbers or wrong dimensions
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise IoFailure(str(path), exc)
    if not lines or lines[0].strip() != CHECKPOINT_HEADER:
        raise CheckpointError(f"{path}: expected header {CHECKPOINT_HEADER!r}")
    vectors: Dict[str, List[float]] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        name, sep, values = line.partition("\t")
        if not sep:
            raise CheckpointError(f"{path}:{line_no}: expected name<TAB>values")
        try:
            vectors[name] = [float(v) for v in values.split()]
        except ValueError:
            raise CheckpointError(f"{path}:{line_no}: non-numeric value in {name}")
    try:
        params = PolicyParams(vectors["gate_weights"], vectors["include_weights"])
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing vector {exc.args[0]}")
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}")
    if not params.is_finite():
        raise CheckpointError(f"{path}: non-finite weights")
    return params

