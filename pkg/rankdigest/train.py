"""Cold-start SFT and group-relative policy optimization of the extractive policy."""

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from rankdigest.config import GrpoConfig, SftConfig, WindowPlan
from rankdigest.errors import IndexOutOfRange, IoFailure, NonFiniteGradient
from rankdigest.metrics import ndcg_for_doc_ids
from rankdigest.model import Label, QrelsTable, RlInstance
from rankdigest.policy import (
    DECODES,
    DecodeCounter,
    DocFeatures,
    FeatureCache,
    PolicyParams,
    Rollout,
    free_tokens,
    greedy_rollout,
    log_sigmoid,
    sample_rollouts,
    sigmoid,
    teacher_labels,
    token_log_probs,
)
from rankdigest.rerank import Candidate, RerankerBackend, sliding_window_order
from rankdigest.summarize import detect_safeguard

logger = logging.getLogger(__name__)

METRICS_COLUMNS = ("epoch", "mean_reward", "mean_kl", "clip_fraction", "heldout_ndcg10")


def sft_step(
    params: PolicyParams, feats: DocFeatures, labels: Sequence[int], budget: int
) -> Tuple[float, PolicyParams]:
    """
    Mean negative log-likelihood of the teacher decisions over non-forced tokens.

    Returns:
        (loss, gradient of the loss with respect to params)
    """
    phi, actions, _ = free_tokens(feats, labels, budget)
    loss = -float(token_log_probs(params, phi, actions).mean())
    p = sigmoid(phi @ params.flat())
    grad = -((actions - p) @ phi) / actions.size
    return loss, PolicyParams.from_flat(grad)


def train_sft(
    instances: Sequence[RlInstance],
    cache: FeatureCache,
    cfg: Optional[SftConfig] = None,
    init: Optional[PolicyParams] = None,
) -> Tuple[PolicyParams, List[float]]:
    """
    Fit the policy to heuristic teacher labels on every candidate of every instance.

    Returns:
        (trained params, mean loss per epoch)
    """
    cfg = cfg or SftConfig()
    params = (init or PolicyParams.zeros()).copy()
    examples: List[Tuple[DocFeatures, Tuple[int, ...]]] = []
    for instance in instances:
        for doc_id in instance.doc_ids():
            feats = cache.get(instance.query, doc_id)
            examples.append((feats, teacher_labels(feats, cfg.tau, cfg.budget)))
    if not examples:
        raise ValueError("train_sft needs at least one instance")
    rng = np.random.default_rng(cfg.seed)
    losses = []
    for epoch in range(1, cfg.epochs + 1):
        total = 0.0
        for i in rng.permutation(len(examples)):
            feats, labels = examples[i]
            loss, grad = sft_step(params, feats, labels, cfg.budget)
            params = PolicyParams.from_flat(params.flat() - cfg.learning_rate * grad.flat())
            total += loss
        if not params.is_finite():
            raise NonFiniteGradient(epoch)
        losses.append(total / len(examples))
        logger.info("SFT epoch %d/%d: mean loss %.4f over %d examples", epoch, cfg.epochs, losses[-1], len(examples))
    return params, losses


def assemble_eval_list(instance: RlInstance, t: int, y: Rollout) -> List[str]:
    """
    Background texts with position t replaced by the rollout's text.

    Raises:
        IndexOutOfRange: If t is not a valid position
    """
    size = len(instance.background)
    if t < 0 or t >= size:
        raise IndexOutOfRange(t, size)
    texts = [summary.text for summary in instance.background]
    texts[t] = y.text
    return texts


def list_ndcg(
    instance: RlInstance,
    texts: Sequence[str],
    backend: RerankerBackend,
    qrels: QrelsTable,
    k: int = 10,
) -> float:
    """NDCG@k of the reranked candidate list, judged against qrels restricted to the list."""
    doc_ids = instance.doc_ids()
    candidates = [Candidate(doc_id, text) for doc_id, text in zip(doc_ids, texts)]
    plan = WindowPlan(window_size=max(len(candidates), 1), step=max(len(candidates), 1))
    reordered = sliding_window_order(backend, instance.query, candidates, plan)
    restricted = qrels.restrict(instance.query.query_id, doc_ids)
    return ndcg_for_doc_ids([c.doc_id for c in reordered], instance.query.query_id, restricted, k)


def compute_reward(
    instance: RlInstance,
    t: int,
    y: Rollout,
    backend: RerankerBackend,
    qrels: QrelsTable,
    penalty_lambda: float = 0.25,
    k: int = 10,
) -> float:
    """
    Rank-driven reward of one rollout for target position t.

    Positive target: the NDCG of the mixed list. Negative target: 1.0 when the
    rollout is the safeguard phrase, otherwise that NDCG minus the penalty.
    """
    label = instance.candidates[t].label
    if label is Label.NEGATIVE and detect_safeguard(y.text):
        return 1.0
    ndcg = list_ndcg(instance, assemble_eval_list(instance, t, y), backend, qrels, k)
    if label is Label.POSITIVE:
        return ndcg
    return ndcg - penalty_lambda


def normalize_advantages(rewards: Sequence[float], std_floor: float = 1e-8) -> np.ndarray:
    """Z-scores within the group (population std); all zeros when the std is below the floor."""
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size < 2:
        raise ValueError("a group needs at least two rewards")
    sigma = rewards.std()
    if sigma < std_floor:
        return np.zeros_like(rewards)
    return (rewards - rewards.mean()) / sigma


def bernoulli_kl(z: np.ndarray, z_ref: np.ndarray) -> np.ndarray:
    """KL(Bern(sigmoid(z)) || Bern(sigmoid(z_ref))) elementwise."""
    p = sigmoid(z)
    kl = p * (log_sigmoid(z) - log_sigmoid(z_ref)) + (1.0 - p) * (log_sigmoid(-z) - log_sigmoid(-z_ref))
    return np.maximum(kl, 0.0)


@dataclass
class StepStats:
    objective: float
    surrogate: float
    kl: float
    clipped_tokens: int
    tokens: int


def grpo_objective(
    params: PolicyParams,
    ref_params: PolicyParams,
    group: Sequence[Rollout],
    advantages: Sequence[float],
    clip_epsilon: float = 0.2,
    kl_beta: float = 0.001,
) -> Tuple[StepStats, np.ndarray]:
    """
    Clipped group-relative objective and its gradient with respect to the flat params.

    Each rollout contributes the per-token mean of min(rho*A, clip(rho)*A) - beta*KL,
    and the group objective is the mean over rollouts. The old-policy log-probs
    are the ones stored on each rollout. KL is exact per-token Bernoulli KL to
    the reference policy.
    """
    theta = params.flat()
    theta_ref = ref_params.flat()
    grad = np.zeros_like(theta)
    objective = surrogate_total = kl_total = 0.0
    clipped = tokens = 0
    for rollout, advantage in zip(group, advantages):
        z = rollout.phi @ theta
        z_ref = rollout.phi @ theta_ref
        p = sigmoid(z)
        logp = rollout.actions * log_sigmoid(z) + (1.0 - rollout.actions) * log_sigmoid(-z)
        ratio = np.exp(logp - rollout.logprobs)
        clipped_ratio = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
        unclipped_term = ratio * advantage
        clipped_term = clipped_ratio * advantage
        use_clipped = clipped_term < unclipped_term
        surrogate = np.where(use_clipped, clipped_term, unclipped_term)
        kl = bernoulli_kl(z, z_ref)
        count = rollout.actions.size

        # d log pi / d z = (a - p); d KL / d z = p(1 - p)(z - z_ref)
        d_surrogate = np.where(use_clipped, 0.0, advantage * ratio * (rollout.actions - p))
        d_kl = p * (1.0 - p) * (z - z_ref)
        grad += ((d_surrogate - kl_beta * d_kl) @ rollout.phi) / count

        objective += float((surrogate - kl_beta * kl).mean())
        surrogate_total += float(surrogate.mean())
        kl_total += float(kl.mean())
        clipped += int(np.sum(use_clipped & (advantage != 0.0)))
        tokens += count
    size = len(group)
    stats = StepStats(objective / size, surrogate_total / size, kl_total / size, clipped, tokens)
    return stats, grad / size


def grpo_step(
    params: PolicyParams,
    ref_params: PolicyParams,
    group: Sequence[Rollout],
    advantages: Sequence[float],
    cfg: GrpoConfig,
    step: int = 0,
    dump_dir: Optional[Union[str, Path]] = None,
) -> Tuple[StepStats, PolicyParams]:
    """
    One gradient-ascent update on the group objective.

    Raises:
        NonFiniteGradient: If the objective, gradient or updated params are not finite
    """
    stats, grad = grpo_objective(params, ref_params, group, advantages, cfg.clip_epsilon, cfg.kl_beta)
    updated = PolicyParams.from_flat(params.flat() + cfg.learning_rate * grad)
    if not (math.isfinite(stats.objective) and np.all(np.isfinite(grad)) and updated.is_finite()):
        raise NonFiniteGradient(step, _dump_state(dump_dir, step, params, grad, advantages))
    return stats, updated


def _dump_state(
    dump_dir: Optional[Union[str, Path]], step: int, params: PolicyParams, grad: np.ndarray, advantages
) -> Optional[str]:
    if dump_dir is None:
        return None
    path = Path(dump_dir) / f"nonfinite-step{step}.json"
    state = {
        "step": step,
        "params": [repr(float(v)) for v in params.flat()],
        "grad": [repr(float(v)) for v in grad],
        "advantages": [repr(float(v)) for v in advantages],
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(state, indent=2), encoding="utf-8")
    except OSError as exc:
        logger.error("Could not dump training state to %s: %s", path, exc)
        return None
    return str(path)


@dataclass
class EpochMetrics:
    epoch: int
    mean_reward: float
    mean_kl: float
    clip_fraction: float
    heldout_ndcg10: float


@dataclass
class PolicyEvaluation:
    """Held-out quality of a policy: mean list NDCG and safeguard rate on negatives."""

    mean_ndcg: float
    safeguard_rate: float
    per_query: Dict[str, float] = field(default_factory=dict)


def evaluate_policy(
    params: PolicyParams,
    instances: Sequence[RlInstance],
    cache: FeatureCache,
    backend: RerankerBackend,
    qrels: QrelsTable,
    budget: int = 3,
    k: int = 10,
) -> PolicyEvaluation:
    """Decode every candidate greedily, rerank each list and score it against list-restricted qrels."""
    per_query: Dict[str, float] = {}
    negatives = safeguarded = 0
    for instance in instances:
        texts = []
        for candidate in instance.candidates:
            text = greedy_rollout(params, cache.get(instance.query, candidate.doc_id), budget).text
            texts.append(text)
            if candidate.label is Label.NEGATIVE:
                negatives += 1
                safeguarded += detect_safeguard(text)
        per_query[instance.query.query_id] = list_ndcg(instance, texts, backend, qrels, k)
    mean_ndcg = sum(per_query.values()) / len(per_query) if per_query else 0.0
    rate = safeguarded / negatives if negatives else 0.0
    return PolicyEvaluation(mean_ndcg, rate, per_query)


def select_targets(instance: RlInstance, mode: str, rng: np.random.Generator) -> List[int]:
    """One positive and one negative position, or a single uniformly drawn position."""
    if mode == "random":
        return [int(rng.integers(len(instance.candidates)))]
    positives = instance.positive_positions()
    negatives = instance.negative_positions()
    return [int(rng.choice(positives)), int(rng.choice(negatives))]


def train_grpo(
    instances: Sequence[RlInstance],
    cache: FeatureCache,
    backend: RerankerBackend,
    qrels: QrelsTable,
    init: PolicyParams,
    cfg: Optional[GrpoConfig] = None,
    heldout: Sequence[RlInstance] = (),
    counter: Optional[DecodeCounter] = None,
    dump_dir: Optional[Union[str, Path]] = None,
) -> Tuple[PolicyParams, List[EpochMetrics]]:
    """
    Optimize the policy against rank-driven rewards on frozen background lists.

    The reference policy for the KL term is `init`. Each target step samples
    exactly group_size rollouts of the target document; the background is
    never decoded again.

    Returns:
        (trained params, one EpochMetrics per epoch)

    Raises:
        RuntimeError: If a step decodes anything besides its group_size target rollouts
        NonFiniteGradient: If an update produces a non-finite gradient
    """
    cfg = cfg or GrpoConfig()
    if not backend.deterministic:
        logger.warning("Reranker %s is not deterministic; rewards are not reproducible", backend.name)
    counter = counter or DecodeCounter()
    ref_params = init.copy()
    params = init.copy()
    rng = np.random.default_rng(cfg.seed)
    history: List[EpochMetrics] = []
    step = 0
    pool = ThreadPoolExecutor(max_workers=cfg.reward_workers) if cfg.reward_workers > 1 else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            started = time.perf_counter()
            rewards_seen: List[float] = []
            kls: List[float] = []
            clipped = tokens = 0
            for i in rng.permutation(len(instances)):
                instance = instances[i]
                for t in select_targets(instance, cfg.target_selection, rng):
                    feats = cache.get(instance.query, instance.candidates[t].doc_id)
                    before = DECODES.count
                    group = sample_rollouts(params, feats, cfg.group_size, rng, cfg.budget, counter)

                    def reward(y: Rollout) -> float:
                        return compute_reward(instance, t, y, backend, qrels, cfg.penalty_lambda, cfg.reward_ndcg_k)

                    rewards = list(pool.map(reward, group)) if pool else [reward(y) for y in group]
                    # sampling plus rewards must decode the target only; background summaries stay frozen
                    decoded = DECODES.count - before
                    if decoded != cfg.group_size:
                        raise RuntimeError(f"step {step} decoded {decoded} summaries, expected {cfg.group_size}")
                    advantages = normalize_advantages(rewards, cfg.std_floor)
                    for _ in range(cfg.updates_per_group):
                        stats, params = grpo_step(params, ref_params, group, advantages, cfg, step, dump_dir)
                        kls.append(stats.kl)
                        clipped += stats.clipped_tokens
                        tokens += stats.tokens
                    rewards_seen.extend(rewards)
                    step += 1
            heldout_ndcg = float("nan")
            if heldout:
                heldout_ndcg = evaluate_policy(
                    params, heldout, cache, backend, qrels, cfg.budget, cfg.reward_ndcg_k
                ).mean_ndcg
            metrics = EpochMetrics(
                epoch=epoch,
                mean_reward=float(np.mean(rewards_seen)) if rewards_seen else 0.0,
                mean_kl=float(np.mean(kls)) if kls else 0.0,
                clip_fraction=clipped / tokens if tokens else 0.0,
                heldout_ndcg10=heldout_ndcg,
            )
            history.append(metrics)
            logger.info(
                "GRPO epoch %d/%d: reward %.4f kl %.6f clip %.3f heldout ndcg %.4f (%.1fs)",
                epoch,
                cfg.epochs,
                metrics.mean_reward,
                metrics.mean_kl,
                metrics.clip_fraction,
                metrics.heldout_ndcg10,
                time.perf_counter() - started,
            )
    finally:
        if pool is not None:
            pool.shutdown()
    return params, history


def _format_metric(value: float) -> str:
    return "nan" if math.isnan(value) else f"{value:.6f}"


def write_metrics_csv(history: Sequence[EpochMetrics], path: Union[str, Path]) -> None:
    """CSV with one row per epoch."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(METRICS_COLUMNS)
            for metrics in history:
                row = asdict(metrics)
                writer.writerow([metrics.epoch] + [_format_metric(row[c]) for c in METRICS_COLUMNS[1:]])
    except OSError as exc:
        raise IoFailure(str(path), exc)


def read_metrics_csv(path: Union[str, Path]) -> List[Mapping[str, str]]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as handle:
            return list(csv.DictReader(handle))
    except (OSError, UnicodeDecodeError) as exc:
        raise IoFailure(str(path), exc)
