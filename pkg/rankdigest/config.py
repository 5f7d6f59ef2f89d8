"""Configuration models, YAML loading and environment overrides."""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from rankdigest.errors import ConfigError

logger = logging.getLogger(__name__)

CONFIG_ENV = "RANKDIGEST_CONFIG"
API_KEY_ENV = "RANKDIGEST_API_KEY"
LOG_LEVEL_ENV = "RANKDIGEST_LOG_LEVEL"


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class Bm25Params(_Frozen):
    """BM25 saturation k1 > 0 and length normalization b in [0, 1]."""

    k1: float = Field(0.9, gt=0)
    b: float = Field(0.4, ge=0.0, le=1.0)


class WindowPlan(_Frozen):
    """Sliding-window size and step, 1 <= step <= window_size."""

    window_size: int = Field(20, ge=1)
    step: int = Field(10, ge=1)

    @model_validator(mode="after")
    def _step_within_window(self) -> "WindowPlan":
        if self.step > self.window_size:
            raise ValueError(f"step {self.step} must not exceed window_size {self.window_size}")
        return self


class MetricConfig(_Frozen):
    ndcg_k: int = Field(10, ge=1)
    map_k: int = Field(100, ge=1)
    gain: Literal["linear", "exponential"] = "linear"
    map_binarize_threshold: int = Field(1, ge=1)


class RlDataConfig(_Frozen):
    """Candidate-list size n, injection count k < n, and the positive grade threshold."""

    n: int = Field(10, ge=2)
    k: int = Field(1, ge=1)
    positive_threshold: int = Field(1, ge=1)
    seed: int = 7
    background: Literal["sft", "firstp-128", "firstp-256"] = "sft"

    @model_validator(mode="after")
    def _k_below_n(self) -> "RlDataConfig":
        if self.k >= self.n:
            raise ValueError(f"k ({self.k}) must be smaller than n ({self.n})")
        return self


class SftConfig(_Frozen):
    epochs: int = Field(5, ge=1)
    learning_rate: float = Field(0.05, gt=0)
    tau: float = Field(0.2, ge=0.0, le=1.0)
    budget: int = Field(3, ge=1)
    seed: int = 7


class GrpoConfig(_Frozen):
    group_size: int = Field(8, ge=2)
    clip_epsilon: float = Field(0.2, gt=0.0, lt=1.0)
    kl_beta: float = Field(0.001, ge=0.0)
    penalty_lambda: float = Field(0.25, ge=0.0)
    learning_rate: float = Field(0.05, gt=0)
    epochs: int = Field(5, ge=1)
    budget: int = Field(3, ge=1)
    std_floor: float = Field(1e-8, gt=0)
    reward_ndcg_k: int = Field(10, ge=1)
    seed: int = 7
    init: Literal["sft", "zero"] = "sft"
    target_selection: Literal["pos_neg", "random"] = "pos_neg"
    updates_per_group: int = Field(1, ge=1)
    reward_workers: int = Field(1, ge=1)


class SyntheticConfig(_Frozen):
    """Shape of the generated corpus: judged docs per query and document lengths in sentences."""

    queries: int = Field(300, ge=2)
    query_terms: int = Field(3, ge=2)
    positives: int = Field(4, ge=1)
    hard_negatives: int = Field(5, ge=0)
    easy_negatives: int = Field(2, ge=0)
    lead_sentences: int = Field(5, ge=1)
    min_sentences: int = Field(10, ge=3)
    max_sentences: int = Field(40, ge=3)
    filler_vocabulary: int = Field(1500, ge=50)
    heldout_fraction: float = Field(0.25, gt=0.0, lt=1.0)
    seed: int = 7

    @model_validator(mode="after")
    def _sentence_range(self) -> "SyntheticConfig":
        if self.min_sentences > self.max_sentences:
            raise ValueError("min_sentences must not exceed max_sentences")
        if self.hard_negatives + self.easy_negatives < 1:
            raise ValueError("each query needs at least one judged negative")
        if self.lead_sentences < self.query_terms:
            raise ValueError("lead_sentences must leave room for one sentence per query term")
        return self


class RemoteSpec(_Frozen):
    """An OpenAI-style chat completions endpoint."""

    url: str
    model: str
    api_key_env: str = API_KEY_ENV
    timeout_s: float = Field(60.0, gt=0)
    max_retries: int = Field(3, ge=0)
    backoff_s: float = Field(1.0, ge=0)
    system_prompt: str = "You are a helpful assistant."


class SummarizerSpec(_Frozen):
    kind: Literal["firstp", "policy", "remote"] = "firstp"
    k: int = Field(128, ge=1)
    checkpoint: Optional[Path] = None
    remote: Optional[RemoteSpec] = None
    parallelism: int = Field(8, ge=1)

    @model_validator(mode="after")
    def _backend_settings(self) -> "SummarizerSpec":
        if self.kind == "policy" and self.checkpoint is None:
            raise ValueError("policy summarizer needs a checkpoint")
        if self.kind == "remote" and self.remote is None:
            raise ValueError("remote summarizer needs remote settings")
        return self

    @property
    def name(self) -> str:
        if self.kind == "firstp":
            return f"firstp-{self.k}"
        return self.kind


class RerankerSpec(_Frozen):
    kind: Literal["oracle", "lexical", "remote"] = "lexical"
    remote: Optional[RemoteSpec] = None
    parallelism: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _backend_settings(self) -> "RerankerSpec":
        if self.kind == "remote" and self.remote is None:
            raise ValueError("remote reranker needs remote settings")
        return self


class PipelineConfig(_Frozen):
    """Everything one summarize-then-rank run needs, defaults as in the evaluation protocol."""

    corpus: Path
    queries: Path
    qrels: Path
    output_dir: Path = Path("runs/default")
    topk: int = Field(100, ge=1)
    bm25: Bm25Params = Bm25Params()
    stem: bool = False
    stopwords: bool = False
    summarizer: SummarizerSpec = SummarizerSpec()
    reranker: RerankerSpec = RerankerSpec()
    window: WindowPlan = WindowPlan()
    metrics: MetricConfig = MetricConfig()
    rl_data: RlDataConfig = RlDataConfig()
    sft: SftConfig = SftConfig()
    grpo: GrpoConfig = GrpoConfig()
    seed: int = 7

    def validate_paths(self) -> None:
        """
        Check that every dataset path exists.

        Raises:
            ConfigError: If a path is missing
        """
        for name in ("corpus", "queries", "qrels"):
            path = getattr(self, name)
            if not Path(path).exists():
                raise ConfigError(f"{name} path does not exist: {path}")
        checkpoint = self.summarizer.checkpoint
        if checkpoint is not None and not Path(checkpoint).exists():
            raise ConfigError(f"summarizer checkpoint does not exist: {checkpoint}")


def deep_merge(base: Mapping[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """Recursively merge overrides into base; None override values are ignored."""
    merged: Dict[str, Any] = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, Mapping):
            base_value = merged.get(key)
            nested = deep_merge(base_value if isinstance(base_value, Mapping) else {}, value)
            if nested or key in merged:
                merged[key] = nested
        else:
            merged[key] = value
    return merged


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> PipelineConfig:
    """
    Load a PipelineConfig from YAML, then apply CLI overrides.

    Args:
        path: YAML file; falls back to $RANKDIGEST_CONFIG when omitted
        overrides: Nested mapping of values that win over the file

    Returns:
        Validated PipelineConfig

    Raises:
        ConfigError: If the file is unreadable or values are invalid
    """
    path = path or os.environ.get(CONFIG_ENV)
    data: Dict[str, Any] = {}
    if path:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                loaded = yaml.safe_load(handle)
        except (OSError, UnicodeDecodeError) as exc:
            raise ConfigError(f"Cannot read config {path}: {exc}")
        except yaml.YAMLError as exc:
            raise ConfigError(f"Invalid YAML in {path}: {exc}")
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError(f"Config {path} must be a mapping at the top level")
        data = loaded or {}
        logger.info("Loaded config from %s", path)
    data = deep_merge(data, overrides or {})
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"Invalid configuration: {exc}")


def dump_config(cfg: PipelineConfig) -> str:
    """YAML rendering of a config, keys sorted so it diffs cleanly."""
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=True)
