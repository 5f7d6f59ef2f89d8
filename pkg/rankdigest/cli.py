"""Command-line entry point: one verb per pipeline stage plus training and serving."""

import functools
import logging
import os
import subprocess
import sys
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional

import typer
from pydantic import ValidationError

from rankdigest.config import (
    LOG_LEVEL_ENV,
    Bm25Params,
    GrpoConfig,
    MetricConfig,
    RemoteSpec,
    RerankerSpec,
    RlDataConfig,
    SftConfig,
    SummarizerSpec,
    SyntheticConfig,
    WindowPlan,
    load_config,
)
from rankdigest.corpus_io import load_corpus, load_qrels, load_queries, read_run, write_run
from rankdigest.errors import RankDigestError
from rankdigest.metrics import evaluate_run, format_table, write_per_query
from rankdigest.model import Document
from rankdigest.pipeline import run_pipeline
from rankdigest.policy import FeatureCache, PolicyParams, PolicySummarizer, load_checkpoint, save_checkpoint
from rankdigest.rerank import backend_from_spec, rerank_run
from rankdigest.retrieval import InvertedIndex, build_index, retrieve_top_n
from rankdigest.rl_data import (
    attach_backgrounds,
    background_backend,
    build_rl_dataset,
    load_rl_instances,
    split_instances,
    write_rl_instances,
)
from rankdigest.server import serve as serve_app
from rankdigest.summarize import load_summaries, summarize_run, summarizer_from_spec, write_summaries
from rankdigest.synthetic import generate_synthetic, load_split, write_synthetic
from rankdigest.train import evaluate_policy, train_grpo, train_sft, write_metrics_csv

logger = logging.getLogger(__name__)

app = typer.Typer(add_completion=False, help="Summarize-then-rank retrieval experiments.")


class SummarizerKind(str, Enum):
    firstp = "firstp"
    policy = "policy"
    remote = "remote"


class RerankerKind(str, Enum):
    lexical = "lexical"
    oracle = "oracle"
    remote = "remote"


class BackgroundKind(str, Enum):
    sft = "sft"
    firstp_128 = "firstp-128"
    firstp_256 = "firstp-256"
    none = "none"


def cli_errors(func):
    """Report library errors as `Error: <message>` on stderr with exit code 1."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except RankDigestError as e:
            typer.echo(f"Error: {e.message}", err=True)
            raise typer.Exit(code=1)
        except ValidationError as e:
            typer.echo(f"Error: invalid settings: {e}", err=True)
            raise typer.Exit(code=1)

    return wrapper


@app.callback()
def main(
    log_level: str = typer.Option(
        os.environ.get(LOG_LEVEL_ENV, "INFO"), "--log-level", help="DEBUG, INFO, WARNING or ERROR"
    ),
):
    logging.basicConfig(
        level=getattr(logging, log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _remote(url: Optional[str], model: Optional[str]) -> Optional[RemoteSpec]:
    if url is None:
        return None
    if model is None:
        raise typer.BadParameter("--remote-model is required with --remote-url")
    return RemoteSpec(url=url, model=model)


def _corpus_map(path: Path) -> Dict[str, Document]:
    return {doc.doc_id: doc for doc in load_corpus(path)}


def _index(corpus: Dict[str, Document], index_dir: Optional[Path]) -> InvertedIndex:
    if index_dir is not None:
        return InvertedIndex.load(index_dir)
    return build_index(corpus.values())


@app.command()
@cli_errors
def retrieve(
    queries: Path = typer.Option(..., help="Queries TSV"),
    out: Path = typer.Option(..., help="Run file to write"),
    corpus: Optional[Path] = typer.Option(None, help="Corpus JSONL to index"),
    index_dir: Optional[Path] = typer.Option(None, "--index", help="Saved index directory, instead of --corpus"),
    topk: int = 100,
    k1: float = 0.9,
    b: float = 0.4,
    stem: bool = False,
    stopwords: bool = False,
    save_index: Optional[Path] = typer.Option(None, help="Also persist the index to this directory"),
):
    """BM25 top-k retrieval for every query, over a corpus or a saved index."""
    if (corpus is None) == (index_dir is None):
        raise typer.BadParameter("give exactly one of --corpus and --index")
    if index_dir is not None:
        index = InvertedIndex.load(index_dir)
    else:
        index = build_index(load_corpus(corpus), stem=stem, stopwords=stopwords)
    if save_index is not None:
        index.save(save_index)
    params = Bm25Params(k1=k1, b=b)
    run = [retrieve_top_n(index, query, topk, params) for query in load_queries(queries)]
    write_run(run, out)
    typer.echo(f"Wrote {len(run)} ranked lists to {out}")


@app.command()
@cli_errors
def summarize(
    run: Path = typer.Option(..., help="Run file whose documents get summarized"),
    corpus: Path = typer.Option(...),
    queries: Path = typer.Option(...),
    out: Path = typer.Option(..., help="Summaries JSONL to write"),
    backend: SummarizerKind = SummarizerKind.firstp,
    k: int = 128,
    checkpoint: Optional[Path] = None,
    remote_url: Optional[str] = None,
    remote_model: Optional[str] = None,
    parallelism: int = 8,
):
    """Pointwise query-grounded summaries of every retrieved document."""
    spec = SummarizerSpec(
        kind=backend.value,
        k=k,
        checkpoint=checkpoint,
        remote=_remote(remote_url, remote_model),
        parallelism=parallelism,
    )
    corpus_map = _corpus_map(corpus)
    summarizer = summarizer_from_spec(spec, build_index(corpus_map.values()) if spec.kind == "policy" else None)
    summarizer.probe()
    query_map = {q.query_id: q for q in load_queries(queries)}
    summaries = summarize_run(summarizer, read_run(run), corpus_map, query_map, parallelism)
    write_summaries(summaries, out)
    safeguards = sum(s.is_safeguard for s in summaries)
    typer.echo(f"Wrote {len(summaries)} summaries ({safeguards} safeguard) to {out}")


@app.command()
@cli_errors
def rerank(
    run: Path = typer.Option(...),
    summaries: Path = typer.Option(..., help="Summaries JSONL; texts the reranker sees"),
    queries: Path = typer.Option(...),
    out: Path = typer.Option(...),
    reranker: RerankerKind = RerankerKind.lexical,
    corpus: Optional[Path] = typer.Option(None, help="Needed by the lexical reranker for idf"),
    qrels: Optional[Path] = typer.Option(None, help="Needed by the oracle reranker"),
    window: int = 20,
    step: int = 10,
    remote_url: Optional[str] = None,
    remote_model: Optional[str] = None,
    parallelism: int = 1,
):
    """Listwise sliding-window reranking over summaries."""
    spec = RerankerSpec(kind=reranker.value, remote=_remote(remote_url, remote_model), parallelism=parallelism)
    index = build_index(load_corpus(corpus)) if corpus is not None else None
    backend = backend_from_spec(spec, index, load_qrels(qrels) if qrels is not None else None)
    backend.probe()
    texts: Dict[str, Dict[str, str]] = {}
    for (qid, doc_id), summary in load_summaries(summaries).items():
        texts.setdefault(qid, {})[doc_id] = summary.text
    retrieved = read_run(run)
    for ranked in retrieved:
        texts.setdefault(ranked.query_id, {})
    query_map = {q.query_id: q for q in load_queries(queries)}
    plan = WindowPlan(window_size=window, step=step)
    reranked = rerank_run(backend, query_map, retrieved, texts, plan, parallelism)
    write_run(reranked, out)
    typer.echo(f"Wrote {len(reranked)} reranked lists to {out}")


@app.command("eval")
@cli_errors
def evaluate(
    run: Path = typer.Option(...),
    qrels: Path = typer.Option(...),
    ndcg_k: int = 10,
    map_k: int = 100,
    gain: str = "linear",
    per_query: Optional[Path] = typer.Option(None, help="Write per-query TSV here"),
):
    """NDCG@k and MAP@k of a run."""
    report = evaluate_run(read_run(run), load_qrels(qrels), MetricConfig(ndcg_k=ndcg_k, map_k=map_k, gain=gain))
    if per_query is not None:
        write_per_query(report, per_query)
    typer.echo(format_table(report), nl=False)


@app.command("build-rl-data")
@cli_errors
def build_rl_data(
    queries: Path = typer.Option(...),
    qrels: Path = typer.Option(...),
    corpus: Path = typer.Option(...),
    out: Path = typer.Option(...),
    index: Optional[Path] = typer.Option(None, help="Saved index directory; built from the corpus when omitted"),
    n: int = 10,
    k: int = 1,
    seed: int = 7,
    positive_threshold: int = 1,
    background: BackgroundKind = typer.Option(BackgroundKind.none, help="Static background source"),
    checkpoint: Optional[Path] = typer.Option(None, help="Cold-start policy for --background sft"),
):
    """Labeled candidate lists with optional frozen background summaries."""
    cfg = RlDataConfig(n=n, k=k, seed=seed, positive_threshold=positive_threshold)
    corpus_map = _corpus_map(corpus)
    idx = _index(corpus_map, index)
    summarizer = None
    if background is BackgroundKind.sft:
        if checkpoint is None:
            raise typer.BadParameter("--background sft needs --checkpoint")
        summarizer = background_backend("sft", PolicySummarizer(load_checkpoint(checkpoint), idx))
    elif background is not BackgroundKind.none:
        summarizer = background_backend(background.value)
    instances, skipped = build_rl_dataset(load_queries(queries), idx, load_qrels(qrels), corpus_map, cfg, summarizer)
    write_rl_instances(instances, out)
    typer.echo(f"Wrote {len(instances)} instances to {out} ({len(skipped)} queries skipped)")


@app.command()
@cli_errors
def sft(
    rl_data: Path = typer.Option(...),
    corpus: Path = typer.Option(...),
    out: Path = typer.Option(..., help="Checkpoint to write"),
    epochs: int = 5,
    lr: float = 0.05,
    tau: float = 0.2,
    budget: int = 3,
    seed: int = 7,
    heldout: Optional[Path] = typer.Option(None, help="Query ids to leave out of training"),
):
    """Cold-start fit of the policy to heuristic teacher labels."""
    cfg = SftConfig(epochs=epochs, learning_rate=lr, tau=tau, budget=budget, seed=seed)
    instances = load_rl_instances(rl_data)
    if heldout is not None:
        instances, _ = split_instances(instances, load_split(heldout))
    corpus_map = _corpus_map(corpus)
    cache = FeatureCache(build_index(corpus_map.values()), corpus_map)
    params, losses = train_sft(instances, cache, cfg)
    save_checkpoint(params, out)
    typer.echo(f"SFT loss {losses[0]:.4f} -> {losses[-1]:.4f}; checkpoint {out}")


@app.command("train-grpo")
@cli_errors
def train_grpo_command(
    rl_data: Path = typer.Option(...),
    corpus: Path = typer.Option(...),
    qrels: Path = typer.Option(...),
    out: Path = typer.Option(..., help="Checkpoint to write"),
    init: Optional[Path] = typer.Option(None, help="Cold-start checkpoint; zero weights when omitted"),
    background_checkpoint: Optional[Path] = typer.Option(
        None, help="Policy decoding missing backgrounds; defaults to --init"
    ),
    reranker: RerankerKind = RerankerKind.lexical,
    group_size: int = typer.Option(8, "--G", "--group-size"),
    beta: float = 0.001,
    penalty: float = typer.Option(0.25, "--lambda", "--penalty"),
    epsilon: float = 0.2,
    epochs: int = 5,
    lr: float = 0.05,
    budget: int = 3,
    seed: int = 7,
    target_selection: str = "pos_neg",
    updates_per_group: int = 1,
    reward_workers: int = 1,
    remote_url: Optional[str] = None,
    remote_model: Optional[str] = None,
    heldout: Optional[Path] = typer.Option(None, help="Held-out query ids, scored after every epoch"),
    metrics: Optional[Path] = typer.Option(None, help="Per-epoch metrics CSV"),
):
    """Rank-driven group-relative optimization of the policy."""
    cfg = GrpoConfig(
        group_size=group_size,
        clip_epsilon=epsilon,
        kl_beta=beta,
        penalty_lambda=penalty,
        learning_rate=lr,
        epochs=epochs,
        budget=budget,
        seed=seed,
        init="sft" if init is not None else "zero",
        target_selection=target_selection,
        updates_per_group=updates_per_group,
        reward_workers=reward_workers,
    )
    corpus_map = _corpus_map(corpus)
    idx = build_index(corpus_map.values())
    judgments = load_qrels(qrels)
    backend = backend_from_spec(
        RerankerSpec(kind=reranker.value, remote=_remote(remote_url, remote_model)), idx, judgments
    )
    backend.probe()
    start = load_checkpoint(init) if init is not None else PolicyParams.zeros()

    instances = load_rl_instances(rl_data)
    bg_path = background_checkpoint or init
    bg_params = load_checkpoint(bg_path) if bg_path is not None else start
    attach_backgrounds(instances, PolicySummarizer(bg_params, idx, budget), corpus_map)

    held: List = []
    if heldout is not None:
        instances, held = split_instances(instances, load_split(heldout))
    cache = FeatureCache(idx, corpus_map)
    if held:
        before = evaluate_policy(start, held, cache, backend, judgments, budget)
        typer.echo(f"Start: held-out ndcg@10 {before.mean_ndcg:.4f}, safeguard rate {before.safeguard_rate:.3f}")
    params, history = train_grpo(instances, cache, backend, judgments, start, cfg, held, dump_dir=out.parent)
    save_checkpoint(params, out)
    if metrics is not None:
        write_metrics_csv(history, metrics)
    if held:
        after = evaluate_policy(params, held, cache, backend, judgments, budget)
        typer.echo(f"Final: held-out ndcg@10 {after.mean_ndcg:.4f}, safeguard rate {after.safeguard_rate:.3f}")
    typer.echo(f"Checkpoint {out}")


@app.command()
@cli_errors
def pipeline(
    config: Optional[Path] = typer.Option(None, "--config", help="YAML config; falls back to $RANKDIGEST_CONFIG"),
    output_dir: Optional[Path] = None,
    summarizer: Optional[SummarizerKind] = None,
    k: Optional[int] = typer.Option(None, help="FirstP token budget"),
    checkpoint: Optional[Path] = None,
    reranker: Optional[RerankerKind] = None,
    topk: Optional[int] = None,
    force: bool = typer.Option(False, help="Recompute every stage"),
):
    """Retrieve, summarize, rerank and evaluate, reusing unchanged stages."""
    overrides = {
        "output_dir": output_dir,
        "topk": topk,
        "summarizer": {
            "kind": summarizer.value if summarizer else None,
            "k": k,
            "checkpoint": checkpoint,
        },
        "reranker": {"kind": reranker.value if reranker else None},
    }
    cfg = load_config(config, overrides)
    result = run_pipeline(cfg, force=force)
    if result.skipped:
        typer.echo(f"Reused stages: {', '.join(result.skipped)}")
    typer.echo(format_table(result.report), nl=False)


@app.command()
@cli_errors
def serve(
    config: Optional[Path] = typer.Option(None, "--config"),
    host: str = "127.0.0.1",
    port: int = 8000,
):
    """Serve summarize, rerank and evaluate over HTTP."""
    serve_app(load_config(config), host=host, port=port)


@app.command("make-synthetic")
@cli_errors
def make_synthetic(
    out: Path = typer.Option(..., help="Directory for corpus, queries, qrels and split files"),
    seed: int = 7,
    queries: int = 300,
):
    """Write the synthetic collection used by the end-to-end checks."""
    dataset = generate_synthetic(SyntheticConfig(seed=seed, queries=queries))
    write_synthetic(dataset, out)
    typer.echo(f"Wrote {len(dataset.corpus)} documents and {len(dataset.queries)} queries to {out}")


@app.command()
def explore():
    """Launch the Streamlit explorer."""
    app_path = Path(__file__).with_name("app.py")
    raise typer.Exit(code=subprocess.call([sys.executable, "-m", "streamlit", "run", str(app_path)]))


if __name__ == "__main__":
    app()
