"""
Deterministic synthetic retrieval collection.

Every query is a handful of unique pseudo-words. Each query owns:

- positives with grade g carrying g evidence sentences, each holding every query term;
- hard negatives opening with topical sentences that each name a single query
  term, so together they cover the query without ever answering it;
- easy negatives with no query term at all.

Evidence lands anywhere in documents of 10 to 40 sentences, so a leading
truncation regularly misses it, while hard negatives put their terms in the
first few sentences. Easy negatives never match BM25 and reach candidate
lists only as padding.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Set, Union

import numpy as np

from rankdigest.config import SyntheticConfig
from rankdigest.corpus_io import load_corpus, load_qrels, load_queries, write_corpus, write_qrels, write_queries
from rankdigest.errors import IoFailure
from rankdigest.model import Document, QrelsTable, Query

logger = logging.getLogger(__name__)

_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "kr", "st", "tr")
_NUCLEI = ("a", "e", "i", "o", "u", "ai", "ou")


@dataclass
class SyntheticDataset:
    corpus: List[Document]
    queries: List[Query]
    qrels: QrelsTable
    train_ids: List[str]
    heldout_ids: List[str]


def _vocabulary(size: int, rng: np.random.Generator, taken: Set[str]) -> List[str]:
    words: List[str] = []
    while len(words) < size:
        syllables = int(rng.integers(2, 4))
        word = "".join(
            _ONSETS[rng.integers(len(_ONSETS))] + _NUCLEI[rng.integers(len(_NUCLEI))] for _ in range(syllables)
        )
        if word not in taken:
            taken.add(word)
            words.append(word)
    return words


def _sentence(words: Sequence[str]) -> str:
    return " ".join(words).capitalize() + "."


class _Writer:
    def __init__(self, filler: Sequence[str], rng: np.random.Generator):
        self.filler = filler
        self.rng = rng

    def filler_words(self, count: int) -> List[str]:
        return [self.filler[i] for i in self.rng.integers(len(self.filler), size=count)]

    def filler_sentence(self) -> str:
        return _sentence(self.filler_words(int(self.rng.integers(6, 15))))

    def planted_sentence(self, terms: Sequence[str]) -> str:
        words = self.filler_words(int(self.rng.integers(4, 9))) + list(terms)
        return _sentence([words[i] for i in self.rng.permutation(len(words))])

    def document(
        self,
        doc_id: str,
        planted: Sequence[str],
        min_sentences: int,
        max_sentences: int,
        within: Optional[int] = None,
    ) -> Document:
        """Planted sentences go to random positions, restricted to the first `within` when given."""
        length = int(self.rng.integers(min_sentences, max_sentences + 1))
        length = max(length, len(planted))
        span = length if within is None else max(len(planted), min(within, length))
        sentences = [self.filler_sentence() for _ in range(length - len(planted))]
        positions = sorted(self.rng.choice(span, size=len(planted), replace=False).tolist())
        for position, sentence in zip(positions, planted):
            sentences.insert(position, sentence)
        title = " ".join(self.filler_words(int(self.rng.integers(2, 4)))).title()
        return Document(doc_id, title, " ".join(sentences))


def generate_synthetic(cfg: SyntheticConfig = SyntheticConfig()) -> SyntheticDataset:
    """Build the whole collection from cfg.seed; identical configs give identical datasets."""
    rng = np.random.default_rng(cfg.seed)
    taken: Set[str] = set()
    query_vocab = _vocabulary(cfg.queries * cfg.query_terms, rng, taken)
    writer = _Writer(_vocabulary(cfg.filler_vocabulary, rng, taken), rng)

    corpus: List[Document] = []
    queries: List[Query] = []
    qrels = QrelsTable()
    for qi in range(cfg.queries):
        qid = f"q{qi:04d}"
        terms = query_vocab[qi * cfg.query_terms : (qi + 1) * cfg.query_terms]
        queries.append(Query(qid, " ".join(terms)))
        doc_no = 0

        grades = [3, 2, 1] + [int(g) for g in rng.integers(1, 4, size=max(0, cfg.positives - 3))]
        for grade in grades[: cfg.positives]:
            planted = [writer.planted_sentence(terms) for _ in range(grade)]
            corpus.append(writer.document(f"d{qi:04d}-{doc_no:02d}", planted, cfg.min_sentences, cfg.max_sentences))
            qrels.add(qid, corpus[-1].doc_id, grade)
            doc_no += 1
        for _ in range(cfg.hard_negatives):
            planted = [writer.planted_sentence([terms[i]]) for i in rng.permutation(len(terms))]
            corpus.append(
                writer.document(
                    f"d{qi:04d}-{doc_no:02d}", planted, cfg.min_sentences, cfg.max_sentences, cfg.lead_sentences
                )
            )
            qrels.add(qid, corpus[-1].doc_id, 0)
            doc_no += 1
        for _ in range(cfg.easy_negatives):
            corpus.append(writer.document(f"d{qi:04d}-{doc_no:02d}", [], cfg.min_sentences, cfg.max_sentences))
            qrels.add(qid, corpus[-1].doc_id, 0)
            doc_no += 1

    order = rng.permutation(cfg.queries)
    heldout_count = max(1, int(round(cfg.queries * cfg.heldout_fraction)))
    heldout = sorted(queries[i].query_id for i in order[:heldout_count])
    train = sorted(queries[i].query_id for i in order[heldout_count:])
    logger.info(
        "Generated %d documents for %d queries (%d train, %d held out)",
        len(corpus),
        len(queries),
        len(train),
        len(heldout),
    )
    return SyntheticDataset(corpus, queries, qrels, train, heldout)


def write_synthetic(dataset: SyntheticDataset, directory: Union[str, Path]) -> None:
    """Write corpus.jsonl, queries.tsv, qrels.txt, train.txt and heldout.txt."""
    directory = Path(directory)
    write_corpus(dataset.corpus, directory / "corpus.jsonl")
    write_queries(dataset.queries, directory / "queries.tsv")
    write_qrels(dataset.qrels, directory / "qrels.txt")
    write_split(dataset.train_ids, directory / "train.txt")
    write_split(dataset.heldout_ids, directory / "heldout.txt")


def load_synthetic(directory: Union[str, Path]) -> SyntheticDataset:
    directory = Path(directory)
    return SyntheticDataset(
        corpus=load_corpus(directory / "corpus.jsonl"),
        queries=load_queries(directory / "queries.tsv"),
        qrels=load_qrels(directory / "qrels.txt"),
        train_ids=load_split(directory / "train.txt"),
        heldout_ids=load_split(directory / "heldout.txt"),
    )


def write_split(query_ids: Sequence[str], path: Union[str, Path]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(f"{qid}\n" for qid in query_ids), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(path), exc)


def load_split(path: Union[str, Path]) -> List[str]:
    path = Path(path)
    try:
        return [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    except (OSError, UnicodeDecodeError) as exc:
        raise IoFailure(str(path), exc)
