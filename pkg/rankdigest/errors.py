"""Custom exceptions for summarize-then-rank runs."""

from typing import Optional


class RankDigestError(Exception):
    """Base exception for rankdigest errors."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


class MalformedRecord(RankDigestError):
    """Raised when a line of a corpus, query, qrels or run file cannot be parsed."""

    def __init__(self, path: str, line_no: int, excerpt: str, reason: str = "malformed record"):
        self.path = path
        self.line_no = line_no
        self.excerpt = excerpt[:120]
        super().__init__(f"{path}:{line_no}: {reason}: {self.excerpt!r}")


class DuplicateDocId(RankDigestError):
    """Raised when a corpus holds the same doc_id twice."""

    def __init__(self, doc_id: str, line_no: Optional[int] = None):
        self.doc_id = doc_id
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"Duplicate doc_id {doc_id!r}{where}")


class NegativeGrade(RankDigestError):
    """Raised when a qrels line carries a grade below zero."""

    def __init__(self, line_no: int, grade: int):
        self.line_no = line_no
        self.grade = grade
        super().__init__(f"Negative relevance grade {grade} on line {line_no}")


class RunInvariantError(RankDigestError):
    """Raised when a ranked list violates rank, uniqueness or score ordering."""


class IoFailure(RankDigestError):
    """Raised when an artifact cannot be written or read."""

    def __init__(self, path: str, cause: Exception):
        self.path = path
        self.cause = cause
        super().__init__(f"I/O failure on {path}: {cause}")


class EmptyCorpus(RankDigestError):
    """Raised when an index is requested over zero documents."""

    def __init__(self, message: str = "Cannot build an index over an empty corpus"):
        super().__init__(message)


class EmptyIntersection(RankDigestError):
    """Raised when no run query has relevance judgments."""

    def __init__(self, message: str = "No run query has relevance judgments"):
        super().__init__(message)


class BackendUnavailable(RankDigestError):
    """Raised when a remote backend keeps failing after retries."""

    def __init__(self, backend: str, cause: str):
        self.backend = backend
        self.cause = cause
        super().__init__(f"Backend {backend!r} unavailable: {cause}")


class MissingPlaceholder(RankDigestError):
    """Raised when a prompt template lacks a placeholder or repeats one."""

    def __init__(self, name: str, count: int = 0):
        self.name = name
        self.count = count
        super().__init__(f"Template must contain {{{name}}} exactly once (found {count})")


class InsufficientJudgments(RankDigestError):
    """Raised when a query lacks the positives or negatives needed for an RL instance."""

    def __init__(self, query_id: str, reason: str):
        self.query_id = query_id
        super().__init__(f"Query {query_id!r}: {reason}")


class IndexOutOfRange(RankDigestError):
    """Raised when a target position falls outside the candidate list."""

    def __init__(self, index: int, size: int):
        self.index = index
        self.size = size
        super().__init__(f"Index {index} out of range for list of size {size}")


class NonFiniteGradient(RankDigestError):
    """Raised when a training step produces NaN or infinite values."""

    def __init__(self, step: int, dump_path: Optional[str] = None):
        self.step = step
        self.dump_path = dump_path
        where = f"; state dumped to {dump_path}" if dump_path else ""
        super().__init__(f"Non-finite gradient at step {step}{where}")


class ConfigError(RankDigestError):
    """Raised when a configuration file or override is invalid."""


class CheckpointError(RankDigestError):
    """Raised when a policy checkpoint cannot be parsed."""


class StageError(RankDigestError):
    """Raised when a pipeline stage fails; earlier artifacts stay on disk."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"Stage {stage!r} failed: {cause}")
