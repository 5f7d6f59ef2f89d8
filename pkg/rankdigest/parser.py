"""Parsing of reranker output and document text."""

import logging
import re
from typing import List, Sequence, Tuple

logger = logging.getLogger(__name__)

_BRACKETED = re.compile(r"\[\s*(\d+)\s*\]")
_SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?])\s+")

MIN_SENTENCE_TOKENS = 3


def parse_permutation(raw: str, window_len: int) -> List[int]:
    """
    Parse a ranking such as "[5] > [1] > [3]" into a full 1-based permutation.

    Repairs never fail: out-of-range ids and repeats are dropped (first
    occurrence wins) and missing ids are appended in window order.

    Args:
        raw: Raw reranker output
        window_len: Number of candidates in the window

    Returns:
        A permutation of 1..window_len
    """
    order, repairs = parse_permutation_with_repairs(raw, window_len)
    if repairs:
        logger.warning("Repaired reranker output with %d fixes (window of %d)", repairs, window_len)
    return order


def parse_permutation_with_repairs(raw: str, window_len: int) -> Tuple[List[int], int]:
    """Same as parse_permutation, also returning the number of repairs applied."""
    if window_len < 1:
        raise ValueError(f"window_len must be >= 1, got {window_len}")
    order: List[int] = []
    seen = set()
    repairs = 0
    limit = len(str(window_len))
    for match in _BRACKETED.finditer(raw or ""):
        digits = match.group(1).lstrip("0") or "0"
        # more digits than window_len can only be out of range
        if len(digits) > limit:
            repairs += 1
            continue
        idx = int(digits)
        if idx < 1 or idx > window_len or idx in seen:
            repairs += 1
            continue
        seen.add(idx)
        order.append(idx)
    missing = [i for i in range(1, window_len + 1) if i not in seen]
    repairs += len(missing)
    order.extend(missing)
    return order, repairs


def render_permutation(order: Sequence[int]) -> str:
    """Render a 1-based ordering as "[a] > [b] > ..."."""
    return " > ".join(f"[{i}]" for i in order)


def sentence_split(doc_text: str) -> List[str]:
    """
    Split text on [.!?] followed by whitespace.

    Fragments shorter than three tokens join the previous sentence (a short
    opening fragment joins the next one). Non-empty input never yields an
    empty list.
    """
    text = doc_text.strip()
    if not text:
        return []
    sentences: List[str] = []
    carry = ""
    for fragment in _SENTENCE_BOUNDARY.split(text):
        fragment = fragment.strip()
        if not fragment:
            continue
        if carry:
            fragment = f"{carry} {fragment}"
            carry = ""
        if len(fragment.split()) < MIN_SENTENCE_TOKENS:
            if sentences:
                sentences[-1] = f"{sentences[-1]} {fragment}"
            else:
                carry = fragment
        else:
            sentences.append(fragment)
    if carry:
        sentences.append(carry)
    return sentences
