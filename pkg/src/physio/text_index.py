"""Tokenization, sentence segmentation, and Okapi BM25 ranking.

One engine serves both jobs: ranking whole webpages against the user query
and ranking individual source sentences against generated sentences.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

# Sentence-terminal punctuation that never ends a sentence when it closes
# one of these abbreviations.
_ABBREVIATIONS = ("e.g.", "i.e.", "dr.", "mr.", "vs.")
_TERMINALS = ".!?"


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric runs; underscore and punctuation separate."""
    return _TOKEN_RE.findall(text.lower())


def split_sentences(text: str) -> list[str]:
    """Rule-based splitting after '.', '!' or '?' followed by whitespace.

    A fixed abbreviation list suppresses false boundaries. Sentences come back
    trimmed, empties dropped, and concatenation reproduces the input modulo
    whitespace.
    """
    sentences: list[str] = []
    start = 0
    for i, ch in enumerate(text):
        if ch not in _TERMINALS:
            continue
        at_end = i + 1 == len(text)
        if not at_end and not text[i + 1].isspace():
            continue
        # the non-whitespace run ending at this character, e.g. "(e.g."
        j = i
        while j > 0 and not text[j - 1].isspace():
            j -= 1
        tail = text[j : i + 1].lower()
        if any(tail.endswith(abbr) for abbr in _ABBREVIATIONS):
            continue
        sentence = text[start : i + 1].strip()
        if sentence:
            sentences.append(sentence)
        start = i + 1
    remainder = text[start:].strip()
    if remainder:
        sentences.append(remainder)
    return sentences


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self) -> None:
        if self.k1 < 0:
            raise ValueError(f"k1 must be >= 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


@dataclass
class Bm25Index:
    """Immutable after build_index; safe for concurrent rank() calls."""

    doc_ids: list[str]
    term_frequencies: dict[str, Counter]
    document_frequencies: Counter
    doc_lengths: dict[str, int]
    avg_doc_length: float
    params: Bm25Params = field(default_factory=Bm25Params)

    def __len__(self) -> int:
        return len(self.doc_ids)


def build_index(items: list[tuple[str, str]], params: Bm25Params | None = None) -> Bm25Index:
    """Index (id, text) pairs. Duplicate ids are an error."""
    params = params or Bm25Params()
    doc_ids: list[str] = []
    term_frequencies: dict[str, Counter] = {}
    document_frequencies: Counter = Counter()
    doc_lengths: dict[str, int] = {}
    for item_id, text in items:
        if item_id in term_frequencies:
            raise ValueError(f"duplicate document id: {item_id!r}")
        tokens = tokenize(text)
        counts = Counter(tokens)
        doc_ids.append(item_id)
        term_frequencies[item_id] = counts
        doc_lengths[item_id] = len(tokens)
        for term in counts:
            document_frequencies[term] += 1
    total = sum(doc_lengths.values())
    avg = total / len(doc_ids) if doc_ids else 0.0
    return Bm25Index(
        doc_ids=doc_ids,
        term_frequencies=term_frequencies,
        document_frequencies=document_frequencies,
        doc_lengths=doc_lengths,
        avg_doc_length=avg,
        params=params,
    )


def score_all(index: Bm25Index, query_text: str) -> dict[str, float]:
    """BM25 score of every indexed document for the query.

    Uses the non-negative IDF variant ln((N - df + 0.5)/(df + 0.5) + 1);
    repeated query tokens contribute once per occurrence.
    """
    query_tokens = tokenize(query_text)
    n = len(index.doc_ids)
    k1, b = index.params.k1, index.params.b
    scores: dict[str, float] = {}
    for doc_id in index.doc_ids:
        counts = index.term_frequencies[doc_id]
        dl = index.doc_lengths[doc_id]
        score = 0.0
        for term in query_tokens:
            tf = counts.get(term, 0)
            if tf == 0:
                continue
            df = index.document_frequencies[term]
            idf = math.log((n - df + 0.5) / (df + 0.5) + 1.0)
            # tf > 0 implies dl > 0 implies avg_doc_length > 0
            norm = k1 * (1.0 - b + b * dl / index.avg_doc_length)
            score += idf * tf * (k1 + 1.0) / (tf + norm)
        scores[doc_id] = score
    return scores


def rank(index: Bm25Index, query_text: str, k: int) -> list[tuple[str, float]]:
    """Top-k documents by descending score; zero scores excluded, ties by id."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    scores = score_all(index, query_text)
    positive = [(doc_id, s) for doc_id, s in scores.items() if s > 0.0]
    positive.sort(key=lambda pair: (-pair[1], pair[0]))
    return positive[:k]
