"""Tokenization, inverted index with BM25, and TF-IDF vectors.

The index lives in memory and is rebuilt from the store at startup;
the 10k-memory cap keeps rebuilds cheap. Mutations run on the store's
writer thread; reads take a shared lock so scoring never observes a
half-applied update.
"""

from __future__ import annotations

import math
import re
import threading
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

BM25_K1 = 1.2
BM25_B = 0.75
MIN_TOKEN_LEN = 2

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)

# Fixed English stopword list. Deliberately small: dropping query terms is
# worse than indexing a few noise words.
STOPWORDS = frozenset(
    """
    a an and are as at be been but by for from had has have he her his how
    i if in into is it its me my no nor not of on or our own she so than
    that the their them then there these they this to too was we were what
    when where which who whom why will with you your
    """.split()
)


def tokenize(text: str) -> list[str]:
    """Lowercase letter/digit runs, length >= 2, stopwords removed."""
    tokens = []
    for m in _WORD_RE.finditer(text.lower()):
        tok = m.group()
        if len(tok) >= MIN_TOKEN_LEN and tok not in STOPWORDS:
            tokens.append(tok)
    return tokens


@dataclass
class PostingList:
    term: str
    postings: list[tuple[int, int]]  # (memory id, term frequency), id-sorted

    @property
    def doc_frequency(self) -> int:
        return len(self.postings)


@dataclass
class TfIdfVector:
    weights: dict[str, float]
    norm: float

    @classmethod
    def build(cls, counts: Mapping[str, int], stats: "CorpusStats") -> "TfIdfVector":
        weights = {}
        for term, tf in counts.items():
            if tf <= 0:
                continue
            weights[term] = tf * stats.idf(term)
        norm = math.sqrt(sum(w * w for w in weights.values()))
        return cls(weights, norm)


def cosine(a: TfIdfVector, b: TfIdfVector) -> float:
    """Cosine similarity in [0, 1]; empty vectors compare as 0."""
    if a.norm == 0.0 or b.norm == 0.0:
        return 0.0
    small, large = (a.weights, b.weights) if len(a.weights) <= len(b.weights) else (b.weights, a.weights)
    dot = 0.0
    for term, w in small.items():
        other = large.get(term)
        if other is not None:
            dot += w * other
    return min(1.0, dot / (a.norm * b.norm))


@dataclass
class CorpusStats:
    """Document count and per-term document frequencies at snapshot time."""

    doc_count: int
    df: Mapping[str, int]

    def idf(self, term: str) -> float:
        # Smoothed so unseen terms never divide by zero.
        return math.log((1 + self.doc_count) / (1 + self.df.get(term, 0))) + 1.0


class _RWLock:
    """Many readers or one writer; writers are rare (store mutations only)."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._readers = 0
        self._writing = False

    def acquire_read(self) -> None:
        with self._cond:
            while self._writing:
                self._cond.wait()
            self._readers += 1

    def release_read(self) -> None:
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self) -> None:
        with self._cond:
            while self._writing or self._readers:
                self._cond.wait()
            self._writing = True

    def release_write(self) -> None:
        with self._cond:
            self._writing = False
            self._cond.notify_all()


class TextIndex:
    """Incremental inverted index over live memory records."""

    def __init__(self) -> None:
        self._lock = _RWLock()
        self._postings: dict[str, dict[int, int]] = {}
        self._doc_terms: dict[int, Counter] = {}
        self._doc_len: dict[int, int] = {}
        self._created_at: dict[int, int] = {}
        self._total_len = 0
        # Version bumps on every mutation; cached stats/vectors are only
        # valid for the version they were built against.
        self._version = 0
        self._stats_cache: Optional[tuple[int, CorpusStats]] = None
        self._vector_cache: dict[int, tuple[int, TfIdfVector]] = {}

    # -- mutations ------------------------------------------------------

    def index_memory(self, record) -> None:
        self._lock.acquire_write()
        try:
            if record.id in self._doc_terms:
                self._remove(record.id)
            counts = Counter(tokenize(record.content))
            self._doc_terms[record.id] = counts
            length = sum(counts.values())
            self._doc_len[record.id] = length
            self._created_at[record.id] = record.created_at
            self._total_len += length
            for term, tf in counts.items():
                self._postings.setdefault(term, {})[record.id] = tf
            self._version += 1
        finally:
            self._lock.release_write()

    def deindex_memory(self, mem_id: int) -> None:
        self._lock.acquire_write()
        try:
            self._remove(mem_id)
            self._version += 1
        finally:
            self._lock.release_write()

    def _remove(self, mem_id: int) -> None:
        counts = self._doc_terms.pop(mem_id, None)
        self._vector_cache.pop(mem_id, None)
        if counts is None:
            return
        self._total_len -= self._doc_len.pop(mem_id)
        self._created_at.pop(mem_id, None)
        for term in counts:
            bucket = self._postings.get(term)
            if bucket is not None:
                bucket.pop(mem_id, None)
                if not bucket:
                    del self._postings[term]

    def clear(self) -> None:
        self._lock.acquire_write()
        try:
            self._postings.clear()
            self._doc_terms.clear()
            self._doc_len.clear()
            self._created_at.clear()
            self._total_len = 0
            self._version += 1
            self._vector_cache.clear()
            self._stats_cache = None
        finally:
            self._lock.release_write()

    # -- reads ----------------------------------------------------------

    @property
    def doc_count(self) -> int:
        return len(self._doc_terms)

    def posting_list(self, term: str) -> PostingList:
        self._lock.acquire_read()
        try:
            bucket = self._postings.get(term, {})
            return PostingList(term, sorted(bucket.items()))
        finally:
            self._lock.release_read()

    def doc_counts(self, mem_id: int) -> Optional[Counter]:
        self._lock.acquire_read()
        try:
            counts = self._doc_terms.get(mem_id)
            return Counter(counts) if counts is not None else None
        finally:
            self._lock.release_read()

    def corpus_stats(self) -> CorpusStats:
        self._lock.acquire_read()
        try:
            cached = self._stats_cache
            if cached is not None and cached[0] == self._version:
                return cached[1]
            df = {term: len(bucket) for term, bucket in self._postings.items()}
            stats = CorpusStats(len(self._doc_terms), df)
            self._stats_cache = (self._version, stats)
            return stats
        finally:
            self._lock.release_read()

    def match(self, query: str, limit: int) -> list[tuple[int, float]]:
        """BM25 over documents containing any query token.

        Descending score; ties broken by newer created_at, then higher id.
        """
        terms = set(tokenize(query))
        if not terms or limit <= 0:
            return []
        self._lock.acquire_read()
        try:
            n_docs = len(self._doc_terms)
            if n_docs == 0:
                return []
            avg_len = self._total_len / n_docs
            scores: dict[int, float] = {}
            for term in terms:
                bucket = self._postings.get(term)
                if not bucket:
                    continue
                df = len(bucket)
                idf = math.log(1 + (n_docs - df + 0.5) / (df + 0.5))
                for mem_id, tf in bucket.items():
                    dl = self._doc_len[mem_id]
                    denom = tf + BM25_K1 * (1 - BM25_B + BM25_B * dl / avg_len)
                    scores[mem_id] = scores.get(mem_id, 0.0) + idf * tf * (BM25_K1 + 1) / denom
            ranked = sorted(
                scores.items(),
                key=lambda kv: (-kv[1], -self._created_at[kv[0]], -kv[0]),
            )
            return ranked[:limit]
        finally:
            self._lock.release_read()

    def vector_for(self, mem_id: int, stats: Optional[CorpusStats] = None) -> TfIdfVector:
        self._lock.acquire_read()
        try:
            cached = self._vector_cache.get(mem_id)
            if cached is not None and cached[0] == self._version:
                return cached[1]
            counts = self._doc_terms.get(mem_id)
            version = self._version
        finally:
            self._lock.release_read()
        if counts is None:
            return TfIdfVector({}, 0.0)
        vec = TfIdfVector.build(counts, stats or self.corpus_stats())
        self._vector_cache[mem_id] = (version, vec)
        return vec

    def vector_for_text(self, text: str, stats: Optional[CorpusStats] = None) -> TfIdfVector:
        return TfIdfVector.build(Counter(tokenize(text)), stats or self.corpus_stats())


def tfidf_vector(text: str, stats: CorpusStats) -> TfIdfVector:
    return TfIdfVector.build(Counter(tokenize(text)), stats)
