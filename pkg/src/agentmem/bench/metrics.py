"""Ranking-quality metrics: MRR, NDCG@k, Recall@k, adjusted Rand index.

Kept independent of the ranker's internal NDCG so the two implementations
can cross-check each other.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

from ..errors import EmptyInput


def grade_of(topic_correct: bool, importance: int) -> int:
    """Graded relevance: wrong topic 0; correct topic binned by importance
    (1-4 -> 1, 5-7 -> 2, 8-10 -> 3)."""
    if not topic_correct:
        return 0
    if importance >= 8:
        return 3
    if importance >= 5:
        return 2
    return 1


def mrr(ranked_topics: Sequence[Sequence[str]], correct: Sequence[str]) -> float:
    """Mean reciprocal rank of the first correct-topic result (0 if none)."""
    if not ranked_topics:
        raise EmptyInput("no rankings")
    total = 0.0
    for topics, want in zip(ranked_topics, correct):
        for rank, topic in enumerate(topics, start=1):
            if topic == want:
                total += 1.0 / rank
                break
    return total / len(ranked_topics)


def ndcg_single(
    k: int,
    ranked_grades: Sequence[int],
    ideal_grades: Optional[Sequence[int]] = None,
) -> float:
    """DCG@k / IDCG@k with gain 2^rel - 1 and log2(position+1) discount.

    The ideal ordering defaults to the ranked grades re-sorted; pass the
    full candidate-pool grades for a pool-wide ideal.
    """
    dcg = 0.0
    for i, rel in enumerate(ranked_grades[:k]):
        dcg += (2.0 ** rel - 1.0) / math.log2(i + 2)
    pool = list(ideal_grades) if ideal_grades is not None else list(ranked_grades)
    pool.sort(reverse=True)
    idcg = 0.0
    for i, rel in enumerate(pool[:k]):
        idcg += (2.0 ** rel - 1.0) / math.log2(i + 2)
    if idcg <= 0:
        return 1.0
    return dcg / idcg


def ndcg_at(
    k: int,
    rankings: Sequence[Sequence[int]],
    ideals: Optional[Sequence[Sequence[int]]] = None,
) -> float:
    if not rankings:
        raise EmptyInput("no rankings")
    total = 0.0
    for qi, grades in enumerate(rankings):
        ideal = ideals[qi] if ideals is not None else None
        total += ndcg_single(k, grades, ideal)
    return total / len(rankings)


def recall_at(
    k: int,
    ranked_topics: Sequence[Sequence[str]],
    correct: Sequence[str],
    total_relevant: int,
) -> float:
    """Fraction of the topic's relevant documents retrieved in the top k."""
    if not ranked_topics:
        raise EmptyInput("no rankings")
    if total_relevant <= 0:
        raise EmptyInput("no relevant documents")
    total = 0.0
    for topics, want in zip(ranked_topics, correct):
        hits = sum(1 for t in topics[:k] if t == want)
        total += hits / total_relevant
    return total / len(ranked_topics)


def adjusted_rand_index(labels_a: Sequence, labels_b: Sequence) -> float:
    """Agreement between two clusterings, chance-corrected."""
    if len(labels_a) != len(labels_b):
        raise ValueError("label sequences differ in length")
    n = len(labels_a)
    if n == 0:
        raise EmptyInput("no labels")
    pairs: dict[tuple, int] = {}
    count_a: dict = {}
    count_b: dict = {}
    for a, b in zip(labels_a, labels_b):
        pairs[(a, b)] = pairs.get((a, b), 0) + 1
        count_a[a] = count_a.get(a, 0) + 1
        count_b[b] = count_b.get(b, 0) + 1

    def comb2(x: int) -> float:
        return x * (x - 1) / 2.0

    sum_ij = sum(comb2(c) for c in pairs.values())
    sum_a = sum(comb2(c) for c in count_a.values())
    sum_b = sum(comb2(c) for c in count_b.values())
    total = comb2(n)
    if total == 0:
        return 1.0
    expected = sum_a * sum_b / total
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return (sum_ij - expected) / (max_index - expected)
