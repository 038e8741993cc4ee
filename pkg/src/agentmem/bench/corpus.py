"""Synthetic corpus with known ground-truth topic labels.

Five fixed topics. Every document of a topic carries the topic's four
anchor terms plus two rotating extras and a fixed block of corpus-wide
universal terms, always 12 indexable tokens. For an anchor-based query
this makes in-topic documents tie exactly on BM25 -- within-topic order
is arbitrary with respect to importance, which is what the adaptive
ranker is supposed to fix -- while cross-topic similarity stays safely
below the graph edge threshold. Importance is uniform 1..10 and drives
graded relevance.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

TOPICS = (
    "web-development",
    "machine-learning",
    "database-design",
    "devops",
    "api-design",
)

# Anchor terms appear in every document of the topic; extras rotate.
_ANCHORS: dict[str, list[str]] = {
    "web-development": ["frontend", "react", "component", "browser"],
    "machine-learning": ["model", "training", "neural", "embedding"],
    "database-design": ["database", "schema", "postgresql", "migration"],
    "devops": ["docker", "kubernetes", "deployment", "pipeline"],
    "api-design": ["api", "endpoint", "rest", "graphql"],
}

_EXTRAS: dict[str, list[str]] = {
    "web-development": ["css", "layout", "javascript", "responsive", "dom", "typescript"],
    "machine-learning": ["dataset", "gradient", "inference", "classifier", "pytorch", "epoch"],
    "database-design": ["transaction", "mysql", "normalization", "sqlite", "orm", "rollback"],
    "devops": ["container", "terraform", "helm", "monitoring", "nginx", "rollout"],
    "api-design": ["pagination", "versioning", "payload", "webhook", "openapi", "throttling"],
}

# Universal terms appear once in every document regardless of topic. With
# df == N their IDF is flat, so they never separate documents -- they exist
# so query-time posting traversal scales with corpus size, like a real
# vocabulary would.
_UNIVERSALS = ["note", "entry", "record", "detail", "context", "item"]

# Surface variety comes from stopword glue only, so the indexable token
# multiset stays fixed per (anchors, extras) choice.
_PATTERNS = [
    "{u} the {a0} {a1} with {a2} and {a3} for our {e0} {e1}",
    "{u} on {a0} {a1} {a2} {a3} and the {e0} {e1} there",
    "{u} about the {a0} and {a1} {a2} {a3} {e0} {e1} again",
]


@dataclass(frozen=True)
class CorpusSpec:
    n: int = 100
    seed: int = 42
    topics: tuple[str, ...] = TOPICS


@dataclass
class CorpusDoc:
    content: str
    tags: set[str]
    importance: int
    topic: str


def gen_corpus(spec: CorpusSpec) -> list[CorpusDoc]:
    """Deterministic under seed; topic sizes within +-1 of n/5."""
    rng = random.Random(spec.seed)
    universal_block = " ".join(_UNIVERSALS)
    docs: list[CorpusDoc] = []
    for i in range(spec.n):
        topic = spec.topics[i % len(spec.topics)]
        anchors = _ANCHORS[topic]
        e0, e1 = rng.sample(_EXTRAS[topic], 2)
        pattern = _PATTERNS[rng.randrange(len(_PATTERNS))]
        content = pattern.format(
            u=universal_block,
            a0=anchors[0],
            a1=anchors[1],
            a2=anchors[2],
            a3=anchors[3],
            e0=e0,
            e1=e1,
        )
        docs.append(
            CorpusDoc(
                content=content,
                tags={topic},
                importance=rng.randint(1, 10),
                topic=topic,
            )
        )
    return docs


def topic_queries(per_topic: int = 2, topics: tuple[str, ...] = TOPICS) -> list[tuple[str, str]]:
    """(query, correct topic) pairs over anchor + universal terms.

    Queries differ in stopword glue only, so every document of the target
    topic matches the same term set with the same frequencies.
    """
    out: list[tuple[str, str]] = []
    universal_block = " ".join(_UNIVERSALS)
    templates = [
        "how did we do the {a0} {a1} {a2} {a3} {u} work",
        "what was our {a0} {a1} {a2} {a3} {u} then",
        "when was that {a0} {a1} {a2} {a3} {u} done",
    ]
    for topic in topics:
        anchors = _ANCHORS[topic]
        for q in range(per_topic):
            tpl = templates[q % len(templates)]
            out.append(
                (
                    tpl.format(
                        u=universal_block,
                        a0=anchors[0],
                        a1=anchors[1],
                        a2=anchors[2],
                        a3=anchors[3],
                    ),
                    topic,
                )
            )
    return out
