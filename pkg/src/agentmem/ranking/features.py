"""Behavioral analysis and the 9-dimensional ranking feature vector.

Three mining layers feed the features: decayed cross-project technology
preferences (365-day half-life), project context detection from four
weighted signals, and sliding-window workflow pattern mining (30-day
half-life weights). Every feature is normalized into [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

from ..clock import DAY_MS, HOUR_MS

PREFERENCE_HALF_LIFE_DAYS = 365.0
WORKFLOW_HALF_LIFE_DAYS = 30.0
RECENCY_HALF_LIFE_DAYS = 30.0
WORKFLOW_WINDOW_MS = 2 * HOUR_MS
WORKFLOW_MIN_SUPPORT = 3.0
WORKFLOW_MAX_LEN = 5
TOP_PREFERENCE_CATEGORIES = 3

PROJECT_SIGNAL_WEIGHTS = {
    "explicit_label": 0.4,
    "active_paths": 0.25,
    "recent_tags": 0.2,
    "cluster_hint": 0.15,
}

FEATURE_NAMES = (
    "bm25",
    "tfidf_sim",
    "tech_match",
    "project_match",
    "workflow_fit",
    "source_quality",
    "importance",
    "recency",
    "access_freq",
)


@dataclass
class RankingFeatureVector:
    bm25: float
    tfidf_sim: float
    tech_match: float
    project_match: float
    workflow_fit: float
    source_quality: float
    importance: float
    recency: float
    access_freq: float

    def as_list(self) -> list[float]:
        return [getattr(self, name) for name in FEATURE_NAMES]


@dataclass
class PreferenceProfile:
    weights: dict[str, float] = field(default_factory=dict)

    def top_categories(self, k: int = TOP_PREFERENCE_CATEGORIES) -> list[str]:
        ranked = sorted(self.weights.items(), key=lambda kv: (-kv[1], kv[0]))
        return [cat for cat, w in ranked[:k] if w > 0]


@dataclass
class WorkflowPattern:
    sequence: tuple[str, ...]
    support: float
    last_seen: int


def mine_tech_preferences(
    signals: Iterable,
    categories_of: Callable[[int], set[str]],
    now_ms: int,
) -> PreferenceProfile:
    """Sum positive-signal polarities per category with 365-day half-life."""
    weights: dict[str, float] = {}
    for sig in signals:
        if sig.polarity <= 0:
            continue
        age_days = max(0.0, (now_ms - sig.timestamp) / DAY_MS)
        decay = 2.0 ** (-age_days / PREFERENCE_HALF_LIFE_DAYS)
        for cat in categories_of(sig.memory_id):
            weights[cat] = weights.get(cat, 0.0) + sig.polarity * decay
    return PreferenceProfile(weights)


def detect_project_context(context: Optional[Mapping]) -> dict[str, float]:
    """Weighted vote over the four context signals, max-normalized to <= 1.

    Each signal kind votes once per project it names; the normalizer is
    the total weight of the signal kinds actually present, so a project
    backed by every present signal scores exactly 1.0.
    """
    if not context:
        return {}
    votes: dict[str, float] = {}
    present_weight = 0.0

    def cast(kind: str, labels: Iterable[str]) -> None:
        nonlocal present_weight
        labels = {l for l in labels if l}
        if not labels:
            return
        present_weight += PROJECT_SIGNAL_WEIGHTS[kind]
        for label in labels:
            votes[label] = votes.get(label, 0.0) + PROJECT_SIGNAL_WEIGHTS[kind]

    explicit = context.get("explicit_label")
    cast("explicit_label", [explicit] if explicit else [])
    paths = context.get("active_paths") or []
    cast("active_paths", {_project_of_path(p) for p in paths})
    cast("recent_tags", set(context.get("recent_tags") or []))
    cluster = context.get("cluster_hint")
    cast("cluster_hint", [f"cluster:{cluster}"] if cluster is not None else [])

    if not votes or present_weight == 0:
        return {}
    return {label: v / present_weight for label, v in votes.items()}


def _project_of_path(path: str) -> str:
    parts = [p for p in str(path).replace("\\", "/").split("/") if p and p != "."]
    return parts[0] if parts else ""


def mine_workflows(
    event_history: Sequence[tuple[str, int]],
    now_ms: int,
    window_ms: int = WORKFLOW_WINDOW_MS,
    min_support: float = WORKFLOW_MIN_SUPPORT,
    max_len: int = WORKFLOW_MAX_LEN,
) -> list[WorkflowPattern]:
    """Contiguous category runs of length 2..5 inside a sliding window.

    Each occurrence is weighted by 2^(-age_days/30) at its last event;
    patterns below ``min_support`` are dropped. Sorted by support, then
    sequence for determinism.
    """
    events = sorted(event_history, key=lambda e: e[1])
    supports: dict[tuple[str, ...], float] = {}
    last_seen: dict[tuple[str, ...], int] = {}
    n = len(events)
    for i in range(n):
        for j in range(i + 1, min(i + max_len, n)):
            if events[j][1] - events[i][1] > window_ms:
                break
            seq = tuple(cat for cat, _ in events[i : j + 1])
            age_days = max(0.0, (now_ms - events[j][1]) / DAY_MS)
            weight = 2.0 ** (-age_days / WORKFLOW_HALF_LIFE_DAYS)
            supports[seq] = supports.get(seq, 0.0) + weight
            last_seen[seq] = max(last_seen.get(seq, 0), events[j][1])
    patterns = [
        WorkflowPattern(seq, sup, last_seen[seq])
        for seq, sup in supports.items()
        if sup >= min_support
    ]
    patterns.sort(key=lambda p: (-p.support, p.sequence))
    return patterns


def _minmax(values: list[float]) -> list[float]:
    # Degenerate spans (singleton or uniform) normalize to 1.0 so the
    # downstream boosts stay meaningful.
    lo, hi = min(values), max(values)
    if hi - lo <= 1e-12:
        return [1.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def build_feature_vectors(
    raw_bm25: list[float],
    raw_tfidf: list[float],
    candidate_categories: list[set[str]],
    candidate_labels: list[set[str]],
    importances: list[int],
    trust_at_write: list[float],
    created_at: list[int],
    access_counts: list[int],
    profile: PreferenceProfile,
    project_scores: Mapping[str, float],
    workflows: Sequence[WorkflowPattern],
    now_ms: int,
) -> list[RankingFeatureVector]:
    """Per-candidate 9-vectors; bm25/tfidf/access normalize within the set."""
    n = len(raw_bm25)
    if n == 0:
        return []
    bm25_n = _minmax(raw_bm25)
    tfidf_n = _minmax(raw_tfidf)
    top_cats = set(profile.top_categories())
    max_support = max((p.support for p in workflows), default=0.0)
    max_access = max(access_counts) if access_counts else 0

    out = []
    for i in range(n):
        cats = candidate_categories[i]
        tech = len(cats & top_cats) / len(cats) if cats else 0.0
        labels = candidate_labels[i]
        project = max((project_scores.get(l, 0.0) for l in labels), default=0.0)
        workflow = 0.0
        if max_support > 0 and cats:
            best = max(
                (p.support for p in workflows if p.sequence[-1] in cats),
                default=0.0,
            )
            workflow = best / max_support
        age_days = max(0.0, (now_ms - created_at[i]) / DAY_MS)
        recency = min(1.0, 2.0 ** (-age_days / RECENCY_HALF_LIFE_DAYS))
        access = (
            math.log1p(access_counts[i]) / math.log1p(max_access)
            if max_access > 0
            else 0.0
        )
        out.append(
            RankingFeatureVector(
                bm25=bm25_n[i],
                tfidf_sim=tfidf_n[i],
                tech_match=tech,
                project_match=min(1.0, project),
                workflow_fit=min(1.0, workflow),
                source_quality=min(1.0, max(0.0, trust_at_write[i])),
                importance=(importances[i] - 1) / 9.0,
                recency=recency,
                access_freq=min(1.0, access),
            )
        )
    return out
