"""Phase-gated adaptive re-ranking.

Phase 0 (under 20 feedback signals) returns candidates untouched, so a
cold system cannot perform worse than the base pipeline. Phase 1 applies
deterministic multiplicative boosts from the 9 features. Phase 2 (200+
signals across 50+ distinct queries) orders by the learned tree ensemble,
falling back to phase-1 boosts whenever the model is missing or broken.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from ..errors import InsufficientCorpus, InsufficientData
from ..patterns import categorize
from .feedback import CONSUMPTION_CHANNELS, FeedbackSignal, LearningStore
from .features import (
    FEATURE_NAMES,
    PreferenceProfile,
    RankingFeatureVector,
    build_feature_vectors,
    detect_project_context,
    mine_tech_preferences,
    mine_workflows,
)
from .gbdt import LambdaRankGBDT, QueryGroup

logger = logging.getLogger(__name__)

MODEL_NAME = "reranker"
PHASE1_MIN_SIGNALS = 20
PHASE2_MIN_SIGNALS = 200
PHASE2_MIN_QUERIES = 50
PASSIVE_DECAY_K = 5
BOOTSTRAP_MIN_MEMORIES = 50
TRAIN_MIN_QUERIES = 50


@dataclass
class Candidate:
    """One search hit flowing through the rerank stage."""

    record: object  # MemoryRecord
    bm25: float
    tfidf: float
    base_score: float
    cluster: Optional[int] = None

    @property
    def categories(self) -> set[str]:
        return categorize(self.record.content, self.record.tags)


class AdaptiveRanker:
    def __init__(
        self,
        learning: LearningStore,
        clock,
        categories_of: Callable[[int], set[str]],
        bus=None,
        boost_weights: Optional[Mapping[str, float]] = None,
        passive_decay_k: int = PASSIVE_DECAY_K,
        phase1_min_signals: int = PHASE1_MIN_SIGNALS,
        phase2_min_signals: int = PHASE2_MIN_SIGNALS,
        phase2_min_queries: int = PHASE2_MIN_QUERIES,
        gbdt_params: Optional[dict] = None,
    ):
        self.learning = learning
        self.clock = clock
        self._categories_of = categories_of
        self._bus = bus
        self.boost_weights = dict(boost_weights) if boost_weights else None
        self.passive_decay_k = passive_decay_k
        self.phase1_min_signals = phase1_min_signals
        self.phase2_min_signals = phase2_min_signals
        self.phase2_min_queries = phase2_min_queries
        self.gbdt_params = gbdt_params or {}
        self._mined: Optional[tuple[int, PreferenceProfile, list]] = None
        self._model: Optional[LambdaRankGBDT] = None
        self._model_loaded = False

    # -- feedback intake ---------------------------------------------------

    def record_feedback(self, signal: FeedbackSignal, synthetic: bool = False) -> None:
        self.learning.record(signal, synthetic=synthetic)
        if not synthetic:
            self._mined = None
            if signal.channel in CONSUMPTION_CHANNELS:
                self.learning.note_consumed(signal.memory_id)
        if self._bus is not None:
            self._bus.publish(
                "feedback.recorded",
                payload={
                    "channel": signal.channel,
                    "memory_id": signal.memory_id,
                    "synthetic": synthetic,
                },
            )

    def note_displayed(self, memory_ids: list[int]) -> list[int]:
        """Passive decay: a memory shown in K result sets with no
        consumption in between earns one weak negative signal."""
        crossed = self.learning.note_displayed(memory_ids, self.passive_decay_k)
        for mem_id in crossed:
            self.record_feedback(
                FeedbackSignal.make("passive_decay", mem_id, "", self.clock.now_ms())
            )
        return crossed

    def phase(self) -> int:
        signals, queries = self.learning.counts()
        if signals < self.phase1_min_signals:
            return 0
        if signals >= self.phase2_min_signals and queries >= self.phase2_min_queries:
            return 2
        return 1

    # -- mined state ---------------------------------------------------------

    def _mine(self) -> tuple[PreferenceProfile, list]:
        signals, _ = self.learning.counts()
        if self._mined is not None and self._mined[0] == signals:
            return self._mined[1], self._mined[2]
        now = self.clock.now_ms()
        all_signals = self.learning.signals()
        profile = mine_tech_preferences(all_signals, self._categories_of, now)
        events = []
        for sig in all_signals:
            if sig.polarity <= 0:
                continue
            cats = sorted(self._categories_of(sig.memory_id))
            if cats:
                events.append((cats[0], sig.timestamp))
        workflows = mine_workflows(events, now)
        self._mined = (signals, profile, workflows)
        return profile, workflows

    def profile(self) -> PreferenceProfile:
        return self._mine()[0]

    def workflows(self) -> list:
        return self._mine()[1]

    # -- features & rerank -----------------------------------------------------

    def feature_vectors(
        self, candidates: Sequence[Candidate], context: Optional[Mapping] = None
    ) -> list[RankingFeatureVector]:
        profile, workflows = self._mine()
        project_scores = detect_project_context(context)
        labels = []
        for c in candidates:
            lab = set(c.record.tags)
            if c.cluster is not None:
                lab.add(f"cluster:{c.cluster}")
            labels.append(lab)
        return build_feature_vectors(
            raw_bm25=[c.bm25 for c in candidates],
            raw_tfidf=[c.tfidf for c in candidates],
            candidate_categories=[c.categories for c in candidates],
            candidate_labels=labels,
            importances=[c.record.importance for c in candidates],
            trust_at_write=[c.record.provenance.trust_at_write for c in candidates],
            created_at=[c.record.created_at for c in candidates],
            access_counts=[c.record.access_count for c in candidates],
            profile=profile,
            project_scores=project_scores,
            workflows=workflows,
            now_ms=self.clock.now_ms(),
        )

    def boost_multiplier(self, vector: RankingFeatureVector) -> float:
        from ..config import DEFAULT_BOOST_WEIGHTS

        weights = self.boost_weights or DEFAULT_BOOST_WEIGHTS
        mult = 1.0
        for name in FEATURE_NAMES:
            mult *= 1.0 + weights.get(name, 0.0) * getattr(vector, name)
        return mult

    def rerank(
        self,
        candidates: Sequence[Candidate],
        query: str = "",
        context: Optional[Mapping] = None,
    ) -> list[tuple[Candidate, float]]:
        """Order candidates for delivery; scores are nonincreasing."""
        cands = list(candidates)
        if not cands:
            return []
        phase = self.phase()
        if phase == 0:
            return [(c, c.base_score) for c in cands]

        vectors = self.feature_vectors(cands, context)
        if phase == 2:
            model = self._load_model()
            if model is not None:
                X = np.array([v.as_list() for v in vectors])
                preds = model.predict(X)
                order = np.argsort(-preds, kind="stable")
                return [(cands[i], float(preds[i])) for i in order]
            logger.warning("phase 2 model missing/unreadable; using rule boosts")

        scored = [
            (c, c.base_score * self.boost_multiplier(v))
            for c, v in zip(cands, vectors)
        ]
        scored.sort(key=lambda cs: -cs[1])
        return scored

    # -- phase-2 training --------------------------------------------------------

    def _load_model(self) -> Optional[LambdaRankGBDT]:
        if self._model_loaded:
            return self._model
        self._model_loaded = True
        stored = self.learning.load_model(MODEL_NAME)
        if stored is None:
            self._model = None
            return None
        try:
            self._model = LambdaRankGBDT.from_json(stored[0])
        except Exception:
            logger.exception("stored model unreadable")
            self._model = None
        return self._model

    def train_phase2(
        self, dataset: Sequence[QueryGroup], source: str = "real"
    ) -> LambdaRankGBDT:
        if len(dataset) < TRAIN_MIN_QUERIES:
            raise InsufficientData(
                f"need >= {TRAIN_MIN_QUERIES} labeled queries, got {len(dataset)}"
            )
        params = {
            "n_trees": self.gbdt_params.get("n_trees", 100),
            "max_depth": self.gbdt_params.get("max_depth", 4),
            "learning_rate": self.gbdt_params.get("learning_rate", 0.1),
            "min_leaf": self.gbdt_params.get("min_leaf", 5),
        }
        model = LambdaRankGBDT(**params).fit(dataset)
        signals, queries = self.learning.counts()
        meta = json.dumps(
            {
                "source": source,
                "signal_count": signals,
                "query_count": queries,
                "train_ndcg5": model.train_ndcg5,
            },
            sort_keys=True,
        )
        self.learning.save_model(MODEL_NAME, model.to_json(), meta, self.clock.now_ms())
        self._model = model
        self._model_loaded = True
        return model

    def bootstrap_synthetic(
        self,
        records: Sequence,
        key_terms_of: Callable[[object], list[str]],
        search_fn: Callable[[str, int], Sequence[Candidate]],
        queries_wanted: int = 60,
        pool: int = 10,
    ) -> list[QueryGroup]:
        """Training data synthesized from stored memories.

        Seeds queries from per-memory key terms; candidates are labeled by
        importance bin when they share a technology category with the seed,
        0 otherwise. Rows are flagged synthetic so they never advance the
        feedback phase gate.
        """
        records = sorted(records, key=lambda r: r.id)
        if len(records) < BOOTSTRAP_MIN_MEMORIES:
            raise InsufficientCorpus(
                f"need >= {BOOTSTRAP_MIN_MEMORIES} memories, got {len(records)}"
            )
        groups: list[QueryGroup] = []
        step = max(1, len(records) // queries_wanted)
        for seed in records[::step]:
            if len(groups) >= queries_wanted:
                break
            terms = key_terms_of(seed)[:3]
            if not terms:
                continue
            query = " ".join(terms)
            candidates = list(search_fn(query, pool))
            if not candidates:
                continue
            seed_cats = categorize(seed.content, seed.tags)
            labels = []
            for cand in candidates:
                if seed_cats and (cand.categories & seed_cats):
                    labels.append(_importance_grade(cand.record.importance))
                else:
                    labels.append(0)
            vectors = self.feature_vectors(candidates)
            groups.append(
                QueryGroup(
                    np.array([v.as_list() for v in vectors]),
                    np.array(labels, dtype=np.float64),
                )
            )
            self.record_feedback(
                FeedbackSignal.make(
                    "tool_used", seed.id, query, self.clock.now_ms()
                ),
                synthetic=True,
            )
        return groups

    # -- erasure ----------------------------------------------------------------

    def reset(self) -> None:
        """One-command deletion of all behavioral state."""
        self.learning.reset()
        self._mined = None
        self._model = None
        self._model_loaded = False


def _importance_grade(importance: int) -> int:
    if importance >= 8:
        return 3
    if importance >= 5:
        return 2
    return 1
