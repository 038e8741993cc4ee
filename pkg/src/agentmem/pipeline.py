"""End-to-end recall: BM25 candidates -> TF-IDF blend -> adaptive rerank.

Stage toggles exist for ablation runs: disabling tfidf drops the cosine
half of the blend, the graph flag only controls whether cluster ids are
visible to feature extraction, and disabling adaptive is exactly phase-0
behavior. Access counters and events are fired asynchronously so recall
latency never waits on durability.
"""

from __future__ import annotations

from typing import Mapping, Optional

from .errors import NotFound
from .ranking import Candidate
from .textindex import cosine


def _minmax(values: list[float]) -> list[float]:
    lo, hi = min(values), max(values)
    if hi - lo <= 1e-12:
        return [1.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


class SearchPipeline:
    def __init__(
        self,
        store,
        index,
        ranker=None,
        bus=None,
        registry=None,
        graph=None,
        blend: float = 0.5,
        pool_factor: int = 4,
    ):
        self.store = store
        self.index = index
        self.ranker = ranker
        self.bus = bus
        self.registry = registry
        self.graph = graph
        self.blend = blend
        self.pool_factor = pool_factor
        self.stages = {"tfidf": True, "graph": True, "adaptive": True}

    def configure_stages(
        self,
        tfidf: Optional[bool] = None,
        graph: Optional[bool] = None,
        adaptive: Optional[bool] = None,
    ) -> dict:
        if tfidf is not None:
            self.stages["tfidf"] = tfidf
        if graph is not None:
            self.stages["graph"] = graph
        if adaptive is not None:
            self.stages["adaptive"] = adaptive
        return dict(self.stages)

    def candidates(self, query: str, limit: int) -> list[Candidate]:
        """Stage 1+2: scored candidate pool, blend-ordered, no side effects."""
        matches = self.index.match(query, self.pool_factor * limit)
        if not matches:
            return []
        use_tfidf = self.stages["tfidf"]
        stats = self.index.corpus_stats() if use_tfidf else None
        qvec = self.index.vector_for_text(query, stats) if use_tfidf else None
        bm25_norm = _minmax([s for _, s in matches])
        out: list[Candidate] = []
        for (mem_id, raw_bm25), nb in zip(matches, bm25_norm):
            try:
                record = self.store.get(mem_id)
            except NotFound:
                continue  # tombstoned between match and fetch
            sim = 0.0
            if use_tfidf:
                sim = cosine(qvec, self.index.vector_for(mem_id, stats))
                base = self.blend * nb + (1.0 - self.blend) * sim
            else:
                base = nb
            cluster = None
            if self.stages["graph"] and self.graph is not None:
                cluster = self.graph.cluster_of(mem_id)
            out.append(Candidate(record, raw_bm25, sim, base, cluster))
        out.sort(key=lambda c: -c.base_score)
        return out

    def recall(
        self,
        query: str,
        limit: int = 10,
        context: Optional[Mapping] = None,
        agent_ctx=None,
    ) -> list[tuple[object, float]]:
        pool = self.candidates(query, limit)
        if self.stages["adaptive"] and self.ranker is not None:
            ranked = self.ranker.rerank(pool, query, context)
        else:
            ranked = [(c, c.base_score) for c in pool]
        top = ranked[:limit]

        ids = [c.record.id for c, _ in top]
        if ids:
            self.store.bump_access(ids)
            if self.ranker is not None:
                self.ranker.note_displayed(ids)
        if self.bus is not None:
            agent = agent_ctx.agent if agent_ctx else None
            for c, _ in top:
                self.bus.publish(
                    "memory.recalled",
                    agent=agent,
                    payload={"memory_id": c.record.id, "query": query},
                )
        if self.registry is not None and agent_ctx is not None:
            self.registry.touch(agent_ctx.agent, "recall")
        return [(c.record, score) for c, score in top]
