"""Engine facade: wires the store, index, graph, trust, events, and the
adaptive ranker behind one object the CLI, REST service, and RPC loop all
share. One engine instance per data directory."""

from __future__ import annotations

import logging
from collections import Counter
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .clock import Clock
from .config import EngineConfig
from .errors import NotFound
from .events import AgentRegistry, EventBus
from .graph import GraphManager, GraphStats, key_terms
from .patterns import PatternTracker, categorize
from .pipeline import SearchPipeline
from .ranking import AdaptiveRanker, FeedbackSignal, LearningStore
from .store import AgentContext, MemoryRecord, MemoryStore
from .textindex import TextIndex
from .trust import TrustEngine

logger = logging.getLogger(__name__)


class MemoryEngine:
    def __init__(self, config: Optional[EngineConfig] = None, clock: Optional[Clock] = None):
        self.config = config or EngineConfig()
        self.clock = clock or Clock()

        self.store = MemoryStore(self.config.store_path, self.clock)
        self.bus = EventBus(self.config.events_path, self.clock)
        self.registry = AgentRegistry(self.store, self.bus)
        self.trust = TrustEngine(
            self.store,
            events=self.bus,
            threshold=self.config.trust_threshold,
            mode=self.config.trust_mode,
        )
        self.index = TextIndex()
        for record in self.store.all_live():
            self.index.index_memory(record)

        self.learning = LearningStore(self.config.learning_path)
        self.patterns = PatternTracker(self.learning)
        self.ranker = AdaptiveRanker(
            self.learning,
            self.clock,
            self._categories_of,
            bus=self.bus,
            boost_weights=self.config.boost_weights,
            passive_decay_k=self.config.passive_decay_k,
            phase1_min_signals=self.config.phase1_min_signals,
            phase2_min_signals=self.config.phase2_min_signals,
            phase2_min_queries=self.config.phase2_min_queries,
            gbdt_params={
                "n_trees": self.config.gbdt_trees,
                "max_depth": self.config.gbdt_depth,
                "learning_rate": self.config.gbdt_learning_rate,
                "min_leaf": self.config.gbdt_min_leaf,
            },
        )
        self.graph = GraphManager(
            seed=self.config.graph_seed,
            threshold=self.config.graph_threshold,
            cap=self.config.graph_cap,
            max_depth=self.config.subcluster_depth,
            min_size=self.config.subcluster_min_size,
            bus=self.bus,
        )
        self.pipeline = SearchPipeline(
            self.store,
            self.index,
            ranker=self.ranker,
            bus=self.bus,
            registry=self.registry,
            graph=self.graph,
            blend=self.config.search_blend,
            pool_factor=self.config.search_pool_factor,
        )

    # -- helpers -----------------------------------------------------------

    def _categories_of(self, mem_id: int) -> set[str]:
        try:
            record = self.store.get(mem_id, include_deleted=True)
        except NotFound:
            return set()
        return categorize(record.content, record.tags)

    def register_agent(self, agent: str, protocol: str = "CLI"):
        profile = self.registry.ensure(agent, protocol)
        self.trust.ensure_state(agent)
        return profile

    # -- memory operations ----------------------------------------------------

    def remember(
        self,
        content: str,
        tags: Iterable[str] = (),
        importance: int = 5,
        parent: Optional[int] = None,
        agent_ctx: Optional[AgentContext] = None,
        entity_vector: Optional[dict[str, float]] = None,
    ) -> MemoryRecord:
        ctx = agent_ctx or AgentContext("local-user", "CLI")
        self.register_agent(ctx.agent, ctx.protocol)
        self.trust.enforce(ctx.agent, "write")
        record = self.store.insert(
            content=content,
            tags=tags,
            importance=importance,
            parent_id=parent,
            created_by=ctx.agent,
            source_protocol=ctx.protocol,
            trust_at_write=self.trust.trust(ctx.agent),
            entity_vector=entity_vector,
            post=self.index.index_memory,
        )
        self.patterns.observe_memory(content, tags)
        self.registry.touch(ctx.agent, "write")
        self.bus.publish(
            "memory.created",
            agent=ctx.agent,
            payload={"memory_id": record.id, "importance": record.importance},
        )
        return record

    def get(self, mem_id: int) -> MemoryRecord:
        return self.store.get(mem_id)

    def delete(self, mem_id: int, agent_ctx: Optional[AgentContext] = None) -> None:
        ctx = agent_ctx or AgentContext("local-user", "CLI")
        self.register_agent(ctx.agent, ctx.protocol)
        self.trust.enforce(ctx.agent, "delete")
        self.store.tombstone(
            mem_id, ctx.agent, post=lambda rec: self.index.deindex_memory(rec.id)
        )
        self.registry.touch(ctx.agent, "write")
        self.bus.publish(
            "memory.deleted", agent=ctx.agent, payload={"memory_id": mem_id}
        )

    def update(
        self,
        mem_id: int,
        agent_ctx: Optional[AgentContext] = None,
        content: Optional[str] = None,
        tags: Optional[Iterable[str]] = None,
        importance: Optional[int] = None,
        entity_vector: Optional[dict[str, float]] = None,
        note: Optional[str] = None,
    ) -> MemoryRecord:
        ctx = agent_ctx or AgentContext("local-user", "CLI")
        self.register_agent(ctx.agent, ctx.protocol)
        self.trust.enforce(ctx.agent, "write")
        record = self.store.update(
            mem_id,
            ctx.agent,
            content=content,
            tags=tags,
            importance=importance,
            entity_vector=entity_vector,
            note=note,
            post=self.index.index_memory if content is not None else None,
        )
        self.registry.touch(ctx.agent, "write")
        return record

    def children(self, mem_id: int) -> list[MemoryRecord]:
        return self.store.children(mem_id)

    def subtree(self, mem_id: int) -> list[MemoryRecord]:
        return self.store.subtree(mem_id)

    def parent_of(self, mem_id: int) -> Optional[MemoryRecord]:
        return self.store.parent_of(mem_id)

    def compact(self) -> list[int]:
        return self.store.compact()

    def export_json(self, dest) -> int:
        return self.store.export_json(dest)

    def import_json(self, src) -> int:
        count = self.store.import_json(src)
        self.index.clear()
        for record in self.store.all_live():
            self.index.index_memory(record)
        return count

    # -- search ------------------------------------------------------------------

    def recall(
        self,
        query: str,
        limit: int = 10,
        context: Optional[Mapping] = None,
        agent_ctx: Optional[AgentContext] = None,
    ) -> list[tuple[MemoryRecord, float]]:
        if agent_ctx is not None:
            self.register_agent(agent_ctx.agent, agent_ctx.protocol)
        return self.pipeline.recall(query, limit, context, agent_ctx)

    # -- feedback & learning -------------------------------------------------------

    def record_feedback(
        self, channel: str, memory_id: int, query: str = ""
    ) -> None:
        if channel != "passive_decay" and not self.store.exists(memory_id):
            raise NotFound(f"memory {memory_id} not found")
        self.ranker.record_feedback(
            FeedbackSignal.make(channel, memory_id, query, self.clock.now_ms())
        )

    def learning_reset(self) -> None:
        self.ranker.reset()
        self.patterns.reload()

    def bootstrap_synthetic(self):
        records = self.store.all_live()
        stats = self.index.corpus_stats()

        def key_terms_of(record) -> list[str]:
            counts = self.index.doc_counts(record.id) or Counter()
            return [t for t, _ in key_terms(counts, stats, 5)]

        return self.ranker.bootstrap_synthetic(
            records, key_terms_of, self.pipeline.candidates
        )

    def train_phase2(self, dataset, source: str = "real"):
        return self.ranker.train_phase2(dataset, source=source)

    # -- trust / provenance ------------------------------------------------------

    def flag_content(self, memory_id: int, reporter_agent: str):
        self.register_agent(reporter_agent, "CLI")
        return self.trust.flag_content(memory_id, reporter_agent)

    def isolate(self, agent: str) -> list[int]:
        return self.trust.isolate(agent)

    # -- graph ---------------------------------------------------------------------

    def rebuild_graph(self) -> GraphStats:
        return self.graph.rebuild(self.store.all_live(), self.index)

    # -- introspection ----------------------------------------------------------------

    def status(self) -> dict:
        signals, queries = self.learning.counts()
        snap = self.graph.snapshot()
        return {
            "memories": self.store.count_live(),
            "agents": len(self.registry.all_profiles()),
            "phase": self.ranker.phase(),
            "feedback_signals": signals,
            "unique_queries": queries,
            "graph": {
                "nodes": snap.stats.nodes,
                "edges": snap.stats.edges,
                "communities": snap.stats.communities,
            }
            if snap
            else None,
        }

    def flush(self) -> None:
        self.store.flush()
        self.bus.flush()
        self.learning.flush_display()

    def close(self) -> None:
        self.flush()
        self.store.close()
        self.bus.close()
        self.learning.close()


def open_engine(
    data_dir: Optional[str | Path] = None,
    config_path: Optional[str | Path] = None,
) -> MemoryEngine:
    config = EngineConfig.load(config_path)
    if data_dir is not None:
        config.apply("data.dir", str(data_dir))
        config.store_path = Path(data_dir) / "memory.db"
        config.learning_path = Path(data_dir) / "learning.db"
        config.events_path = Path(data_dir) / "events.db"
    return MemoryEngine(config)
