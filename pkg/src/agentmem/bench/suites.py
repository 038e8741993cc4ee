"""Benchmark suites: latency, concurrency, graph scaling, layer ablation,
and adversarial trust scenarios.

Each suite builds a throwaway engine in a temp directory, runs against it,
and returns a BenchReport (rows for the delimited output, summary for the
gates). Wall-clock numbers are hardware-dependent; everything else is
deterministic under the seed.
"""

from __future__ import annotations

import platform
import random
import shutil
import statistics
import sys
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..config import EngineConfig
from ..engine import MemoryEngine
from ..store import AgentContext
from .corpus import CorpusSpec, gen_corpus, topic_queries
from .metrics import adjusted_rand_index, grade_of, mrr, ndcg_at, recall_at

# The graded labels NDCG uses here derive from the system's own importance
# scores, which the adaptive ranker also sees as a feature; treat adaptive
# NDCG gains as a circular, system-internal measure.
CIRCULARITY_NOTE = (
    "graded relevance is derived from stored importance scores, which the"
    " adaptive ranker also consumes as a feature"
)


@dataclass
class BenchReport:
    suite: str
    runs: int
    warmup: int
    environment: str
    rows: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "runs": self.runs,
            "warmup": self.warmup,
            "environment": self.environment,
            "rows": self.rows,
            "summary": self.summary,
            "notes": self.notes,
        }


def _environment() -> str:
    return f"{platform.platform()} / Python {sys.version.split()[0]}"


def _stats_ms(samples: list[float]) -> dict:
    arr = np.asarray(samples) * 1000.0
    return {
        "median_ms": float(np.median(arr)),
        "mean_ms": float(np.mean(arr)),
        "p95_ms": float(np.percentile(arr, 95)),
        "p99_ms": float(np.percentile(arr, 99)),
        "std_ms": float(np.std(arr)),
    }


class _TempEngine:
    """Engine in a throwaway directory."""

    def __init__(self, **config_overrides):
        self.dir = Path(tempfile.mkdtemp(prefix="agentmem-bench-"))
        cfg = EngineConfig(data_dir=self.dir, **config_overrides)
        self.engine = MemoryEngine(cfg)

    def close(self) -> None:
        self.engine.close()
        shutil.rmtree(self.dir, ignore_errors=True)

    def __enter__(self) -> MemoryEngine:
        return self.engine

    def __exit__(self, *exc) -> None:
        self.close()


def _load_corpus(engine: MemoryEngine, n: int, seed: int) -> dict[int, tuple[str, int]]:
    """Insert a synthetic corpus; returns id -> (topic, importance)."""
    docs = gen_corpus(CorpusSpec(n=n, seed=seed))
    ctx = AgentContext("bench-writer", "CLI")
    truth: dict[int, tuple[str, int]] = {}
    for doc in docs:
        rec = engine.remember(
            doc.content, doc.tags, doc.importance, agent_ctx=ctx
        )
        truth[rec.id] = (doc.topic, doc.importance)
    engine.flush()
    return truth


# ---------------------------------------------------------------------------
# Latency
# ---------------------------------------------------------------------------


def run_latency(
    sizes: list[int] = [100, 500, 1000],
    runs: int = 100,
    warmup: int = 10,
    seed: int = 42,
) -> BenchReport:
    report = BenchReport("latency", runs, warmup, _environment())
    queries = [q for q, _ in topic_queries(per_topic=2)]
    medians: dict[int, float] = {}
    for size in sizes:
        with _TempEngine() as engine:
            _load_corpus(engine, size, seed)
            for i in range(warmup):
                engine.recall(queries[i % len(queries)], limit=10)
            samples = []
            for i in range(runs):
                q = queries[i % len(queries)]
                t0 = time.perf_counter()
                engine.recall(q, limit=10)
                samples.append(time.perf_counter() - t0)
            stats = _stats_ms(samples)
            bytes_per_memory = engine.store.file_bytes() / max(1, size)
            row = {"memories": size, **stats, "bytes_per_memory": round(bytes_per_memory, 1)}
            report.rows.append(row)
            medians[size] = stats["median_ms"]
    report.summary["median_ms_by_size"] = {str(k): v for k, v in medians.items()}
    if 100 in medians and 1000 in medians and medians[100] > 0:
        report.summary["scaling_ratio_1000_over_100"] = medians[1000] / medians[100]
    return report


# ---------------------------------------------------------------------------
# Concurrency
# ---------------------------------------------------------------------------


def run_concurrency(
    writer_counts: list[int] = [1, 2, 5, 10],
    ops_per_writer: int = 200,
    seed: int = 42,
) -> BenchReport:
    report = BenchReport("concurrency", ops_per_writer, 0, _environment())
    total_errors = 0
    for writers in writer_counts:
        with _TempEngine() as engine:
            latencies: list[float] = []
            errors: list[Exception] = []
            lock = threading.Lock()

            def worker(widx: int) -> None:
                ctx = AgentContext(f"writer-{widx}", "REST")
                rng = random.Random(seed * 1000 + widx)
                for op in range(ops_per_writer):
                    content = (
                        f"concurrent write {widx}-{op} value {rng.randrange(10_000)}"
                    )
                    t0 = time.perf_counter()
                    try:
                        engine.remember(content, {"bench"}, 5, agent_ctx=ctx)
                        dt = time.perf_counter() - t0
                        with lock:
                            latencies.append(dt)
                    except Exception as exc:  # contention errors would land here
                        with lock:
                            errors.append(exc)

            threads = [
                threading.Thread(target=worker, args=(w,)) for w in range(writers)
            ]
            wall0 = time.perf_counter()
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            wall = time.perf_counter() - wall0
            engine.flush()
            persisted = engine.store.count_live()
            stats = _stats_ms(latencies) if latencies else {}
            report.rows.append(
                {
                    "writers": writers,
                    "ops_per_sec": round(len(latencies) / wall, 1) if wall > 0 else 0.0,
                    "median_ms": stats.get("median_ms"),
                    "p95_ms": stats.get("p95_ms"),
                    "total_ops": writers * ops_per_writer,
                    "errors": len(errors),
                    "persisted": persisted,
                }
            )
            total_errors += len(errors)
    report.summary["total_errors"] = total_errors
    return report


# ---------------------------------------------------------------------------
# Graph scaling
# ---------------------------------------------------------------------------


def run_graph(
    sizes: list[int] = [100, 500, 1000],
    seed: int = 42,
    include_full: bool = False,
) -> BenchReport:
    report = BenchReport("graph", 1, 0, _environment())
    if include_full:
        sizes = sizes + [5000]
    for size in sizes:
        with _TempEngine(graph_seed=seed) as engine:
            truth = _load_corpus(engine, size, seed)
            stats = engine.rebuild_graph()
            snap = engine.graph.snapshot()
            level0 = snap.partition.levels[0]
            ids = sorted(level0)
            ari = adjusted_rand_index(
                [truth[i][0] for i in ids], [level0[i] for i in ids]
            )
            report.rows.append(
                {
                    "memories": size,
                    "duration_s": round(stats.duration_s, 3),
                    "edges": stats.edges,
                    "communities_l0": stats.communities[0],
                    "communities_l1": stats.communities[1],
                    "modularity_l0": round(stats.modularity[0], 4),
                    "ari_vs_topics": round(ari, 4),
                }
            )
    report.summary["last_ari"] = report.rows[-1]["ari_vs_topics"] if report.rows else None
    return report


# ---------------------------------------------------------------------------
# Ablation
# ---------------------------------------------------------------------------


def _measure_config(
    engine: MemoryEngine,
    queries: list[tuple[str, str]],
    truth: dict[int, tuple[str, int]],
    limit: int = 10,
) -> dict:
    per_query_topics: list[list[str]] = []
    per_query_grades: list[list[int]] = []
    ideals: list[list[int]] = []
    correct: list[str] = []
    times: list[float] = []
    topic_grades: dict[str, list[int]] = {}
    for mem_id, (topic, importance) in truth.items():
        topic_grades.setdefault(topic, []).append(grade_of(True, importance))
    for query, want in queries:
        t0 = time.perf_counter()
        results = engine.recall(query, limit=limit)
        times.append(time.perf_counter() - t0)
        topics = []
        grades = []
        for record, _score in results:
            topic, importance = truth[record.id]
            topics.append(topic)
            grades.append(grade_of(topic == want, importance))
        per_query_topics.append(topics)
        per_query_grades.append(grades)
        ideals.append(topic_grades[want])
        correct.append(want)
    total_per_topic = len(truth) // 5
    return {
        "mrr": mrr(per_query_topics, correct),
        "ndcg5": ndcg_at(5, per_query_grades, ideals),
        "ndcg10": ndcg_at(10, per_query_grades, ideals),
        "recall5": recall_at(5, per_query_topics, correct, total_per_topic),
        "latency_ms": statistics.median(times) * 1000.0,
    }


def simulate_feedback(
    engine: MemoryEngine,
    queries: list[tuple[str, str]],
    truth: dict[int, tuple[str, int]],
    signals: int = 200,
    seed: int = 42,
) -> int:
    """Oracle-aligned consumption: tool_used signals for high-importance,
    topic-correct results of the templated queries."""
    rng = random.Random(seed)
    recorded = 0
    qi = 0
    while recorded < signals:
        query, want = queries[qi % len(queries)]
        qi += 1
        results = engine.recall(query, limit=10)
        good = [
            rec.id
            for rec, _ in results
            if truth[rec.id][0] == want and truth[rec.id][1] >= 8
        ]
        if not good:
            good = [
                rec.id for rec, _ in results if truth[rec.id][0] == want
            ][:1]
        for mem_id in good:
            if recorded >= signals:
                break
            engine.record_feedback("tool_used", mem_id, query)
            recorded += 1
        if qi > signals * 20:
            break
        rng.random()
    return recorded


def run_ablation(seed: int = 42, n: int = 1000) -> BenchReport:
    report = BenchReport("ablation", 10, 0, _environment())
    report.notes.append(CIRCULARITY_NOTE)
    queries = topic_queries(per_topic=2)
    with _TempEngine(graph_seed=seed) as engine:
        truth = _load_corpus(engine, n, seed)

        configs = [
            ("bm25_only", dict(tfidf=False, graph=False, adaptive=False)),
            ("tfidf_rerank", dict(tfidf=True, graph=False, adaptive=False)),
            ("graph_clusters", dict(tfidf=True, graph=True, adaptive=False)),
            ("full_no_adaptive", dict(tfidf=True, graph=True, adaptive=False)),
            ("adaptive", dict(tfidf=True, graph=True, adaptive=True)),
        ]
        graph_built = False
        base_row: Optional[dict] = None
        for name, flags in configs:
            if flags["graph"] and not graph_built:
                engine.rebuild_graph()
                graph_built = True
            if name == "adaptive":
                recorded = simulate_feedback(engine, queries, truth, 200, seed)
                report.summary["feedback_signals"] = recorded
                report.summary["phase"] = engine.ranker.phase()
            engine.pipeline.configure_stages(**flags)
            row = {"config": name, **_measure_config(engine, queries, truth)}
            report.rows.append(row)
            if name == "full_no_adaptive":
                base_row = row
        adaptive_row = report.rows[-1]
        if base_row and base_row["ndcg5"] > 0:
            report.summary["ndcg5_base"] = base_row["ndcg5"]
            report.summary["ndcg5_adaptive"] = adaptive_row["ndcg5"]
            report.summary["ndcg5_relative_gain"] = (
                adaptive_row["ndcg5"] - base_row["ndcg5"]
            ) / base_row["ndcg5"]
            report.summary["mrr_drift"] = abs(adaptive_row["mrr"] - base_row["mrr"])
    return report


# ---------------------------------------------------------------------------
# Trust scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrustScenarioParams:
    """Harness calibration for the per-operation signal stream.

    A benign operation always emits consistent_write, adds verified_recall
    with p_verified, and with p_benign_noise an accidental contradictory
    write (keeps benign agents off the saturation ceiling). A poisoning
    operation always emits contradictory_write and adds flagged_content
    with p_flagged.
    """

    p_verified: float = 0.3
    p_flagged: float = 0.5
    p_benign_noise: float = 0.04
    ops_per_agent: int = 200
    agents_per_scenario: int = 10


def _benign_op(trust, agent: str, rng: random.Random, p: TrustScenarioParams) -> None:
    trust.record_signal(agent, "consistent_write")
    if rng.random() < p.p_verified:
        trust.record_signal(agent, "verified_recall")
    if rng.random() < p.p_benign_noise:
        trust.record_signal(agent, "contradictory_write")


def _poison_op(trust, agent: str, rng: random.Random, p: TrustScenarioParams) -> None:
    trust.record_signal(agent, "contradictory_write")
    if rng.random() < p.p_flagged:
        trust.record_signal(agent, "flagged_content")


def run_trust_scenarios(
    seed: int = 42, params: Optional[TrustScenarioParams] = None
) -> BenchReport:
    p = params or TrustScenarioParams()
    report = BenchReport("trust", p.ops_per_agent, 0, _environment())
    rng = random.Random(seed)

    # Benign baseline
    with _TempEngine() as engine:
        trust = engine.trust
        agents = [f"benign-{i}" for i in range(p.agents_per_scenario)]
        for a in agents:
            engine.register_agent(a, "MCP")
        for a in agents:
            for _ in range(p.ops_per_agent):
                _benign_op(trust, a, rng, p)
        scores = [trust.trust(a) for a in agents]
        report.rows.append(
            {
                "scenario": "benign_baseline",
                "benign_trust": float(np.mean(scores)),
                "benign_min": float(np.min(scores)),
                "malicious_trust": None,
                "gap": 0.0,
                "below_threshold_benign": sum(
                    1 for s in scores if s < trust.threshold
                ),
            }
        )
        report.summary["benign_mean"] = float(np.mean(scores))
        report.summary["benign_min"] = float(np.min(scores))
        report.summary["benign_false_positives"] = sum(
            1 for s in scores if s < trust.threshold
        )

    # Single poisoner among benign agents
    with _TempEngine() as engine:
        trust = engine.trust
        benign = [f"benign-{i}" for i in range(p.agents_per_scenario - 1)]
        poisoner = "poisoner-0"
        for a in benign + [poisoner]:
            engine.register_agent(a, "MCP")
        for a in benign:
            for _ in range(p.ops_per_agent):
                _benign_op(trust, a, rng, p)
        for _ in range(p.ops_per_agent):
            _poison_op(trust, poisoner, rng, p)
        benign_scores = [trust.trust(a) for a in benign]
        mal = trust.trust(poisoner)
        gap = float(np.mean(benign_scores)) - mal
        report.rows.append(
            {
                "scenario": "single_poisoner",
                "benign_trust": float(np.mean(benign_scores)),
                "benign_min": float(np.min(benign_scores)),
                "malicious_trust": mal,
                "gap": gap,
                "below_threshold_benign": sum(
                    1 for s in benign_scores if s < trust.threshold
                ),
            }
        )
        report.summary["poisoner_gap"] = gap
        report.summary["poisoner_trust"] = mal

    # Sleeper: benign for half the ops, then poisoning
    with _TempEngine() as engine:
        trust = engine.trust
        sleepers = [f"sleeper-{i}" for i in range(p.agents_per_scenario)]
        for a in sleepers:
            engine.register_agent(a, "MCP")
        half = p.ops_per_agent // 2
        peaks = []
        finals = []
        trajectory = []
        for idx, a in enumerate(sleepers):
            for op in range(half):
                _benign_op(trust, a, rng, p)
                if idx == 0:
                    trajectory.append(trust.trust(a))
            peaks.append(trust.trust(a))
            for op in range(p.ops_per_agent - half):
                _poison_op(trust, a, rng, p)
                if idx == 0:
                    trajectory.append(trust.trust(a))
            finals.append(trust.trust(a))
        peak = float(np.mean(peaks))
        final = float(np.mean(finals))
        degradation = (peak - final) / peak if peak > 0 else 0.0
        report.rows.append(
            {
                "scenario": "sleeper",
                "benign_trust": None,
                "benign_min": None,
                "malicious_trust": final,
                "gap": None,
                "sleeper_peak": peak,
                "sleeper_final": final,
                "degradation_pct": degradation * 100.0,
                "final_below_threshold": final < trust.threshold,
            }
        )
        report.summary["sleeper_peak"] = peak
        report.summary["sleeper_final"] = final
        report.summary["sleeper_degradation_pct"] = degradation * 100.0
        report.summary["sleeper_trajectory"] = trajectory
    return report


SUITES: dict[str, Callable[..., BenchReport]] = {
    "latency": run_latency,
    "concurrency": run_concurrency,
    "graph": run_graph,
    "ablation": run_ablation,
    "trust": run_trust_scenarios,
}


def run_suite(name: str, seed: int = 42, full: bool = False) -> list[BenchReport]:
    if name == "all":
        return [run_suite(s, seed=seed, full=full)[0] for s in SUITES]
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}")
    if name == "latency":
        return [run_latency(seed=seed)]
    if name == "concurrency":
        return [run_concurrency(seed=seed)]
    if name == "graph":
        return [run_graph(seed=seed, include_full=full)]
    if name == "ablation":
        return [run_ablation(seed=seed)]
    if name == "trust":
        return [run_trust_scenarios(seed=seed)]
    raise AssertionError(name)
