from .corpus import CorpusDoc, CorpusSpec, gen_corpus, topic_queries
from .metrics import (
    adjusted_rand_index,
    grade_of,
    mrr,
    ndcg_at,
    ndcg_single,
    recall_at,
)
from .suites import (
    BenchReport,
    run_ablation,
    run_concurrency,
    run_graph,
    run_latency,
    run_trust_scenarios,
)

__all__ = [
    "CorpusDoc",
    "CorpusSpec",
    "gen_corpus",
    "topic_queries",
    "adjusted_rand_index",
    "grade_of",
    "mrr",
    "ndcg_at",
    "ndcg_single",
    "recall_at",
    "BenchReport",
    "run_ablation",
    "run_concurrency",
    "run_graph",
    "run_latency",
    "run_trust_scenarios",
]
