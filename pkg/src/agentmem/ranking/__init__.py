from .adaptive import AdaptiveRanker, Candidate
from .feedback import FeedbackSignal, LearningStore, normalize_query
from .features import (
    PreferenceProfile,
    RankingFeatureVector,
    WorkflowPattern,
    detect_project_context,
    mine_tech_preferences,
    mine_workflows,
)
from .gbdt import LambdaRankGBDT, QueryGroup, ndcg_at_k

__all__ = [
    "AdaptiveRanker",
    "Candidate",
    "FeedbackSignal",
    "LearningStore",
    "normalize_query",
    "PreferenceProfile",
    "RankingFeatureVector",
    "WorkflowPattern",
    "detect_project_context",
    "mine_tech_preferences",
    "mine_workflows",
    "LambdaRankGBDT",
    "QueryGroup",
    "ndcg_at_k",
]
