"""Engine configuration.

Flat dotted keys from a JSON or key=value file, overridable through
AGENTMEM_* environment variables (AGENTMEM_TRUST_THRESHOLD=0.5 sets
trust.threshold).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

ENV_PREFIX = "AGENTMEM_"

DEFAULT_BOOST_WEIGHTS = {
    "bm25": 0.0,
    "tfidf_sim": 0.0,  # already in the base score
    "tech_match": 0.3,
    "project_match": 0.3,
    "workflow_fit": 0.2,
    "source_quality": 0.2,
    "importance": 0.15,
    "recency": 0.15,
    "access_freq": 0.1,
}


@dataclass
class EngineConfig:
    data_dir: Path = field(default_factory=lambda: Path("agentmem-data"))
    store_path: Optional[Path] = None
    learning_path: Optional[Path] = None
    events_path: Optional[Path] = None

    trust_threshold: float = 0.3
    trust_mode: str = "posterior"

    graph_seed: int = 42
    graph_cap: int = 10_000
    graph_threshold: float = 0.3
    subcluster_depth: int = 3
    subcluster_min_size: int = 5

    search_blend: float = 0.5
    search_pool_factor: int = 4

    boost_weights: dict = field(default_factory=lambda: dict(DEFAULT_BOOST_WEIGHTS))
    passive_decay_k: int = 5
    phase1_min_signals: int = 20
    phase2_min_signals: int = 200
    phase2_min_queries: int = 50

    gbdt_trees: int = 100
    gbdt_depth: int = 4
    gbdt_learning_rate: float = 0.1
    gbdt_min_leaf: int = 5

    def __post_init__(self) -> None:
        self.data_dir = Path(self.data_dir)
        if self.store_path is None:
            self.store_path = self.data_dir / "memory.db"
        if self.learning_path is None:
            self.learning_path = self.data_dir / "learning.db"
        if self.events_path is None:
            self.events_path = self.data_dir / "events.db"
        self.store_path = Path(self.store_path)
        self.learning_path = Path(self.learning_path)
        self.events_path = Path(self.events_path)

    # dotted key -> attribute
    _KEYMAP = {
        "data.dir": "data_dir",
        "store.path": "store_path",
        "learning.path": "learning_path",
        "events.path": "events_path",
        "trust.threshold": "trust_threshold",
        "trust.mode": "trust_mode",
        "graph.seed": "graph_seed",
        "graph.cap": "graph_cap",
        "graph.threshold": "graph_threshold",
        "graph.subcluster_depth": "subcluster_depth",
        "graph.subcluster_min_size": "subcluster_min_size",
        "search.blend": "search_blend",
        "search.pool_factor": "search_pool_factor",
        "ranker.weights": "boost_weights",
        "ranker.passive_decay_k": "passive_decay_k",
        "ranker.phase1_min_signals": "phase1_min_signals",
        "ranker.phase2_min_signals": "phase2_min_signals",
        "ranker.phase2_min_queries": "phase2_min_queries",
        "gbdt.trees": "gbdt_trees",
        "gbdt.depth": "gbdt_depth",
        "gbdt.learning_rate": "gbdt_learning_rate",
        "gbdt.min_leaf": "gbdt_min_leaf",
    }

    def apply(self, key: str, value: Any) -> None:
        attr = self._KEYMAP.get(key)
        if attr is None:
            raise KeyError(f"unknown config key {key!r}")
        current = getattr(self, attr)
        if isinstance(value, str):
            value = _coerce(value, current)
        setattr(self, attr, value)
        self.__post_init__()

    @classmethod
    def load(
        cls, path: Optional[str | Path] = None, env: Optional[dict] = None
    ) -> "EngineConfig":
        cfg = cls()
        if path is not None:
            text = Path(path).read_text(encoding="utf-8")
            stripped = text.lstrip()
            if stripped.startswith("{"):
                for key, value in json.loads(text).items():
                    cfg.apply(key, value)
            else:
                for line in text.splitlines():
                    line = line.strip()
                    if not line or line.startswith("#"):
                        continue
                    if "=" not in line:
                        raise ValueError(f"bad config line: {line!r}")
                    key, _, value = line.partition("=")
                    cfg.apply(key.strip(), value.strip())
        environ = os.environ if env is None else env
        for name, raw in environ.items():
            if not name.startswith(ENV_PREFIX):
                continue
            suffix = name[len(ENV_PREFIX):].lower()
            section, _, rest = suffix.partition("_")
            key = f"{section}.{rest}" if rest else section
            if key in cls._KEYMAP:
                cfg.apply(key, raw)
        return cfg


def _coerce(raw: str, current: Any) -> Any:
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, dict):
        return json.loads(raw)
    if isinstance(current, Path):
        return Path(raw)
    return raw
