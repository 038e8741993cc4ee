"""Local-first memory engine for multi-agent AI.

Stores, searches, and clusters memories on a single machine; scores
per-agent trust to defend against memory poisoning; tracks per-memory
provenance; broadcasts coordination events; and adaptively re-ranks
recall results from locally learned behavioral feedback. No network
egress, no LLM calls.
"""

from .config import EngineConfig
from .engine import MemoryEngine, open_engine
from .errors import (
    CapExceeded,
    EmptyInput,
    InsufficientCorpus,
    InsufficientData,
    InvalidImportance,
    IoFailure,
    MemoryEngineError,
    NotFound,
    SchemaMismatch,
    SelfFlag,
    TrustDenied,
    UnknownAgent,
    UnknownCategory,
    UnknownParent,
    ZeroVector,
)
from .store import AgentContext, MemoryRecord, ProvenanceBlock, ProvenanceEntry

__version__ = "0.1.0"

__all__ = [
    "EngineConfig",
    "MemoryEngine",
    "open_engine",
    "AgentContext",
    "MemoryRecord",
    "ProvenanceBlock",
    "ProvenanceEntry",
    "MemoryEngineError",
    "NotFound",
    "UnknownParent",
    "InvalidImportance",
    "TrustDenied",
    "UnknownAgent",
    "UnknownCategory",
    "SelfFlag",
    "CapExceeded",
    "ZeroVector",
    "IoFailure",
    "SchemaMismatch",
    "InsufficientCorpus",
    "InsufficientData",
    "EmptyInput",
]
