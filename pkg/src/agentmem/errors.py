"""Exception hierarchy shared across the engine."""


class MemoryEngineError(Exception):
    """Base class for every error raised by this package."""


class NotFound(MemoryEngineError):
    """Memory id does not exist or is tombstoned."""


class UnknownParent(MemoryEngineError):
    """Parent id given to remember() does not refer to a live record."""


class InvalidImportance(MemoryEngineError):
    """Importance outside the 1..10 range."""


class TrustDenied(MemoryEngineError):
    """Agent trust is below the enforcement threshold for write/delete."""

    def __init__(self, agent: str, score: float, threshold: float):
        self.agent = agent
        self.score = score
        self.threshold = threshold
        super().__init__(
            f"agent {agent!r} trust {score:.3f} below threshold {threshold:.3f}"
        )


class UnknownAgent(MemoryEngineError):
    """Agent id has never been registered."""


class UnknownCategory(MemoryEngineError):
    """Not one of the 8 technology categories."""


class SelfFlag(MemoryEngineError):
    """Agents may not flag their own memories."""


class CapExceeded(MemoryEngineError):
    """Graph construction requested beyond the 10,000-memory cap."""


class ZeroVector(MemoryEngineError):
    """Vector operation on an empty vector where it is not defined."""


class IoFailure(MemoryEngineError):
    """Export/import could not read or write the target."""


class SchemaMismatch(MemoryEngineError):
    """Export file is malformed or from an incompatible schema."""


class InsufficientCorpus(MemoryEngineError):
    """Synthetic bootstrap needs at least 50 stored memories."""


class InsufficientData(MemoryEngineError):
    """Training dataset below the 50-query minimum."""


class EmptyInput(MemoryEngineError):
    """Metric computation over an empty ranking set."""
