"""Beta-Binomial preference tracking across 8 technology categories.

Each (pattern kind, category) pair keeps an independent evidence counter
pair (k of N) on top of a kind-specific Beta prior. Confidence is the
posterior-style ratio (alpha + k) / (alpha + beta + N), clamped to 0.95
so limited evidence can never look certain.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import UnknownCategory
from .textindex import tokenize

CATEGORIES = (
    "frontend",
    "backend",
    "database",
    "devops",
    "ml-ai",
    "testing",
    "security",
    "tooling",
)

# Kind-specific Beta priors; preference starts more skeptical than a flat
# prior, style even more so.
PATTERN_PRIORS: dict[str, tuple[float, float]] = {
    "preference": (1.0, 4.0),
    "style": (1.0, 5.0),
}

CONFIDENCE_CAP = 0.95

# Keyword lexicon backing categorize(). Tokens are matched after the same
# normalization the text index applies.
_LEXICON: dict[str, frozenset[str]] = {
    "frontend": frozenset(
        "frontend react vue angular svelte css html dom browser component"
        " ui ux javascript typescript tailwind webpack vite responsive".split()
    ),
    "backend": frozenset(
        "backend api server rest endpoint graphql grpc fastapi django flask"
        " express node microservice rails spring middleware".split()
    ),
    "database": frozenset(
        "database postgresql postgres mysql sqlite sql schema migration"
        " query transaction redis mongodb orm nosql shard normalization".split()
    ),
    "devops": frozenset(
        "devops docker kubernetes deploy deployment container pipeline ci cd"
        " terraform ansible helm nginx monitoring infrastructure rollout".split()
    ),
    "ml-ai": frozenset(
        "ml ai model training neural network pytorch tensorflow embedding"
        " inference dataset classifier gradient llm epoch".split()
    ),
    "testing": frozenset(
        "test testing pytest unittest coverage mock fixture assertion"
        " regression e2e integration qa".split()
    ),
    "security": frozenset(
        "security auth authentication authorization encryption tls oauth"
        " token secrets vulnerability cve firewall audit".split()
    ),
    "tooling": frozenset(
        "tooling cli editor vscode git linter formatter makefile debugger"
        " profiler shell plugin".split()
    ),
}


def categorize(content: str, tags=()) -> set[str]:
    """Technology categories whose lexicon intersects the text or tags."""
    tokens = set(tokenize(content))
    for tag in tags:
        tokens.update(tokenize(tag))
    return {cat for cat, lexicon in _LEXICON.items() if tokens & lexicon}


@dataclass
class PatternState:
    pattern_kind: str
    category: str
    alpha: float
    beta: float
    k: int = 0
    n: int = 0

    @classmethod
    def fresh(cls, pattern_kind: str, category: str) -> "PatternState":
        alpha, beta = PATTERN_PRIORS[pattern_kind]
        return cls(pattern_kind, category, alpha, beta)


def confidence(state: PatternState) -> float:
    raw = (state.alpha + state.k) / (state.alpha + state.beta + state.n)
    return min(CONFIDENCE_CAP, raw)


def observe(state: PatternState, positive: bool) -> PatternState:
    """One observation: N grows, k grows only on positive evidence."""
    state.n += 1
    if positive:
        state.k += 1
    return state


class PatternTracker:
    """Per-(kind, category) states persisted in the learning store."""

    def __init__(self, learning_store):
        self._store = learning_store
        self._states: dict[tuple[str, str], PatternState] = {}
        for state in self._store.load_patterns():
            self._states[(state.pattern_kind, state.category)] = state

    def state(self, category: str, pattern_kind: str = "preference") -> PatternState:
        if category not in CATEGORIES:
            raise UnknownCategory(category)
        key = (pattern_kind, category)
        if key not in self._states:
            self._states[key] = PatternState.fresh(pattern_kind, category)
        return self._states[key]

    def observe(
        self, category: str, positive: bool, pattern_kind: str = "preference"
    ) -> PatternState:
        state = self.state(category, pattern_kind)
        observe(state, positive)
        self._store.save_pattern(state)
        return state

    def observe_memory(self, content: str, tags=()) -> set[str]:
        """A memory write counts as one positive observation per category."""
        cats = categorize(content, tags)
        for cat in sorted(cats):
            self.observe(cat, positive=True)
        return cats

    def snapshot(self) -> list[dict]:
        out = []
        for (kind, cat), state in sorted(self._states.items()):
            out.append(
                {
                    "pattern_kind": kind,
                    "category": cat,
                    "alpha": state.alpha,
                    "beta": state.beta,
                    "k": state.k,
                    "n": state.n,
                    "confidence": confidence(state),
                }
            )
        return out

    def reload(self) -> None:
        self._states.clear()
        for state in self._store.load_patterns():
            self._states[(state.pattern_kind, state.category)] = state
