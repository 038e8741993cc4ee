"""Per-agent trust scoring and enforcement.

Two models run side by side on the same signal stream:

* incremental -- starts at 1.0, each signal moves it by the signal
  magnitude shrunk by 1/(1 + n * eta), clamped to [0, 1];
* Beta posterior -- Beta(2, 1) prior, signal magnitudes converted to
  pseudo-counts at 100x scale, trust = posterior mean alpha/(alpha+beta).

The posterior is the default for enforcement: writes and deletes from
agents below the threshold are denied, reads are never blocked.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .errors import NotFound, SelfFlag, TrustDenied, UnknownAgent

ETA = 0.01  # decay coefficient in the incremental update
KAPPA = 100.0  # magnitude 0.01 == 1 pseudo-count in the Beta model
PRIOR_ALPHA = 2.0
PRIOR_BETA = 1.0
INITIAL_INCREMENTAL = 1.0
DEFAULT_THRESHOLD = 0.3
DEFAULT_MODE = "posterior"

# Negative kinds deliberately carry larger magnitude: trust is harder to
# gain than to lose.
SIGNAL_MAGNITUDES: dict[str, float] = {
    "verified_recall": +0.015,
    "consistent_write": +0.01,
    "low_error_rate": +0.02,
    "contradictory_write": -0.02,
    "flagged_content": -0.03,
    "anomalous_burst": -0.025,
}


@dataclass
class TrustState:
    agent: str
    alpha: float = PRIOR_ALPHA
    beta_: float = PRIOR_BETA
    t_inc: float = INITIAL_INCREMENTAL
    n: int = 0

    @property
    def posterior_mean(self) -> float:
        return self.alpha / (self.alpha + self.beta_)


def apply_signal(state: TrustState, kind: str) -> TrustState:
    """Update both models in place; n counts signals seen before this one."""
    delta = SIGNAL_MAGNITUDES[kind]
    step = delta / (1.0 + state.n * ETA)
    state.t_inc = min(1.0, max(0.0, state.t_inc + step))
    state.n += 1
    if delta >= 0:
        state.alpha += delta * KAPPA
    else:
        state.beta_ += -delta * KAPPA
    return state


class TrustEngine:
    def __init__(
        self,
        store,
        events=None,
        threshold: float = DEFAULT_THRESHOLD,
        mode: str = DEFAULT_MODE,
    ):
        if mode not in ("posterior", "incremental"):
            raise ValueError(f"unknown trust mode {mode!r}")
        self._store = store
        self._events = events
        self.threshold = threshold
        self.mode = mode
        self._lock = threading.Lock()
        self._states: dict[str, TrustState] = {}
        for row in store.read_conn().execute(
            "SELECT agent, alpha, beta, t_inc, n FROM trust"
        ):
            self._states[row[0]] = TrustState(row[0], row[1], row[2], row[3], row[4])

    def ensure_state(self, agent: str) -> TrustState:
        with self._lock:
            state = self._states.get(agent)
            if state is None:
                state = TrustState(agent)
                self._states[agent] = state
                self._persist(state)
            return state

    def is_known(self, agent: str) -> bool:
        with self._lock:
            return agent in self._states

    def _persist(self, state: TrustState) -> None:
        snap = (state.agent, state.alpha, state.beta_, state.t_inc, state.n)

        def work(conn):
            conn.execute(
                "INSERT OR REPLACE INTO trust (agent, alpha, beta, t_inc, n)"
                " VALUES (?,?,?,?,?)",
                snap,
            )

        self._store.submit(work, wait=False)

    def record_signal(self, agent: str, kind: str) -> TrustState:
        if kind not in SIGNAL_MAGNITUDES:
            raise ValueError(f"unknown signal kind {kind!r}")
        with self._lock:
            state = self._states.get(agent)
            if state is None:
                raise UnknownAgent(agent)
            apply_signal(state, kind)
            self._persist(state)
            snapshot = TrustState(
                state.agent, state.alpha, state.beta_, state.t_inc, state.n
            )
        if self._events is not None:
            self._events.publish(
                "trust.changed",
                agent=agent,
                payload={
                    "kind": kind,
                    "posterior": snapshot.posterior_mean,
                    "incremental": snapshot.t_inc,
                },
            )
        return snapshot

    def trust(self, agent: str, mode: str | None = None) -> float:
        with self._lock:
            state = self._states.get(agent)
            if state is None:
                raise UnknownAgent(agent)
            if (mode or self.mode) == "incremental":
                return state.t_inc
            return state.posterior_mean

    def state_of(self, agent: str) -> TrustState:
        with self._lock:
            state = self._states.get(agent)
            if state is None:
                raise UnknownAgent(agent)
            return TrustState(state.agent, state.alpha, state.beta_, state.t_inc, state.n)

    def allowed(self, agent: str, operation: str) -> bool:
        if operation not in ("write", "delete"):
            return True  # reads are never blocked
        return self.trust(agent) >= self.threshold

    def enforce(self, agent: str, operation: str) -> None:
        """Raise TrustDenied iff trust is strictly below the threshold."""
        if operation not in ("write", "delete"):
            return
        score = self.trust(agent)
        if score < self.threshold:
            raise TrustDenied(agent, score, self.threshold)

    def isolate(self, agent: str) -> list[int]:
        """All live memory ids whose provenance chain mentions the agent."""
        return self._store.ids_touched_by(agent)

    def flag_content(self, memory_id: int, reporter_agent: str) -> TrustState:
        record = self._store.get(memory_id)
        creator = record.provenance.created_by
        if creator == reporter_agent:
            raise SelfFlag(f"agent {reporter_agent!r} cannot flag its own memory")
        if not self.is_known(creator):
            # Creator recorded in provenance but never registered here; still
            # track it so the flag lands somewhere.
            self.ensure_state(creator)
        self._store.append_provenance_note(
            memory_id, reporter_agent, f"content flagged by {reporter_agent}"
        )
        return self.record_signal(creator, "flagged_content")

    def table(self) -> list[dict]:
        with self._lock:
            states = sorted(self._states.values(), key=lambda s: s.agent)
            return [
                {
                    "agent": s.agent,
                    "posterior": s.posterior_mean,
                    "incremental": s.t_inc,
                    "alpha": s.alpha,
                    "beta": s.beta_,
                    "signals": s.n,
                }
                for s in states
            ]
