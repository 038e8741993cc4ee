"""Knowledge graph: similarity edges and native Leiden communities.

Edges come from pairwise TF-IDF cosine similarity (> 0.3, every pair
evaluated, 10k-node cap). Community detection is a from-scratch Leiden:
queue-based local moving, a refinement pass that only merges connected
singletons inside each community, then aggregation, repeated until
stable. Hierarchical subclustering re-runs Leiden per community down to
depth 3, stopping early for communities under 5 nodes or ones that no
longer split.
"""

from __future__ import annotations

import random
import time
from collections import defaultdict, deque
from dataclasses import dataclass, field
from threading import Lock
from typing import Mapping, Optional

import numpy as np
from scipy import sparse

from .errors import CapExceeded
from .textindex import CorpusStats, TfIdfVector

GRAPH_CAP = 10_000
EDGE_THRESHOLD = 0.3
MAX_DEPTH = 3
MIN_SUBCLUSTER = 5

Adjacency = dict[int, dict[int, float]]


@dataclass
class SimilarityGraph:
    nodes: list[int]
    edges: list[tuple[int, int, float]]  # (a, b, weight) with a < b
    built_at: int = 0

    def adjacency(self) -> Adjacency:
        adj: Adjacency = {v: {} for v in self.nodes}
        for a, b, w in self.edges:
            adj[a][b] = w
            adj[b][a] = w
        return adj


@dataclass
class CommunityPartition:
    levels: list[dict[int, int]]
    modularity: list[float]


@dataclass
class GraphStats:
    nodes: int
    edges: int
    communities: list[int]  # per level 0..3
    modularity: list[float]
    duration_s: float
    built_at: int


def key_terms(counts: Mapping[str, int], stats: CorpusStats, k: int) -> list[tuple[str, float]]:
    """Top-k TF-IDF terms; ties broken lexicographically."""
    vec = TfIdfVector.build(counts, stats)
    ranked = sorted(vec.weights.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


def build_edges(
    vectors: dict[int, TfIdfVector],
    threshold: float = EDGE_THRESHOLD,
    cap: int = GRAPH_CAP,
    built_at: int = 0,
) -> SimilarityGraph:
    """Evaluate every pair; keep edges with cosine above the threshold."""
    if len(vectors) > cap:
        raise CapExceeded(f"{len(vectors)} memories exceeds the {cap} graph cap")
    nodes = sorted(vectors)
    usable = [v for v in nodes if vectors[v].norm > 0]
    edges: list[tuple[int, int, float]] = []
    if len(usable) >= 2:
        vocab: dict[str, int] = {}
        for v in usable:
            for term in vectors[v].weights:
                vocab.setdefault(term, len(vocab))
        rows, cols, vals = [], [], []
        for i, v in enumerate(usable):
            vec = vectors[v]
            for term, w in vec.weights.items():
                rows.append(i)
                cols.append(vocab[term])
                vals.append(w / vec.norm)
        mat = sparse.csr_matrix(
            (vals, (rows, cols)), shape=(len(usable), len(vocab)), dtype=np.float64
        )
        block = 512
        for start in range(0, len(usable), block):
            sims = (mat[start : start + block] @ mat.T).tocoo()
            for r, c, w in zip(sims.row, sims.col, sims.data):
                a = start + r
                if c <= a or w <= threshold:
                    continue
                edges.append((usable[a], usable[c], min(1.0, float(w))))
    edges.sort()
    return SimilarityGraph(nodes, edges, built_at)


def modularity(
    edges: list[tuple[int, int, float]],
    membership: Mapping[int, int],
    resolution: float = 1.0,
) -> float:
    """Weighted Newman-Girvan modularity; 0 for an edgeless graph."""
    m = sum(w for _, _, w in edges)
    if m == 0:
        return 0.0
    deg: dict[int, float] = defaultdict(float)
    intra = 0.0
    for a, b, w in edges:
        deg[a] += w
        deg[b] += w
        if membership[a] == membership[b]:
            intra += w
    comm_deg: dict[int, float] = defaultdict(float)
    for v, c in membership.items():
        comm_deg[c] += deg.get(v, 0.0)
    return intra / m - resolution * sum((d / (2 * m)) ** 2 for d in comm_deg.values())


# ---------------------------------------------------------------------------
# Leiden
# ---------------------------------------------------------------------------


def _strengths(adj: Adjacency) -> tuple[dict[int, float], float]:
    strength = {}
    for v, nbrs in adj.items():
        s = 0.0
        for u, w in nbrs.items():
            s += 2 * w if u == v else w
        strength[v] = s
    return strength, sum(strength.values())


def _local_move(adj, strength, m2, part, comm_tot, rng, resolution) -> bool:
    nodes = list(adj.keys())
    rng.shuffle(nodes)
    pending = deque(nodes)
    queued = set(nodes)
    moved = False
    while pending:
        v = pending.popleft()
        queued.discard(v)
        old = part[v]
        w_to: dict[int, float] = {}
        for nbr, w in adj[v].items():
            if nbr == v:
                continue
            c = part[nbr]
            w_to[c] = w_to.get(c, 0.0) + w
        comm_tot[old] -= strength[v]
        best_c = old
        best_gain = w_to.get(old, 0.0) - resolution * strength[v] * comm_tot[old] / m2
        for c in sorted(w_to):
            if c == old:
                continue
            gain = w_to[c] - resolution * strength[v] * comm_tot[c] / m2
            if gain > best_gain + 1e-12:
                best_gain = gain
                best_c = c
        part[v] = best_c
        comm_tot[best_c] += strength[v]
        if best_c != old:
            moved = True
            for nbr in adj[v]:
                if nbr != v and part[nbr] != best_c and nbr not in queued:
                    pending.append(nbr)
                    queued.add(nbr)
    return moved


def _refine(adj, strength, m2, part, rng, resolution) -> dict[int, int]:
    """Merge still-singleton nodes into connected sub-communities within
    their local-move community; guarantees internal connectivity."""
    refined = {v: v for v in adj}
    rtot = {v: strength[v] for v in adj}
    singleton = {v: True for v in adj}
    groups: dict[int, list[int]] = defaultdict(list)
    for v in sorted(adj):
        groups[part[v]].append(v)
    for c in sorted(groups):
        members = groups[c]
        if len(members) < 2:
            continue
        order = members[:]
        rng.shuffle(order)
        for v in order:
            if not singleton[v]:
                continue
            w_to: dict[int, float] = {}
            for nbr, w in adj[v].items():
                if nbr == v or part[nbr] != c:
                    continue
                rc = refined[nbr]
                if rc != v:
                    w_to[rc] = w_to.get(rc, 0.0) + w
            best_rc = None
            best_gain = 0.0
            for rc in sorted(w_to):
                gain = w_to[rc] - resolution * strength[v] * rtot[rc] / m2
                if gain > best_gain + 1e-12:
                    best_gain = gain
                    best_rc = rc
            if best_rc is not None:
                refined[v] = best_rc
                rtot[best_rc] += strength[v]
                singleton[v] = False
                singleton[best_rc] = False
    return refined


def _aggregate(adj, refined, part, carrier):
    labels = sorted(set(refined.values()))
    idx = {lab: i for i, lab in enumerate(labels)}
    agg: Adjacency = {i: {} for i in range(len(labels))}
    for v, nbrs in adj.items():
        rv = idx[refined[v]]
        for u, w in nbrs.items():
            if u < v:
                continue
            ru = idx[refined[u]]
            if rv == ru:
                agg[rv][rv] = agg[rv].get(rv, 0.0) + w
            else:
                agg[rv][ru] = agg[rv].get(ru, 0.0) + w
                agg[ru][rv] = agg[ru].get(rv, 0.0) + w
    new_part = {}
    for v in adj:
        new_part[idx[refined[v]]] = part[v]
    new_carrier = {orig: idx[refined[super_]] for orig, super_ in carrier.items()}
    return agg, new_part, new_carrier


def _split_disconnected(adj: Adjacency, membership: dict[int, int]) -> dict[int, int]:
    groups: dict[int, list[int]] = defaultdict(list)
    for v in sorted(membership):
        groups[membership[v]].append(v)
    out = {}
    next_id = 0
    for c in sorted(groups):
        members = set(groups[c])
        seen: set[int] = set()
        for v in sorted(members):
            if v in seen:
                continue
            comp = [v]
            seen.add(v)
            bfs = deque([v])
            while bfs:
                x = bfs.popleft()
                for nbr in adj.get(x, {}):
                    if nbr in members and nbr not in seen:
                        seen.add(nbr)
                        comp.append(nbr)
                        bfs.append(nbr)
            for node in comp:
                out[node] = next_id
            next_id += 1
    return out


def _dense(membership: dict[int, int]) -> dict[int, int]:
    remap: dict[int, int] = {}
    out = {}
    for v in sorted(membership):
        c = membership[v]
        if c not in remap:
            remap[c] = len(remap)
        out[v] = remap[c]
    return out


def leiden_partition(
    adj_orig: Adjacency, resolution: float = 1.0, seed: int = 42
) -> dict[int, int]:
    """Level-0 Leiden membership; deterministic for a fixed seed."""
    if not adj_orig:
        return {}
    rng = random.Random(seed)
    adj = {v: dict(nbrs) for v, nbrs in adj_orig.items()}
    carrier = {v: v for v in adj_orig}
    part = {v: v for v in adj}

    for _ in range(32):
        strength, m2 = _strengths(adj)
        if m2 == 0:
            break
        comm_tot: dict[int, float] = defaultdict(float)
        for v, c in part.items():
            comm_tot[c] += strength[v]
        moved = _local_move(adj, strength, m2, part, comm_tot, rng, resolution)
        n_comms = len(set(part.values()))
        if n_comms == len(adj) and not moved:
            break
        refined = _refine(adj, strength, m2, part, rng, resolution)
        n_refined = len(set(refined.values()))
        if n_refined == len(adj) and not moved:
            break
        adj, part, carrier = _aggregate(adj, refined, part, carrier)

    membership = {v: part[carrier[v]] for v in adj_orig}
    membership = _split_disconnected(adj_orig, membership)
    return _dense(membership)


def subcluster(
    graph: SimilarityGraph,
    level0: dict[int, int],
    max_depth: int = MAX_DEPTH,
    min_size: int = MIN_SUBCLUSTER,
    resolution: float = 1.0,
    seed: int = 42,
) -> CommunityPartition:
    """Re-run Leiden inside each community down to ``max_depth`` levels.

    A community stops subdividing once it is smaller than ``min_size`` or
    a re-run fails to split it; deeper levels then carry it unchanged.
    """
    adj = graph.adjacency()
    levels = [dict(level0)]
    frozen: set[int] = set()
    for depth in range(1, max_depth + 1):
        prev = levels[-1]
        groups: dict[int, list[int]] = defaultdict(list)
        for v in sorted(prev):
            groups[prev[v]].append(v)
        new_level: dict[int, int] = {}
        new_frozen: set[int] = set()
        next_id = 0
        for cid in sorted(groups):
            members = groups[cid]
            if cid in frozen or len(members) < min_size:
                for v in members:
                    new_level[v] = next_id
                new_frozen.add(next_id)
                next_id += 1
                continue
            member_set = set(members)
            sub_adj: Adjacency = {
                v: {u: w for u, w in adj[v].items() if u in member_set}
                for v in members
            }
            sub_part = leiden_partition(
                sub_adj, resolution=resolution, seed=seed + 7919 * cid + depth
            )
            sub_ids = sorted(set(sub_part.values()))
            if len(sub_ids) <= 1:
                for v in members:
                    new_level[v] = next_id
                new_frozen.add(next_id)
                next_id += 1
                continue
            remap = {s: next_id + i for i, s in enumerate(sub_ids)}
            for v in members:
                new_level[v] = remap[sub_part[v]]
            next_id += len(sub_ids)
        levels.append(new_level)
        frozen = new_frozen
    mods = [modularity(graph.edges, lvl) for lvl in levels]
    return CommunityPartition(levels, mods)


# ---------------------------------------------------------------------------
# Manager
# ---------------------------------------------------------------------------


@dataclass
class GraphSnapshot:
    graph: SimilarityGraph
    partition: CommunityPartition
    stats: GraphStats


class GraphManager:
    """Owns the latest graph snapshot; queries read it lock-free."""

    def __init__(
        self,
        seed: int = 42,
        threshold: float = EDGE_THRESHOLD,
        cap: int = GRAPH_CAP,
        max_depth: int = MAX_DEPTH,
        min_size: int = MIN_SUBCLUSTER,
        bus=None,
    ):
        self.seed = seed
        self.threshold = threshold
        self.cap = cap
        self.max_depth = max_depth
        self.min_size = min_size
        self._bus = bus
        self._snapshot: Optional[GraphSnapshot] = None
        self._build_lock = Lock()

    def rebuild(self, records, index) -> GraphStats:
        """Full pipeline: vectors -> edges -> leiden -> subcluster."""
        with self._build_lock:
            t0 = time.perf_counter()
            live = [r for r in records]
            if len(live) > self.cap:
                raise CapExceeded(
                    f"{len(live)} memories exceeds the {self.cap} graph cap"
                )
            stats = index.corpus_stats()
            vectors = {}
            for rec in live:
                counts = index.doc_counts(rec.id)
                if counts is None:
                    continue
                vectors[rec.id] = TfIdfVector.build(counts, stats)
            graph = build_edges(vectors, self.threshold, self.cap)
            level0 = leiden_partition(graph.adjacency(), seed=self.seed)
            partition = subcluster(
                graph,
                level0,
                max_depth=self.max_depth,
                min_size=self.min_size,
                seed=self.seed,
            )
            duration = time.perf_counter() - t0
            gstats = GraphStats(
                nodes=len(graph.nodes),
                edges=len(graph.edges),
                communities=[len(set(lvl.values())) if lvl else 0 for lvl in partition.levels],
                modularity=partition.modularity,
                duration_s=duration,
                built_at=int(time.time() * 1000),
            )
            self._snapshot = GraphSnapshot(graph, partition, gstats)
        if self._bus is not None:
            self._bus.publish(
                "graph.updated",
                payload={
                    "nodes": gstats.nodes,
                    "edges": gstats.edges,
                    "communities": gstats.communities,
                },
            )
        return gstats

    def snapshot(self) -> Optional[GraphSnapshot]:
        return self._snapshot

    def cluster_of(self, mem_id: int) -> Optional[int]:
        snap = self._snapshot
        if snap is None or not snap.partition.levels:
            return None
        return snap.partition.levels[0].get(mem_id)

    def export_dict(self) -> dict:
        snap = self._snapshot
        if snap is None:
            return {"nodes": [], "edges": [], "levels": [], "modularity": []}
        return {
            "nodes": snap.graph.nodes,
            "edges": [[a, b, w] for a, b, w in snap.graph.edges],
            "levels": [
                {str(k): v for k, v in lvl.items()} for lvl in snap.partition.levels
            ],
            "modularity": snap.partition.modularity,
            "stats": {
                "nodes": snap.stats.nodes,
                "edges": snap.stats.edges,
                "communities": snap.stats.communities,
                "duration_s": snap.stats.duration_s,
            },
        }
