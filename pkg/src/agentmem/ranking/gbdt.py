"""Gradient-boosted regression trees trained with LambdaRank gradients.

Small, dependency-free (numpy only) learner: exact greedy trees fit to
pairwise lambdas weighted by |delta NDCG|, Newton-step leaf values.
Training is fully deterministic -- no sampling, stable sorts, first-win
tie-breaks -- so refitting identical data reproduces the model file
byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

MODEL_VERSION = 1


@dataclass
class QueryGroup:
    """Candidates of one query: feature rows and graded labels."""

    features: np.ndarray  # (n_docs, n_features) float64
    labels: np.ndarray  # (n_docs,) float64 grades

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)


def ndcg_at_k(ranked_labels: Sequence[float], k: int) -> float:
    """NDCG with 2^rel - 1 gains and log2 discounts; ideal from the same
    label multiset. 1.0 when no positive labels exist (nothing to rank)."""
    labels = np.asarray(ranked_labels, dtype=np.float64)[:k]
    ideal = np.sort(np.asarray(ranked_labels, dtype=np.float64))[::-1][:k]
    discounts = 1.0 / np.log2(np.arange(2, len(labels) + 2))
    dcg = float(np.sum((2.0 ** labels - 1) * discounts))
    idcg = float(np.sum((2.0 ** ideal - 1) * discounts[: len(ideal)]))
    if idcg <= 0:
        return 1.0
    return dcg / idcg


def _lambdas(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise LambdaRank gradients and second-order weights for one query."""
    n = len(labels)
    order = np.argsort(-scores, kind="stable")
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = np.arange(1, n + 1)
    gains = 2.0 ** labels - 1.0
    ideal = np.sort(gains)[::-1]
    idcg = float(np.sum(ideal / np.log2(np.arange(2, n + 2))))
    grad = np.zeros(n)
    hess = np.zeros(n)
    if idcg <= 0:
        return grad, hess
    disc = 1.0 / np.log2(ranks + 1.0)
    wins = labels[:, None] > labels[None, :]
    if not wins.any():
        return grad, hess
    delta = np.abs(gains[:, None] - gains[None, :]) * np.abs(disc[:, None] - disc[None, :]) / idcg
    with np.errstate(over="ignore"):
        rho = 1.0 / (1.0 + np.exp(scores[:, None] - scores[None, :]))
    lam = np.where(wins, rho * delta, 0.0)
    grad = lam.sum(axis=1) - lam.sum(axis=0)
    h = np.where(wins, rho * (1.0 - rho) * delta, 0.0)
    hess = h.sum(axis=1) + h.sum(axis=0)
    return grad, hess


@dataclass
class _Tree:
    feature: list[int] = field(default_factory=list)  # -1 for leaves
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        for i, row in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                if row[self.feature[node]] <= self.threshold[node]:
                    node = self.left[node]
                else:
                    node = self.right[node]
            out[i] = self.value[node]
        return out

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "value": self.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "_Tree":
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"])


class _TreeBuilder:
    def __init__(self, max_depth: int, min_leaf: int):
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def fit(self, X: np.ndarray, grad: np.ndarray, hess: np.ndarray) -> _Tree:
        tree = _Tree()
        self._grow(tree, X, grad, hess, np.arange(len(X)), 0)
        return tree

    def _leaf(self, tree: _Tree, grad, hess, idx) -> int:
        node = len(tree.feature)
        tree.feature.append(-1)
        tree.threshold.append(0.0)
        tree.left.append(-1)
        tree.right.append(-1)
        value = float(grad[idx].sum() / (hess[idx].sum() + 1e-9))
        tree.value.append(value)
        return node

    def _grow(self, tree, X, grad, hess, idx, depth) -> int:
        if depth >= self.max_depth or len(idx) < 2 * self.min_leaf:
            return self._leaf(tree, grad, hess, idx)

        g = grad[idx]
        total = g.sum()
        base = total * total / len(idx)
        best_gain = base + 1e-12
        best: Optional[tuple[int, float, np.ndarray]] = None
        for f in range(X.shape[1]):
            vals = X[idx, f]
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            cg = np.cumsum(g[order])
            n = len(idx)
            pos = np.arange(self.min_leaf - 1, n - self.min_leaf)
            if len(pos) == 0:
                continue
            splittable = pos[sv[pos] < sv[pos + 1] - 1e-15]
            if len(splittable) == 0:
                continue
            nl = splittable + 1
            sl = cg[splittable]
            sr = total - sl
            gain = sl * sl / nl + sr * sr / (n - nl)
            gi = int(np.argmax(gain))
            if gain[gi] > best_gain:
                best_gain = float(gain[gi])
                thr = (sv[splittable[gi]] + sv[splittable[gi] + 1]) / 2.0
                best = (f, thr, order[: nl[gi]])

        if best is None:
            return self._leaf(tree, grad, hess, idx)

        f, thr, left_order = best
        left_idx = idx[np.sort(left_order)]
        mask = np.ones(len(idx), dtype=bool)
        mask[left_order] = False
        right_idx = idx[np.sort(np.nonzero(mask)[0])]

        node = len(tree.feature)
        tree.feature.append(f)
        tree.threshold.append(float(thr))
        tree.left.append(-1)
        tree.right.append(-1)
        tree.value.append(0.0)
        tree.left[node] = self._grow(tree, X, grad, hess, left_idx, depth + 1)
        tree.right[node] = self._grow(tree, X, grad, hess, right_idx, depth + 1)
        return node


class LambdaRankGBDT:
    def __init__(
        self,
        n_trees: int = 100,
        max_depth: int = 4,
        learning_rate: float = 0.1,
        min_leaf: int = 5,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.min_leaf = min_leaf
        self.trees: list[_Tree] = []
        self.train_ndcg5: Optional[float] = None

    def fit(self, groups: Sequence[QueryGroup]) -> "LambdaRankGBDT":
        X = np.vstack([g.features for g in groups])
        offsets = np.cumsum([0] + [len(g.labels) for g in groups])
        scores = np.zeros(len(X))
        builder = _TreeBuilder(self.max_depth, self.min_leaf)
        self.trees = []
        for _ in range(self.n_trees):
            grad = np.zeros(len(X))
            hess = np.zeros(len(X))
            for gi, group in enumerate(groups):
                lo, hi = offsets[gi], offsets[gi + 1]
                g, h = _lambdas(scores[lo:hi], group.labels)
                grad[lo:hi] = g
                hess[lo:hi] = h
            tree = builder.fit(X, grad, hess)
            scores += self.learning_rate * tree.predict(X)
            self.trees.append(tree)
        self.train_ndcg5 = self.evaluate(groups, k=5)
        return self

    def boost_once(self, groups: Sequence[QueryGroup]) -> "LambdaRankGBDT":
        """Single boosting step appended to the current ensemble."""
        saved = self.n_trees
        existing = self.trees
        base_scores = [self.predict(g.features) for g in groups] if existing else None
        builder = _TreeBuilder(self.max_depth, self.min_leaf)
        X = np.vstack([g.features for g in groups])
        offsets = np.cumsum([0] + [len(g.labels) for g in groups])
        scores = (
            np.concatenate(base_scores) if base_scores is not None else np.zeros(len(X))
        )
        grad = np.zeros(len(X))
        hess = np.zeros(len(X))
        for gi, group in enumerate(groups):
            lo, hi = offsets[gi], offsets[gi + 1]
            g, h = _lambdas(scores[lo:hi], group.labels)
            grad[lo:hi] = g
            hess[lo:hi] = h
        self.trees = existing + [builder.fit(X, grad, hess)]
        self.n_trees = saved
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        out = np.zeros(len(X))
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def evaluate(self, groups: Sequence[QueryGroup], k: int = 5) -> float:
        """Mean NDCG@k over queries when ranked by model prediction."""
        vals = []
        for g in groups:
            scores = self.predict(g.features)
            order = np.argsort(-scores, kind="stable")
            vals.append(ndcg_at_k(g.labels[order], k))
        return float(np.mean(vals)) if vals else 0.0

    # -- persistence ----------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": MODEL_VERSION,
                "n_trees": self.n_trees,
                "max_depth": self.max_depth,
                "learning_rate": self.learning_rate,
                "min_leaf": self.min_leaf,
                "train_ndcg5": self.train_ndcg5,
                "trees": [t.to_dict() for t in self.trees],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "LambdaRankGBDT":
        data = json.loads(text)
        if data.get("version") != MODEL_VERSION:
            raise ValueError("unsupported model version")
        model = cls(
            n_trees=data["n_trees"],
            max_depth=data["max_depth"],
            learning_rate=data["learning_rate"],
            min_leaf=data["min_leaf"],
        )
        model.train_ndcg5 = data.get("train_ndcg5")
        model.trees = [_Tree.from_dict(d) for d in data["trees"]]
        return model
