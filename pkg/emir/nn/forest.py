"""Random forest of Gini trees.

Trees are flat arrays: ``feature[n] == -1`` marks a leaf, otherwise rows with
``x[feature] <= threshold`` go to ``left[n]``. Leaves keep their (neg, pos)
sample counts; a tree's score is the positive fraction of the reached leaf. A
window is a hotspot when more than half of the trees vote for it (leaf fraction
above one half); the reported score stays the mean leaf fraction.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..schemas import ForestParams
from .base import Classifier

logger = logging.getLogger(__name__)


@dataclass
class Tree:
    feature: List[int] = field(default_factory=list)
    threshold: List[float] = field(default_factory=list)
    left: List[int] = field(default_factory=list)
    right: List[int] = field(default_factory=list)
    counts: List[Tuple[int, int]] = field(default_factory=list)

    def add(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append((0, 0))
        return len(self.feature) - 1

    def score(self, X: np.ndarray) -> np.ndarray:
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        counts = np.asarray(self.counts, dtype=float).reshape(-1, 2)
        node = np.zeros(X.shape[0], dtype=int)
        active = feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            f = feature[node[rows]]
            go_left = X[rows, f] <= threshold[node[rows]]
            node[rows] = np.where(go_left, left[node[rows]], right[node[rows]])
            active = feature[node] >= 0
        leaf = counts[node]
        return leaf[:, 1] / leaf.sum(axis=1)

    def to_nested(self, n: int = 0) -> Dict[str, Any]:
        if self.feature[n] < 0:
            return {"counts": list(self.counts[n])}
        return {
            "feature": self.feature[n],
            "threshold": self.threshold[n],
            "left": self.to_nested(self.left[n]),
            "right": self.to_nested(self.right[n]),
        }

    @classmethod
    def from_nested(cls, nested: Dict[str, Any]) -> "Tree":
        tree = cls()
        stack = [(nested, tree.add())]
        while stack:
            node, n = stack.pop()
            if "counts" in node:
                tree.counts[n] = (int(node["counts"][0]), int(node["counts"][1]))
                continue
            tree.feature[n] = int(node["feature"])
            tree.threshold[n] = float(node["threshold"])
            tree.left[n] = tree.add()
            tree.right[n] = tree.add()
            stack.append((node["right"], tree.right[n]))
            stack.append((node["left"], tree.left[n]))
        return tree


def _best_split(x: np.ndarray, y: np.ndarray) -> Optional[Tuple[float, float]]:
    """(weighted Gini, threshold) of the best cut on one feature, or None."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = xs.size
    cut = np.flatnonzero(xs[1:] > xs[:-1])
    if cut.size == 0:
        return None
    pos_left = np.cumsum(ys)[cut].astype(float)
    n_left = (cut + 1).astype(float)
    n_right = n - n_left
    pos_right = ys.sum() - pos_left
    neg_left = n_left - pos_left
    neg_right = n_right - pos_right
    # n * gini = n - (pos^2 + neg^2) / n
    impurity = (n_left - (pos_left ** 2 + neg_left ** 2) / n_left) + (n_right - (pos_right ** 2 + neg_right ** 2) / n_right)
    best = int(np.argmin(impurity))
    i = cut[best]
    lo, hi = xs[i], xs[i + 1]
    t = lo + (hi - lo) / 2.0
    if not (lo <= t < hi):
        t = lo
    return float(impurity[best]), float(t)


class _Grower:
    def __init__(self, X: np.ndarray, y: np.ndarray, params: ForestParams, rng: np.random.Generator):
        self.X = X
        self.y = y
        self.params = params
        self.rng = rng
        d = X.shape[1]
        self.batch = max(1, int(math.sqrt(d)))
        self.tree = Tree()

    def grow(self, idx: np.ndarray) -> Tree:
        stack = [(idx, self.tree.add(), 0)]
        while stack:
            rows, n, depth = stack.pop()
            y = self.y[rows]
            pos = int(y.sum())
            self.tree.counts[n] = (rows.size - pos, pos)
            if (
                pos == 0
                or pos == rows.size
                or rows.size < self.params.min_samples_split
                or (self.params.max_depth is not None and depth >= self.params.max_depth)
            ):
                continue
            split = self._split(rows, y)
            if split is None:
                continue
            f, t = split
            go_left = self.X[rows, f] <= t
            self.tree.feature[n] = f
            self.tree.threshold[n] = t
            self.tree.left[n] = self.tree.add()
            self.tree.right[n] = self.tree.add()
            stack.append((rows[~go_left], self.tree.right[n], depth + 1))
            stack.append((rows[go_left], self.tree.left[n], depth + 1))
        return self.tree

    def _split(self, rows: np.ndarray, y: np.ndarray) -> Optional[Tuple[int, float]]:
        order = self.rng.permutation(self.X.shape[1])
        for start in range(0, order.size, self.batch):
            best = None
            for f in order[start:start + self.batch]:
                found = _best_split(self.X[rows, f], y)
                if found is not None and (best is None or found[0] < best[0]):
                    best = (found[0], int(f), found[1])
            if best is not None:
                return best[1], best[2]
        return None


class ForestClassifier(Classifier):
    kind = "forest"

    def __init__(self, params: ForestParams):
        super().__init__(params)
        self.trees: List[Tree] = []

    def fit(self, X: np.ndarray, y: np.ndarray, seed: int) -> None:
        n = X.shape[0]
        children = np.random.SeedSequence(seed).spawn(self.params.n_trees)
        self.trees = []
        for i, child in enumerate(children):
            rng = np.random.default_rng(child)
            idx = rng.integers(0, n, size=n) if self.params.bootstrap else np.arange(n)
            tree = _Grower(X, y, self.params, rng).grow(idx)
            logger.debug("tree %d: %d nodes", i, len(tree.feature))
            self.trees.append(tree)

    def _tree_scores(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([tree.score(X) for tree in self.trees])

    def score(self, X: np.ndarray) -> np.ndarray:
        return self._tree_scores(X).mean(axis=0)

    def votes(self, X: np.ndarray) -> np.ndarray:
        """Fraction of trees whose leaf is mostly hotspot."""
        return (self._tree_scores(X) > 0.5).mean(axis=0)

    def decide(self, X: np.ndarray, thr: float = 0.5) -> Tuple[np.ndarray, np.ndarray]:
        per_tree = self._tree_scores(X)
        labels = (per_tree > 0.5).mean(axis=0) > thr
        return labels.astype(int), per_tree.mean(axis=0)

    def get_parameters(self) -> Dict[str, Any]:
        return {"trees": [tree.to_nested() for tree in self.trees]}

    def set_parameters(self, parameters: Dict[str, Any]) -> None:
        self.trees = [Tree.from_nested(t) for t in parameters["trees"]]
