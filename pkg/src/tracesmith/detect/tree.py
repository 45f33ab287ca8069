"""CART classification trees (Gini) stored as flat numpy arrays."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

LEAF = -1


@dataclass
class Tree:
    feature: np.ndarray     # int, LEAF for leaves
    threshold: np.ndarray   # float; x <= threshold goes left
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray      # (nodes, classes) training class counts

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def leaf_class(self) -> np.ndarray:
        return np.argmax(self.counts, axis=1)   # ties resolve to the lower class index

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of X."""
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] != LEAF
        rows = np.arange(len(X))
        while active.any():
            r = rows[active]
            nd = node[r]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active[r] = self.feature[node[r]] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_class[self.apply(X)]

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            n, d = stack.pop()
            best = max(best, d)
            if self.feature[n] != LEAF:
                stack += [(int(self.left[n]), d + 1), (int(self.right[n]), d + 1)]
        return best

    # nested form for JSON
    def to_nested(self, node: int = 0) -> dict:
        if self.feature[node] == LEAF:
            return {"counts": self.counts[node].astype(int).tolist()}
        return {"feature": int(self.feature[node]), "threshold": float(self.threshold[node]),
                "counts": self.counts[node].astype(int).tolist(),
                "left": self.to_nested(int(self.left[node])),
                "right": self.to_nested(int(self.right[node]))}

    @classmethod
    def from_nested(cls, root: dict) -> "Tree":
        feat, thr, left, right, counts = [], [], [], [], []

        def add(nd: dict) -> int:
            i = len(feat)
            feat.append(nd.get("feature", LEAF))
            thr.append(nd.get("threshold", 0.0))
            left.append(LEAF)
            right.append(LEAF)
            counts.append(nd["counts"])
            if "left" in nd:
                left[i] = add(nd["left"])
                right[i] = add(nd["right"])
            return i

        add(root)
        return cls(np.array(feat, np.int64), np.array(thr, float), np.array(left, np.int64),
                   np.array(right, np.int64), np.array(counts, float))


def _gini_rows(counts: np.ndarray) -> np.ndarray:
    n = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts / n[:, None]
    return np.where(n > 0, 1.0 - np.sum(p * p, axis=1), 0.0)


def best_split(X: np.ndarray, y: np.ndarray, n_classes: int, features) -> Optional[tuple]:
    """Lowest weighted-Gini split over the given features.

    Candidate thresholds are midpoints between consecutive distinct values.
    Returns (feature, threshold, impurity) or None when nothing splits.
    """
    n = len(y)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    best = None
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cuts = np.flatnonzero(xs[1:] > xs[:-1])     # split after position cut
        if len(cuts) == 0:
            continue
        cum = np.cumsum(onehot[order], axis=0)
        left = cum[cuts]
        right = cum[-1] - left
        nl = (cuts + 1).astype(float)
        imp = (nl * _gini_rows(left) + (n - nl) * _gini_rows(right)) / n
        j = int(np.argmin(imp))
        if best is None or imp[j] < best[2] - 1e-15:
            best = (int(f), float((xs[cuts[j]] + xs[cuts[j] + 1]) / 2.0), float(imp[j]))
    return best


def fit_tree(X: np.ndarray, y: np.ndarray, n_classes: int, rng: np.random.Generator,
             max_depth: Optional[int] = None, min_samples_split: int = 2,
             features_per_split: Optional[int] = None) -> Tree:
    """Grow a tree depth-first; `y` holds class indices."""
    n_feat = X.shape[1]
    k = n_feat if features_per_split is None else max(1, min(features_per_split, n_feat))
    feat, thr, left, right, counts = [], [], [], [], []

    def new_node(idx) -> int:
        feat.append(LEAF)
        thr.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        counts.append(np.bincount(y[idx], minlength=n_classes))
        return len(feat) - 1

    stack = [(np.arange(len(y)), 0, new_node(np.arange(len(y))))]
    while stack:
        idx, depth, node = stack.pop()
        c = counts[node]
        if (np.count_nonzero(c) <= 1 or len(idx) < min_samples_split
                or (max_depth is not None and depth >= max_depth)):
            continue
        cand = rng.permutation(n_feat)[:k] if k < n_feat else np.arange(n_feat)
        split = best_split(X[idx], y[idx], n_classes, cand)
        if split is None:
            continue
        f, t, _ = split
        mask = X[idx, f] <= t
        li, ri = idx[mask], idx[~mask]
        feat[node], thr[node] = f, t
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((ri, depth + 1, right[node]))
        stack.append((li, depth + 1, left[node]))
    return Tree(np.array(feat, np.int64), np.array(thr, float), np.array(left, np.int64),
                np.array(right, np.int64), np.array(counts, float).reshape(-1, n_classes))
