"""Non-dominated sorting and crowding distance (minimisation, k objectives)."""
from __future__ import annotations

from typing import Sequence

import numpy as np


def _as_points(points) -> np.ndarray:
    P = np.asarray(points, dtype=np.float64)
    if P.ndim == 1:
        P = P[:, None]
    if P.size == 0 or len(P) == 0:
        raise ValueError("cannot sort an empty set of points")
    return P


def dominates(a, b) -> bool:
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def fast_nondominated_sort(points) -> list[list[int]]:
    """Fronts of indices; front 0 is the non-dominated set.

    Pairwise dominance is computed with one broadcast, then fronts are peeled
    by domination counts. Indices within a front are ascending.
    """
    P = _as_points(points)
    le = np.all(P[:, None, :] <= P[None, :, :], axis=2)
    lt = np.any(P[:, None, :] < P[None, :, :], axis=2)
    dom = le & lt                         # dom[i, j]: i dominates j
    count = dom.sum(axis=0)               # how many dominate j
    fronts = []
    current = np.flatnonzero(count == 0)
    while len(current):
        fronts.append([int(i) for i in current])
        count = count - dom[current].sum(axis=0)
        count[current] = -1
        current = np.flatnonzero(count == 0)
    return fronts


def brute_force_fronts(points) -> list[list[int]]:
    """Reference peeling: repeatedly keep the points nobody remaining dominates."""
    P = _as_points(points).tolist()
    remaining = list(range(len(P)))
    fronts = []
    while remaining:
        front = [i for i in remaining
                 if not any(dominates(P[j], P[i]) for j in remaining if j != i)]
        fronts.append(sorted(front))
        remaining = [i for i in remaining if i not in front]
    return fronts


def crowding_distance(points) -> np.ndarray:
    """Per-point crowding distance within one front (boundary points are infinite)."""
    P = _as_points(points)
    n, k = P.shape
    d = np.zeros(n)
    if n <= 2:
        d[:] = np.inf
        return d
    for m in range(k):
        order = np.argsort(P[:, m], kind="stable")
        v = P[order, m]
        d[order[0]] = d[order[-1]] = np.inf
        span = v[-1] - v[0]
        if span <= 0:
            continue
        d[order[1:-1]] += (v[2:] - v[:-2]) / span
    return d


def rank_and_crowding(points) -> tuple[np.ndarray, np.ndarray]:
    """Front rank and in-front crowding distance for every point."""
    P = _as_points(points)
    rank = np.empty(len(P), dtype=np.int64)
    crowd = np.empty(len(P))
    for r, front in enumerate(fast_nondominated_sort(P)):
        rank[front] = r
        crowd[front] = crowding_distance(P[front])
    return rank, crowd


def sort_by_rank_crowding(points) -> np.ndarray:
    """Indices best-first: lower rank, then larger crowding, then index."""
    rank, crowd = rank_and_crowding(points)
    return np.lexsort((np.arange(len(rank)), -crowd, rank))
