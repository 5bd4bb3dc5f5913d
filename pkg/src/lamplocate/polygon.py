"""Greedy k-gon fitting to a point set by iterative vertex decimation.

Starting from the convex hull, one vertex is removed per round until k remain.
Each index carries two candidate moves: drop the next vertex outright (inner,
costs the cut-off triangle's area) or extend the two flanking edges to their
intersection (outer, costs the added triangle's area). The cheaper move wins
per index, and the globally cheapest index is applied each round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TooFewPoints
from .geom2d import convex_hull, line_intersection, triangle_area


@dataclass
class FittedPolygon:
    vertices: np.ndarray  # (k, 2)
    cost: float  # accumulated |area delta|, px^2


def _scores(c: list, i: int):
    """(score, generated point) for index i: min of the inner and outer move."""
    n = len(c)
    p_prev = c[(i - 1) % n]
    p_i = c[i]
    p_next = c[(i + 1) % n]
    p_next2 = c[(i + 2) % n]
    s_inner = triangle_area(p_i, p_next, p_next2)
    inter = line_intersection(p_prev, p_i, p_next, p_next2)
    if inter is None:
        return s_inner, None  # parallel flanking edges: outer move unbounded
    s_outer = triangle_area(p_i, inter, p_next)
    if s_outer < s_inner:
        return s_outer, inter
    return s_inner, None


def fit_polygon(points: np.ndarray, k: int) -> FittedPolygon:
    """Fit a k-gon to ``points``; the hull is decimated greedily by area delta.

    Raises TooFewPoints when the convex hull has fewer than k vertices. A hull
    with exactly k vertices is returned as-is with zero cost.
    """
    if k < 3:
        raise ValueError("k must be at least 3")
    hull = convex_hull(points)
    if len(hull) < k:
        raise TooFewPoints(f"hull has {len(hull)} vertices, need at least {k}")
    c = [np.array(p, dtype=float) for p in hull]
    n = len(c)
    if n == k:
        return FittedPolygon(np.array(c), 0.0)
    scores = [None] * n
    gens = [None] * n
    for i in range(n):
        scores[i], gens[i] = _scores(c, i)
    total = 0.0
    while n > k:
        m = int(np.argmin(scores))
        total += scores[m]
        if gens[m] is not None:
            c[m] = gens[m]
        del c[(m + 1) % n]
        del scores[(m + 1) % n]
        del gens[(m + 1) % n]
        n -= 1
        if (m + 1) % (n + 1) < m:
            m -= 1  # removal before m shifted the list
        for j in (m - 1, m, m + 1):
            jj = j % n
            scores[jj], gens[jj] = _scores(c, jj)
    return FittedPolygon(np.array(c), float(total))


def fit_cost_lower_bound(points: np.ndarray, k: int) -> float:
    """Exhaustive minimum over all decimation orders (test oracle; small n only)."""
    hull = convex_hull(points)
    if len(hull) < k:
        raise TooFewPoints("hull too small")
    if len(hull) - k > 8:
        raise ValueError("exhaustive search is exponential; use n - k <= 8")

    def recurse(c: tuple, acc: float, best: float) -> float:
        n = len(c)
        if n == k:
            return min(best, acc)
        for i in range(n):
            clist = [np.array(p) for p in c]
            score, gen = _scores(clist, i)
            if not math.isfinite(score):
                continue
            if gen is not None:
                clist[i] = gen
            del clist[(i + 1) % n]
            cand = acc + score
            if cand < best:
                best = recurse(tuple(tuple(p) for p in clist), cand, best)
        return best

    return recurse(tuple(tuple(p) for p in hull), 0.0, math.inf)
