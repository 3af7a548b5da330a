"""Exact one-dimensional percentile reporting for a fixed interval theta = [a, b].

Every point ``p`` of a sorted dataset becomes a 4-tuple ``(q, r, p, s)``:
``s`` is its successor, ``r`` the ``ceil(a n)``-th point counting left from
``p`` (``p`` included) and ``q`` the ``(floor(b n) + 1)``-th.  For a query
``[lo, hi]`` the tuple of the largest point in the interval, and no other,
satisfies ``p <= hi < s``; the count of points in ``[lo, p]`` is at least
``ceil(a n)`` iff ``r >= lo`` and at most ``floor(b n)`` iff ``q < lo``.
A virtual tuple at ``p = -inf`` covers datasets with no point left of ``hi``.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Mapping

import numpy as np

from ..expr import check_theta
from ..geom import Rect
from ..rangetree import PointBlock, QueryRegion, QueryStats, RangeTree

INF = math.inf


def tuples_for(x: np.ndarray, a: Fraction, b: Fraction) -> np.ndarray:
    """``(q, r, p, s)`` rows for the sorted values ``x`` (plus the virtual row)."""
    x = np.sort(np.asarray(x, dtype=float).ravel())
    n = len(x)
    A = math.ceil(a * n)
    B = math.floor(b * n)
    ext = np.r_[-INF, x]  # ext[j + 1] is x[j]; ext[0] is the virtual point
    rows = []
    for j in range(-1, n):
        p = ext[j + 1]
        s = x[j + 1] if j + 1 < n else INF
        if A == 0:
            r = INF
        else:
            r = x[j - A + 1] if j - A + 1 >= 0 else -INF
        q = x[j - B] if j - B >= 0 else -INF
        rows.append((q, r, p, s))
    return np.array(rows, dtype=float)


class Exact1DIndex:
    def __init__(self, datasets: Mapping[int, np.ndarray], a: float, b: float):
        self.a, self.b = check_theta(a, b)
        blocks = []
        self.sizes = {}
        for tag, pts in datasets.items():
            pts = np.asarray(pts, dtype=float)
            if pts.ndim == 2 and pts.shape[1] != 1:
                raise ValueError("exact reporting is one-dimensional")
            if pts.size == 0:
                raise ValueError(f"dataset {tag} is empty")
            rows = tuples_for(pts, self.a, self.b)
            self.sizes[int(tag)] = pts.size
            blocks.append(PointBlock(rows, np.empty((len(rows), 0)), np.ones(len(rows)), np.full(len(rows), tag)))
        if not blocks:
            raise ValueError("no datasets given")
        self.tree = RangeTree(4, 0)
        self.tree.insert_points(PointBlock.concat(blocks))

    def region(self, lo: float, hi: float) -> QueryRegion:
        return QueryRegion(
            [-INF, lo, -INF, hi],
            [lo, INF, hi, INF],
            lo_open=[False, False, False, True],
            hi_open=[True, False, False, False],
        )

    def query(self, R: Rect | tuple[float, float], stats: QueryStats | None = None) -> list[int]:
        if isinstance(R, Rect):
            if R.dim != 1:
                raise ValueError("exact reporting is one-dimensional")
            lo, hi = R.lo[0], R.hi[0]
        else:
            lo, hi = map(float, R)
        if lo > hi:
            raise ValueError("empty query interval")
        return [int(tree.tags[i]) for tree, i in self.tree.iter_hits(self.region(lo, hi), stats)]


def build_exact_1d(datasets: Mapping[int, np.ndarray], a: float, b: float) -> Exact1DIndex:
    return Exact1DIndex(datasets, a, b)


def query_exact_1d(idx: Exact1DIndex, R: Rect | tuple[float, float]) -> list[int]:
    return idx.query(R)
