"""Combinatorially different rectangles of a point set and their maximal pairs.

For a point set with distinct axis values ``V_h`` the family holds every
rectangle whose bounds on axis ``h`` are a pair ``lo <= hi`` from ``V_h``.
Rectangles are handled as index arrays into the sorted value lists: row ``r``
of ``lo_idx`` / ``hi_idx`` gives, per axis, the positions of the bounds.
"""

from __future__ import annotations

from itertools import product
from typing import Iterable, Sequence

import numpy as np

from ..geom import Rect


def axis_values(pts: np.ndarray, extra_lo=None, extra_hi=None) -> list[np.ndarray]:
    """Sorted distinct coordinates per axis, optionally with box endpoints added."""
    pts = np.asarray(pts, dtype=float)
    out = []
    for h in range(pts.shape[1]):
        v = pts[:, h]
        if extra_lo is not None:
            v = np.concatenate([v, [extra_lo[h], extra_hi[h]]])
        out.append(np.unique(v))
    return out


def _axis_intervals(m: int) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = np.triu_indices(m)
    return lo, hi


def comb_rect_indices(sizes: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """All per-axis index pairs ``lo <= hi``, combined over the axes."""
    per_axis = [_axis_intervals(m) for m in sizes]
    counts = [len(lo) for lo, _ in per_axis]
    grids = np.meshgrid(*[np.arange(c) for c in counts], indexing="ij")
    sel = [g.ravel() for g in grids]
    lo = np.stack([per_axis[h][0][sel[h]] for h in range(len(sizes))], axis=1)
    hi = np.stack([per_axis[h][1][sel[h]] for h in range(len(sizes))], axis=1)
    return lo, hi


def family_size(sizes: Sequence[int]) -> int:
    out = 1
    for m in sizes:
        out *= m * (m + 1) // 2
    return out


def rect_counts(pts: np.ndarray, values: list[np.ndarray], lo_idx: np.ndarray, hi_idx: np.ndarray) -> np.ndarray:
    """``|rho ∩ pts|`` for every indexed rectangle, by d-dimensional prefix sums."""
    pts = np.asarray(pts, dtype=float)
    d = len(values)
    shape = tuple(len(v) + 1 for v in values)
    grid = np.zeros(shape, dtype=np.int64)
    if len(pts):
        pos = tuple(np.searchsorted(values[h], pts[:, h]) + 1 for h in range(d))
        for h in range(d):
            if np.any(values[h][np.minimum(pos[h] - 1, len(values[h]) - 1)] != pts[:, h]):
                raise ValueError("every point coordinate must be one of the axis values")
        np.add.at(grid, pos, 1)
    for h in range(d):
        grid = np.cumsum(grid, axis=h)
    total = np.zeros(len(lo_idx), dtype=np.int64)
    for corner in product((0, 1), repeat=d):
        idx = tuple(hi_idx[:, h] + 1 if corner[h] else lo_idx[:, h] for h in range(d))
        sign = 1 if (d - sum(corner)) % 2 == 0 else -1
        total += sign * grid[idx]
    return total


def enumerate_comb_rectangles(pts) -> set[Rect]:
    pts = np.asarray(pts, dtype=float)
    values = axis_values(pts)
    lo, hi = comb_rect_indices([len(v) for v in values])
    return {_rect(values, lo[r], hi[r]) for r in range(len(lo))}


def _rect(values, lo_row, hi_row) -> Rect:
    return Rect(
        tuple(float(values[h][lo_row[h]]) for h in range(len(values))),
        tuple(float(values[h][hi_row[h]]) for h in range(len(values))),
    )


def enumerate_maximal_pairs(family: Iterable[Rect]) -> set[tuple[Rect, Rect]]:
    """Pairs ``(rho, rho_hat)`` with ``rho ⊆ rho_hat`` and no family member
    ``rho'`` satisfying ``rho ⊊ rho' ⊂⊂ rho_hat`` (⊂⊂: boundaries disjoint).

    Works for any family; quadratic memory in the family size.
    """
    rects = sorted(set(family), key=lambda r: (r.lo, r.hi))
    if not rects:
        return set()
    lo = np.array([r.lo for r in rects])
    hi = np.array([r.hi for r in rects])
    # contains[i, j]: rects[j] ⊆ rects[i];  strict[i, j]: rects[j] ⊂⊂ rects[i]
    contains = np.all((lo[:, None] <= lo[None]) & (hi[None] <= hi[:, None]), axis=2)
    strict = np.all((lo[:, None] < lo[None]) & (hi[None] < hi[:, None]), axis=2)
    proper = contains & ~np.eye(len(rects), dtype=bool)
    # blocked[b, a]: some c with rects[a] ⊊ rects[c] ⊂⊂ rects[b]
    blocked = (strict.astype(np.int64) @ proper.astype(np.int64)) > 0
    ok = contains & ~blocked
    return {(rects[a], rects[b]) for b, a in zip(*np.nonzero(ok))}


def maximal_pair_indices(sizes: Sequence[int], reachable_only: bool = True):
    """Maximal pairs of the full product family, as index arrays.

    Returns ``(lo, hat_lo, hi, hat_hi)``.  A pair can only answer a query
    when ``rho ⊂⊂ rho_hat``; among those, maximality forces ``rho_hat`` to
    extend every bound of ``rho`` to the adjacent axis value.  With
    ``reachable_only=False`` the pairs where ``rho`` touches the boundary of
    ``rho_hat`` (all maximal, none ever reported) are included too.
    """
    d = len(sizes)
    if reachable_only:
        lo, hi = comb_rect_indices(sizes)
        keep = np.all((lo >= 1) & (hi <= np.asarray(sizes) - 2), axis=1)
        lo, hi = lo[keep], hi[keep]
        return lo, lo - 1, hi, hi + 1
    quads = []
    for m in sizes:
        q = np.array([(c, a, b, e) for c in range(m) for a in range(c, m) for b in range(a, m) for e in range(b, m)],
                     dtype=np.int64).reshape(-1, 4)
        quads.append(q)
    grids = np.meshgrid(*[np.arange(len(q)) for q in quads], indexing="ij")
    sel = [g.ravel() for g in grids]
    parts = np.stack([quads[h][sel[h]] for h in range(d)], axis=1)  # (K, d, 4)
    c, a, b, e = parts[..., 0], parts[..., 1], parts[..., 2], parts[..., 3]
    strict = np.all((c < a) & (b < e), axis=1)
    room = np.any((a - c >= 2) | (e - b >= 2), axis=1)
    keep = ~(strict & room)
    return a[keep], c[keep], b[keep], e[keep]


def gap_indices(sizes: Sequence[int]) -> list[tuple[int, int, int]]:
    """``(axis, k, k + 1)`` for every pair of adjacent values on every axis."""
    return [(h, k, k + 1) for h, m in enumerate(sizes) for k in range(m - 1)]
