"""Closed rectangles, orthants and the lifting maps used by the indexes.

A rectangle in R^d is stored as its lower corner ``lo`` and upper corner
``hi``; both corners are included.  Degenerate rectangles (``lo == hi`` on
some axis) are allowed.  Lifting sends a rectangle to the point
``(lo, hi)`` in R^(2d) and a nested pair ``(rho, rho_hat)`` to
``(rho.lo, rho_hat.lo, rho.hi, rho_hat.hi)`` in R^(4d).  Containment
questions about rectangles then become orthant-membership questions about
points, which is what the range trees answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

Point = tuple[float, ...]

OPS = (">=", ">", "<=", "<")


class DimensionError(ValueError):
    """Raised when objects of different dimensions are combined."""


class GeometryError(ValueError):
    """Raised for malformed rectangles or boxes."""


def as_point(p: Iterable[float]) -> Point:
    out = tuple(float(x) for x in p)
    if not out:
        raise DimensionError("points need at least one coordinate")
    if not all(math.isfinite(x) for x in out):
        raise GeometryError(f"non-finite coordinate in {out}")
    return out


@dataclass(frozen=True)
class Rect:
    """Closed axis-parallel rectangle ``[lo_1, hi_1] x ... x [lo_d, hi_d]``."""

    lo: Point
    hi: Point

    def __post_init__(self) -> None:
        lo = as_point(self.lo)
        hi = as_point(self.hi)
        if len(lo) != len(hi):
            raise DimensionError(f"corner dimensions differ: {len(lo)} vs {len(hi)}")
        if any(a > b for a, b in zip(lo, hi)):
            raise GeometryError(f"lower corner {lo} exceeds upper corner {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def interval(cls, lo: float, hi: float) -> Rect:
        return cls((lo,), (hi,))

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains_point(self, p: Sequence[float]) -> bool:
        if len(p) != self.dim:
            raise DimensionError("point and rectangle dimensions differ")
        return all(a <= x <= b for a, x, b in zip(self.lo, p, self.hi))

    def contains_rect(self, other: Rect) -> bool:
        """``other`` is a (not necessarily proper) subset of ``self``."""
        _same_dim(self, other)
        return all(a <= c and d <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def strictly_contains_rect(self, other: Rect) -> bool:
        """``other`` lies inside ``self`` and the two boundaries do not meet."""
        _same_dim(self, other)
        return all(a < c and d < b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def mask(self, pts: np.ndarray) -> np.ndarray:
        """Boolean membership mask for the rows of an ``(n, d)`` array."""
        pts = np.asarray(pts, dtype=float).reshape(-1, self.dim)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((pts >= lo) & (pts <= hi), axis=1)


def _same_dim(a: Rect, b: Rect) -> None:
    if a.dim != b.dim:
        raise DimensionError(f"rectangle dimensions differ: {a.dim} vs {b.dim}")


@dataclass(frozen=True)
class BoundingBox:
    """A box that must strictly contain every coordinate it is used with."""

    rect: Rect

    @property
    def dim(self) -> int:
        return self.rect.dim

    @property
    def lo(self) -> Point:
        return self.rect.lo

    @property
    def hi(self) -> Point:
        return self.rect.hi

    @classmethod
    def from_bounds(cls, lo: Sequence[float], hi: Sequence[float]) -> BoundingBox:
        box = cls(Rect(tuple(lo), tuple(hi)))
        if any(a >= b for a, b in zip(box.lo, box.hi)):
            raise GeometryError("bounding box must have positive extent on every axis")
        return box

    @classmethod
    def around(cls, pts: np.ndarray, margin: float = 1.0) -> BoundingBox:
        pts = np.asarray(pts, dtype=float)
        if pts.ndim != 2 or len(pts) == 0:
            raise GeometryError("need a non-empty (n, d) array")
        pad = margin * np.maximum(1.0, pts.max(axis=0) - pts.min(axis=0))
        return cls.from_bounds(tuple(pts.min(axis=0) - pad), tuple(pts.max(axis=0) + pad))

    def strictly_contains_points(self, pts: np.ndarray) -> bool:
        pts = np.asarray(pts, dtype=float).reshape(-1, self.dim)
        return bool(np.all((pts > np.asarray(self.lo)) & (pts < np.asarray(self.hi))))

    def strictly_contains_rect(self, r: Rect) -> bool:
        return self.rect.strictly_contains_rect(r)


def project_to_facets(pts: np.ndarray, box: BoundingBox) -> np.ndarray:
    """Project every point onto each of the ``2d`` facets of ``box``.

    Returns the distinct projected points as an ``(m, d)`` array sorted
    lexicographically.
    """
    pts = np.asarray(pts, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != box.dim:
        raise DimensionError("points and box dimensions differ")
    if not box.strictly_contains_points(pts):
        raise GeometryError("box must strictly contain every point")
    out = []
    for h in range(box.dim):
        for v in (box.lo[h], box.hi[h]):
            q = pts.copy()
            q[:, h] = v
            out.append(q)
    if not out or len(pts) == 0:
        return np.empty((0, box.dim))
    return np.unique(np.concatenate(out), axis=0)


@dataclass(frozen=True)
class Bound:
    op: str
    value: float

    def __post_init__(self) -> None:
        if self.op not in OPS:
            raise ValueError(f"unknown comparison {self.op!r}")

    def holds(self, x: float) -> bool:
        if self.op == ">=":
            return x >= self.value
        if self.op == ">":
            return x > self.value
        if self.op == "<=":
            return x <= self.value
        return x < self.value


@dataclass(frozen=True)
class Orthant:
    """Product of one-sided constraints, one (or none) per coordinate."""

    bounds: tuple[Bound | None, ...]

    @property
    def dim(self) -> int:
        return len(self.bounds)

    def contains(self, p: Sequence[float]) -> bool:
        if len(p) != self.dim:
            raise DimensionError("point and orthant dimensions differ")
        return all(b is None or b.holds(x) for b, x in zip(self.bounds, p))

    def __add__(self, other: Orthant) -> Orthant:
        return Orthant(self.bounds + other.bounds)


def threshold_orthant(r: Rect) -> Orthant:
    """Lifted rectangles ``(lo, hi)`` with ``lo >= r.lo`` and ``hi <= r.hi``.

    A lifted rectangle lies in this orthant exactly when the rectangle is a
    subset of ``r``.
    """
    return Orthant(tuple(Bound(">=", x) for x in r.lo) + tuple(Bound("<=", x) for x in r.hi))


def range_orthant(r: Rect, box: BoundingBox | None = None) -> Orthant:
    """Lifted pairs with ``rho`` inside ``r`` and ``r`` strictly inside ``rho_hat``."""
    if box is not None:
        if box.dim != r.dim:
            raise DimensionError("query and box dimensions differ")
        if not box.strictly_contains_rect(r):
            raise GeometryError("query rectangle must lie strictly inside the bounding box")
    return Orthant(
        tuple(Bound(">=", x) for x in r.lo)
        + tuple(Bound("<", x) for x in r.lo)
        + tuple(Bound("<=", x) for x in r.hi)
        + tuple(Bound(">", x) for x in r.hi)
    )


def lift_rect(r: Rect) -> Point:
    return r.lo + r.hi


def unlift_rect(q: Sequence[float]) -> Rect:
    if len(q) % 2:
        raise DimensionError("lifted rectangles have even dimension")
    d = len(q) // 2
    return Rect(tuple(q[:d]), tuple(q[d:]))


def lift_pair(rho: Rect, rho_hat: Rect) -> Point:
    if not rho_hat.contains_rect(rho):
        raise GeometryError("first rectangle must be contained in the second")
    return rho.lo + rho_hat.lo + rho.hi + rho_hat.hi


def unlift_pair(q: Sequence[float]) -> tuple[Rect, Rect]:
    if len(q) % 4:
        raise DimensionError("lifted pairs have dimension divisible by 4")
    d = len(q) // 4
    q = tuple(q)
    return Rect(q[:d], q[2 * d : 3 * d]), Rect(q[d : 2 * d], q[3 * d :])
