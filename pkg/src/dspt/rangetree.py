"""Weighted orthogonal range reporting with tag-level deduplication.

Every stored point has float coordinates, ``m`` exact rational weights that
share one denominator, and an integer tag.  A query is a box over the
coordinates (each side closed, open or absent) together with one closed
interval per weight axis.  Weight comparisons are exact: the float value of
a weight is only used to prune whole subtrees when the answer is certain.

The static structure is a balanced kd-tree laid out as an implicit heap, in
which each node keeps the bounding box of its points (weights included as
extra dimensions).  Subtrees whose box misses the query are skipped, subtrees
whose box lies inside are reported wholesale.  ``RangeTree`` keeps a list of
such trees and supports batch insertion with the logarithmic method and tag
deletion with per-bucket tombstones.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .expr import rationalize
from .geom import DimensionError, Orthant

LEAF_SIZE = 32
# Floats of num/den are within 1e-15 of the rational for the weights we store
# (all in [0, 1]); anything closer than this to a weight bound is settled exactly.
WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class WeightedPoint:
    coords: tuple[float, ...]
    num: tuple[int, ...]
    den: int
    tag: int

    def __post_init__(self) -> None:
        if self.den < 1:
            raise ValueError("denominator must be positive")
        if any(n < 0 or n > self.den for n in self.num):
            raise ValueError("weights must lie in [0, 1]")

    @property
    def weight(self) -> Fraction:
        return Fraction(self.num[0], self.den)

    @property
    def weights(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(n, self.den) for n in self.num)


@dataclass
class PointBlock:
    """Column-oriented batch of weighted points."""

    coords: np.ndarray
    num: np.ndarray
    den: np.ndarray
    tags: np.ndarray

    def __post_init__(self) -> None:
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim == 1:
            self.coords = self.coords[:, None]
        n = self.coords.shape[0]
        self.num = np.asarray(self.num, dtype=np.int64)
        if self.num.ndim == 1:
            self.num = self.num[:, None]
        if self.num.shape[0] != n:
            raise ValueError("weight rows do not match coordinate rows")
        self.den = np.asarray(self.den, dtype=np.int64).reshape(n)
        self.tags = np.asarray(self.tags, dtype=np.int64).reshape(n)
        if n and (np.any(self.den < 1) or np.any(self.num < 0) or np.any(self.num > self.den[:, None])):
            raise ValueError("weights must be rationals in [0, 1] with positive denominators")

    @classmethod
    def empty(cls, dim: int, n_weights: int) -> PointBlock:
        return cls(np.empty((0, dim)), np.empty((0, n_weights)), np.empty(0), np.empty(0))

    @classmethod
    def from_points(cls, points: Sequence[WeightedPoint], dim: int | None = None, n_weights: int | None = None) -> PointBlock:
        if not points:
            if dim is None or n_weights is None:
                raise ValueError("dimensions required for an empty block")
            return cls.empty(dim, n_weights)
        return cls(
            np.array([p.coords for p in points], dtype=np.float64),
            np.array([p.num for p in points], dtype=np.int64).reshape(len(points), -1),
            np.array([p.den for p in points]),
            np.array([p.tag for p in points]),
        )

    @staticmethod
    def concat(blocks: Sequence[PointBlock]) -> PointBlock:
        return PointBlock(
            np.concatenate([b.coords for b in blocks]),
            np.concatenate([b.num for b in blocks]),
            np.concatenate([b.den for b in blocks]),
            np.concatenate([b.tags for b in blocks]),
        )

    def __len__(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def n_weights(self) -> int:
        return self.num.shape[1]

    def take(self, idx) -> PointBlock:
        return PointBlock(self.coords[idx], self.num[idx], self.den[idx], self.tags[idx])

    def point(self, i: int) -> WeightedPoint:
        return WeightedPoint(
            tuple(self.coords[i].tolist()),
            tuple(int(v) for v in self.num[i]),
            int(self.den[i]),
            int(self.tags[i]),
        )

    def to_points(self) -> list[WeightedPoint]:
        return [self.point(i) for i in range(len(self))]


class QueryRegion:
    """Coordinate box plus closed weight intervals.

    ``lo``/``hi`` give the coordinate bounds (use +-inf for an absent side);
    ``lo_open``/``hi_open`` flag strict sides.  ``weights`` holds one
    ``(lo, hi)`` pair per weight axis, either end may be ``None``.
    """

    def __init__(self, lo, hi, lo_open=None, hi_open=None, weights: Sequence = ()):
        lo = [float(x) for x in lo]
        hi = [float(x) for x in hi]
        if len(lo) != len(hi):
            raise DimensionError("bound vectors differ in length")
        D = len(lo)
        lo_open = [False] * D if lo_open is None else [bool(b) for b in lo_open]
        hi_open = [False] * D if hi_open is None else [bool(b) for b in hi_open]
        self.dim = D
        self.lo, self.hi, self.lo_open, self.hi_open = lo, hi, lo_open, hi_open
        self.weight_bounds: list[tuple[Fraction | None, Fraction | None]] = []
        for a, b in weights:
            fa = None if a is None else rationalize(a)
            fb = None if b is None else rationalize(b)
            if fa is not None and fb is not None and fa > fb:
                raise ValueError(f"empty weight interval [{fa}, {fb}]")
            self.weight_bounds.append((fa, fb))
        self.n_weights = len(self.weight_bounds)
        # Closed float box used for pruning.  Strict coordinate bounds become
        # closed ones at the neighbouring float, which is exact.
        L, U = [], []
        for x, o in zip(lo, lo_open):
            L.append(math.nextafter(x, math.inf) if o and x != -math.inf else x)
        for x, o in zip(hi, hi_open):
            U.append(math.nextafter(x, -math.inf) if o and x != math.inf else x)
        self._L, self._U = L, U

    @classmethod
    def from_orthant(cls, orthant: Orthant, weights: Sequence = ()) -> QueryRegion:
        D = orthant.dim
        lo, hi = [-math.inf] * D, [math.inf] * D
        lo_open, hi_open = [False] * D, [False] * D
        for k, b in enumerate(orthant.bounds):
            if b is None:
                continue
            if b.op in (">=", ">"):
                lo[k], lo_open[k] = b.value, b.op == ">"
            else:
                hi[k], hi_open[k] = b.value, b.op == "<"
        return cls(lo, hi, lo_open, hi_open, weights)

    def checks(self) -> list[tuple[int, float, float, float, float, int]]:
        """Per constrained dimension: (dim, out_lo, out_hi, in_lo, in_hi, weight_axis or -1)."""
        out = []
        for k in range(self.dim):
            if self._L[k] != -math.inf or self._U[k] != math.inf:
                out.append((k, self._L[k], self._U[k], self._L[k], self._U[k], -1))
        for j, (a, b) in enumerate(self.weight_bounds):
            if a is None and b is None:
                continue
            fa = -math.inf if a is None else float(a)
            fb = math.inf if b is None else float(b)
            out.append((self.dim + j, fa - WEIGHT_TOL, fb + WEIGHT_TOL, fa + WEIGHT_TOL, fb - WEIGHT_TOL, j))
        return out

    def weight_ok(self, num: Sequence[int], den: int) -> bool:
        for (a, b), n in zip(self.weight_bounds, num):
            if a is not None and a.numerator * den > n * a.denominator:
                return False
            if b is not None and b.numerator * den < n * b.denominator:
                return False
        return True

    def contains(self, p: WeightedPoint) -> bool:
        if len(p.coords) != self.dim or len(p.num) != self.n_weights:
            raise DimensionError("point does not match region dimensions")
        for x, L, U in zip(p.coords, self._L, self._U):
            if not L <= x <= U:
                return False
        return self.weight_ok(p.num, p.den)


@dataclass
class QueryStats:
    nodes: int = 0
    points: int = 0


def _spread_feats(block: PointBlock) -> np.ndarray:
    w = block.num / block.den[:, None] if block.n_weights else np.empty((len(block), 0))
    return np.hstack([block.coords, w])


class StaticTree:
    """Immutable kd-tree over a ``PointBlock``; see the module docstring."""

    def __init__(self, block: PointBlock, leaf_size: int = LEAF_SIZE):
        n = len(block)
        self.size = n
        self.dim = block.dim
        self.n_weights = block.n_weights
        feats = _spread_feats(block)
        K = feats.shape[1]
        depth = 0 if n <= leaf_size else math.ceil(math.log2(n / leaf_size))
        order = np.arange(n)
        # The point set of a node is fixed once its parent level is sorted, so
        # the boxes computed to pick split dimensions are the final node boxes.
        cols = [np.ascontiguousarray(feats[:, k]) for k in range(K)]
        if depth:
            finite = [np.clip(np.nan_to_num(c, posinf=1e300, neginf=-1e300), -1e300, 1e300) for c in cols]
            ranks = np.empty((K, n), dtype=np.int64)
            for k in range(K):
                ranks[k, np.argsort(finite[k], kind="stable")] = np.arange(n)
        lo_rows, hi_rows, st, en = [], [], [], []
        starts = np.array([0])
        for level in range(depth + 1):
            seg_len = np.diff(np.append(starts, n))
            if n:
                lo = np.stack([np.minimum.reduceat(c, starts) for c in cols], axis=1)
                hi = np.stack([np.maximum.reduceat(c, starts) for c in cols], axis=1)
                lo_rows.append(lo)
                hi_rows.append(hi)
            st.append(starts)
            en.append(starts + seg_len)
            if level == depth:
                break
            seg_of = np.repeat(np.arange(len(starts)), seg_len)
            flo = np.stack([np.minimum.reduceat(c, starts) for c in finite], axis=1)
            fhi = np.stack([np.maximum.reduceat(c, starts) for c in finite], axis=1)
            dims = np.argmax(fhi - flo, axis=1)
            key = seg_of * n + ranks[dims[seg_of], np.arange(n)]
            perm = np.argsort(key)
            order = order[perm]
            ranks = ranks[:, perm]
            cols = [c[perm] for c in cols]
            finite = [c[perm] for c in finite]
            starts = np.sort(np.concatenate([starts, starts + seg_len // 2]))
        self.depth = depth
        self.coords = block.coords[order]
        self.num = block.num[order]
        self.den = block.den[order]
        self.tags = block.tags[order]
        self.feats = np.stack(cols, axis=1) if n else feats
        if n:
            self._lo = np.concatenate(lo_rows).tolist()
            self._hi = np.concatenate(hi_rows).tolist()
        else:
            self._lo, self._hi = [], []
        self._start = np.concatenate(st).tolist()
        self._end = np.concatenate(en).tolist()
        self.first_leaf = (1 << depth) - 1
        self.tag_counts = Counter(self.tags.tolist())

    def iter_indices(self, region: QueryRegion, stats: QueryStats | None = None) -> Iterator[int]:
        """Positions (in storage order) of the points inside ``region``."""
        if self.size == 0:
            return
        if region.dim != self.dim or region.n_weights != self.n_weights:
            raise DimensionError(
                f"region is ({region.dim}, {region.n_weights}), tree is ({self.dim}, {self.n_weights})"
            )
        checks = region.checks()
        ks = [c[0] for c in checks]
        Lout = np.array([c[1] for c in checks])
        Uout = np.array([c[2] for c in checks])
        Lin = np.array([c[3] for c in checks])
        Uin = np.array([c[4] for c in checks])
        wcols = [i for i, c in enumerate(checks) if c[5] >= 0]
        nodes = 0
        stack = [0]
        lo_all, hi_all, start, end = self._lo, self._hi, self._start, self._end
        first_leaf = self.first_leaf
        try:
            while stack:
                node = stack.pop()
                nodes += 1
                lo, hi = lo_all[node], hi_all[node]
                inside = True
                dead = False
                for k, lout, uout, lin, uin, _ in checks:
                    a, b = lo[k], hi[k]
                    if b < lout or a > uout:
                        dead = True
                        break
                    if inside and (a < lin or b > uin):
                        inside = False
                if dead:
                    continue
                if inside:
                    yield from range(start[node], end[node])
                elif node >= first_leaf:
                    s = start[node]
                    f = self.feats[s : end[node]][:, ks]
                    ok = np.all((f >= Lout) & (f <= Uout), axis=1)
                    if wcols:
                        fw = f[:, wcols]
                        unsure = ok & np.any((fw < Lin[wcols]) | (fw > Uin[wcols]), axis=1)
                        for i in np.flatnonzero(unsure):
                            ok[i] = region.weight_ok(self.num[s + i].tolist(), int(self.den[s + i]))
                    for i in np.flatnonzero(ok).tolist():
                        yield s + i
                else:
                    stack.append(2 * node + 2)
                    stack.append(2 * node + 1)
        finally:
            if stats is not None:
                stats.nodes += nodes

    def point(self, i: int) -> WeightedPoint:
        return WeightedPoint(
            tuple(self.coords[i].tolist()), tuple(self.num[i].tolist()), int(self.den[i]), int(self.tags[i])
        )

    def block(self, mask=None) -> PointBlock:
        if mask is None:
            return PointBlock(self.coords, self.num, self.den, self.tags)
        return PointBlock(self.coords[mask], self.num[mask], self.den[mask], self.tags[mask])


@dataclass
class _Bucket:
    tree: StaticTree
    dead: set = field(default_factory=set)

    def live_count(self) -> int:
        return sum(c for t, c in self.tree.tag_counts.items() if t not in self.dead)

    def live_block(self) -> PointBlock:
        if not self.dead:
            return self.tree.block()
        mask = ~np.isin(self.tree.tags, np.fromiter(self.dead, dtype=np.int64))
        return self.tree.block(mask)


class RangeTree:
    """Dynamic weighted range-reporting structure over tagged points.

    ``dim`` is the number of coordinates and ``n_weights`` the number of
    exact weight axes (0 is allowed).
    """

    def __init__(self, dim: int, n_weights: int = 1, leaf_size: int = LEAF_SIZE):
        if dim < 1 or n_weights < 0:
            raise DimensionError("need dim >= 1 and n_weights >= 0")
        self.dim = dim
        self.n_weights = n_weights
        self.leaf_size = leaf_size
        self._buckets: list[_Bucket] = []
        self._live = 0
        self._tombstoned = 0
        self.stats = QueryStats()

    @classmethod
    def build(cls, points: Sequence[WeightedPoint] | PointBlock, dim: int | None = None,
              n_weights: int | None = None, leaf_size: int = LEAF_SIZE) -> RangeTree:
        block = points if isinstance(points, PointBlock) else PointBlock.from_points(points, dim, n_weights)
        tree = cls(block.dim if dim is None else dim, block.n_weights if n_weights is None else n_weights, leaf_size)
        tree.insert_points(block)
        return tree

    def __len__(self) -> int:
        return self._live

    @property
    def n_buckets(self) -> int:
        return len(self._buckets)

    def live_tags(self) -> set[int]:
        out = set()
        for b in self._buckets:
            out.update(t for t in b.tree.tag_counts if t not in b.dead)
        return out

    def insert_points(self, points: Sequence[WeightedPoint] | PointBlock) -> None:
        block = points if isinstance(points, PointBlock) else PointBlock.from_points(points, self.dim, self.n_weights)
        if len(block) == 0:
            return
        if block.dim != self.dim or block.n_weights != self.n_weights:
            raise DimensionError(
                f"block is ({block.dim}, {block.n_weights}), tree is ({self.dim}, {self.n_weights})"
            )
        parts = [block]
        size = len(block)
        # logarithmic method: absorb every bucket no larger than what we carry
        self._buckets.sort(key=lambda b: b.tree.size, reverse=True)
        while self._buckets and self._buckets[-1].tree.size <= size:
            b = self._buckets.pop()
            live = b.live_block()
            self._tombstoned -= b.tree.size - len(live)
            parts.append(live)
            size += len(live)
        merged = PointBlock.concat(parts) if len(parts) > 1 else block
        self._buckets.append(_Bucket(StaticTree(merged, self.leaf_size)))
        self._live += len(block)

    def delete_tag(self, tag: int) -> int:
        """Tombstone every live point with ``tag``; returns how many were removed."""
        removed = 0
        for b in self._buckets:
            c = b.tree.tag_counts.get(tag, 0)
            if c and tag not in b.dead:
                b.dead.add(tag)
                removed += c
        self._live -= removed
        self._tombstoned += removed
        if self._tombstoned > (self._live + self._tombstoned) / 2:
            self._purge()
        return removed

    def _purge(self) -> None:
        blocks = [b.live_block() for b in self._buckets]
        blocks = [b for b in blocks if len(b)]
        self._buckets = [_Bucket(StaticTree(PointBlock.concat(blocks), self.leaf_size))] if blocks else []
        self._tombstoned = 0

    def iter_hits(self, region: QueryRegion, stats: QueryStats | None = None) -> Iterator[tuple[StaticTree, int]]:
        """Lazily yields ``(tree, position)`` for every live point in ``region``."""
        stats = self.stats if stats is None else stats
        for b in list(self._buckets):
            dead = b.dead
            tags = b.tree.tags
            for i in b.tree.iter_indices(region, stats):
                if dead and int(tags[i]) in dead:
                    continue
                stats.points += 1
                yield b.tree, i

    def iter_distinct_tags(self, region: QueryRegion, stats: QueryStats | None = None) -> Iterator[tuple[int, StaticTree, int]]:
        """Each tag with a point in ``region`` once, with its first hit."""
        seen: set[int] = set()
        for tree, i in self.iter_hits(region, stats):
            t = int(tree.tags[i])
            if t not in seen:
                seen.add(t)
                yield t, tree, i

    def enumerate(self, region: QueryRegion, skip: Callable[[int], bool] | None = None) -> Iterator[WeightedPoint]:
        """Lazy stream of points in ``region`` whose tag is not skipped.

        ``skip`` is consulted when each point is reached, so a consumer may
        change what it skips between pulls.
        """
        for tree, i in self.iter_hits(region):
            if skip is not None and skip(int(tree.tags[i])):
                continue
            yield tree.point(i)

    def report(self, region: QueryRegion) -> list[WeightedPoint]:
        return list(self.enumerate(region))

    def report_first(self, region: QueryRegion) -> WeightedPoint | None:
        return next(self.enumerate(region), None)

    def all_points(self) -> PointBlock:
        blocks = [b.live_block() for b in self._buckets]
        if not blocks:
            return PointBlock.empty(self.dim, self.n_weights)
        return PointBlock.concat(blocks)


def scan(block: PointBlock, region: QueryRegion) -> list[int]:
    """Linear-scan reference: row indices of ``block`` inside ``region``."""
    return [i for i in range(len(block)) if region.contains(block.point(i))]


def block_from_rows(rows: Iterable[tuple[Sequence[float], Sequence[int], int, int]]) -> PointBlock:
    pts = [WeightedPoint(tuple(float(x) for x in c), tuple(int(v) for v in n), int(d), int(t)) for c, n, d, t in rows]
    return PointBlock.from_points(pts)
