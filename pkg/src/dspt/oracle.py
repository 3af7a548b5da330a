"""Brute-force answers and instance generators used to check the indexes.

Nothing here touches the index code: measures are counted directly with
exact fractions and top-k scores come from a full sort.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .expr import Expr, PrefPred, PtilePred, evaluate, rationalize
from .geom import Rect


@dataclass
class Repository:
    datasets: dict[int, np.ndarray]

    def __post_init__(self) -> None:
        self.datasets = {int(k): np.asarray(v, dtype=float) for k, v in self.datasets.items()}
        dims = {v.shape[1] for v in self.datasets.values()}
        if len(dims) > 1:
            raise ValueError("datasets have different dimensions")

    @property
    def dim(self) -> int:
        return next(iter(self.datasets.values())).shape[1]

    def __len__(self) -> int:
        return len(self.datasets)

    def ids(self) -> list[int]:
        return sorted(self.datasets)

    def all_points(self) -> np.ndarray:
        return np.concatenate(list(self.datasets.values()))


def eval_percentile(P, R: Rect) -> Fraction:
    pts = np.asarray(P, dtype=float)
    inside = sum(1 for p in pts if all(a <= x <= b for a, x, b in zip(R.lo, p, R.hi)))
    return Fraction(inside, len(pts))


def eval_topk(P, v: Sequence[float], k: int) -> float:
    scores = sorted((float(np.dot(p, v)) for p in np.asarray(P, dtype=float)), reverse=True)
    if not 1 <= k <= len(scores):
        raise ValueError(f"k={k} outside [1, {len(scores)}]")
    return scores[k - 1]


def holds(P, pred) -> bool:
    if isinstance(pred, PtilePred):
        m = eval_percentile(P, pred.rect)
        return rationalize(pred.a) <= m <= rationalize(pred.b)
    if isinstance(pred, PrefPred):
        if pred.k > len(P):
            return False
        return eval_topk(P, pred.v, pred.k) >= pred.a
    raise TypeError(f"not a predicate: {pred!r}")


def brute_force_query(repo: Repository, expr: Expr) -> set[int]:
    return {i for i, P in repo.datasets.items() if evaluate(expr, lambda p: holds(P, p))}


def gen_random_repository(
    n_datasets: int,
    n_range: tuple[int, int],
    d: int,
    seed: int,
    distribution: str = "uniform",
    unit_ball: bool = False,
    grid: int | None = None,
) -> Repository:
    """Random datasets in ``[0, 1]^d``, or in the unit ball with ``unit_ball``.

    ``grid`` snaps coordinates to ``{0, 1/grid, ..., 1}`` to force ties.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for i in range(1, n_datasets + 1):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        if distribution == "uniform":
            pts = rng.random((n, d))
        elif distribution == "gaussian":
            pts = np.clip(rng.normal(0.5, 0.15, (n, d)), 0.0, 1.0)
        elif distribution == "clustered":
            centers = rng.random((int(rng.integers(1, 4)), d))
            pick = rng.integers(0, len(centers), n)
            pts = np.clip(centers[pick] + rng.normal(0, 0.05, (n, d)), 0.0, 1.0)
        else:
            raise ValueError(f"unknown distribution {distribution!r}")
        if unit_ball:
            pts = 2 * pts - 1
            norms = np.linalg.norm(pts, axis=1)
            pts = np.where((norms > 1)[:, None], pts / np.maximum(norms, 1e-12)[:, None], pts)
        if grid:
            pts = np.round(pts * grid) / grid
        out[i] = pts
    return Repository(out)


@dataclass
class SetIntersectionInstance:
    """Points on two parallel lines encoding a family of sets.

    ``sets[i]`` is the i-th set; dataset ``u`` holds two points for every set
    containing ``u``.  ``rects[(i, j)]`` contains exactly the points coming
    from set i on the upper line and set j on the lower line, so querying it
    with ``theta`` returns the ids in ``sets[i] & sets[j]``.
    """

    sets: list[list[int]]
    repository: Repository
    rects: dict[tuple[int, int], Rect]
    points_per_dataset: int
    theta: tuple[float, float] = field(init=False)

    def __post_init__(self) -> None:
        self.theta = (1.5 / self.points_per_dataset, 1.0)

    def expected(self, i: int, j: int) -> set[int]:
        return set(self.sets[i]) & set(self.sets[j])


def set_intersection_from_sets(sets: Sequence[Iterable[int]]) -> SetIntersectionInstance:
    sets = [sorted(set(int(x) for x in s)) for s in sets]
    if any(not s for s in sets):
        raise ValueError("sets must be non-empty")
    mult: dict[int, int] = {}
    for s in sets:
        for u in s:
            mult[u] = mult.get(u, 0) + 1
    if len(set(mult.values())) != 1:
        raise ValueError("every element must appear in the same number of sets")
    M = sum(len(s) for s in sets)
    pts: dict[int, list[tuple[float, float]]] = {u: [] for u in mult}
    ends = np.cumsum([0] + [len(s) for s in sets])
    for i, s in enumerate(sets):
        for k, u in enumerate(s, start=1):
            idx = k + int(ends[i])
            pts[u].append((-idx, -idx + M))
            pts[u].append((idx, idx - M))
    rects = {}
    for i in range(len(sets)):
        for j in range(len(sets)):
            rects[(i, j)] = Rect(
                (-float(ends[i + 1]), float(ends[j] + 1 - M)),
                (float(ends[j + 1]), float(M - ends[i] - 1)),
            )
    repo = Repository({u: np.array(p, dtype=float) for u, p in pts.items()})
    return SetIntersectionInstance(sets, repo, rects, 2 * next(iter(mult.values())))


def gen_set_intersection_instance(g: int, t: int, seed: int, set_size: int = 4) -> SetIntersectionInstance:
    """Uniform family of ``g`` sets; every dataset ends up with ``t`` points.

    Each element lies in ``t / 2`` sets.  The universe is cut into blocks of
    ``set_size`` by ``t / 2`` independent shuffles, so ``t / 2`` must divide
    ``g``.
    """
    if t < 2 or t % 2:
        raise ValueError("points per dataset must be even and >= 2")
    r = t // 2
    if g % r:
        raise ValueError(f"cannot build a uniform family: {r} does not divide {g}")
    q = g // r
    universe = q * set_size
    rng = np.random.default_rng(seed)
    sets = []
    for _ in range(r):
        perm = rng.permutation(universe) + 1
        sets.extend(perm[b * set_size : (b + 1) * set_size].tolist() for b in range(q))
    order = rng.permutation(g)
    return set_intersection_from_sets([sets[i] for i in order])


@dataclass
class HalfspaceInstance:
    points: np.ndarray
    repository: Repository


def gen_halfspace_pref_instance(n: int, d: int, seed: int) -> HalfspaceInstance:
    """Singleton datasets drawn from the first orthant of the unit ball."""
    rng = np.random.default_rng(seed)
    pts = np.abs(rng.normal(size=(n, d)))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    pts *= rng.random((n, 1)) ** (1.0 / d)
    return HalfspaceInstance(pts, Repository({i + 1: pts[i : i + 1] for i in range(n)}))


def halfspace_to_pref(w: Sequence[float], c: float) -> PrefPred:
    """``{x : <w, x> >= c}`` as a top-1 predicate; the origin must lie outside."""
    w = np.asarray(w, dtype=float)
    norm = float(np.linalg.norm(w))
    if norm == 0:
        raise ValueError("halfspace normal must be non-zero")
    if c <= 0:
        raise ValueError("halfspace contains the origin")
    return PrefPred(tuple((w / norm).tolist()), 1, c / norm)


def halfspace_filter(points: np.ndarray, w: Sequence[float], c: float) -> set[int]:
    return {i + 1 for i, p in enumerate(points) if float(np.dot(p, w)) >= c}


def max_discrepancy(S, P) -> Fraction:
    """Largest ``|M_R(S) - M_R(P)|`` over all rectangles.

    Only the subset of ``S ∪ P`` a rectangle picks matters, so the maximum is
    attained by a rectangle with bounds among the coordinates of ``S ∪ P``.
    """
    S = np.asarray(S, dtype=float)
    P = np.asarray(P, dtype=float)
    d = P.shape[1]
    vals = [np.unique(np.concatenate([S[:, h], P[:, h]])) for h in range(d)]
    shape = tuple(len(v) + 1 for v in vals)

    def prefix(X, scale):
        grid = np.zeros(shape, dtype=np.int64)
        idx = tuple(np.searchsorted(vals[h], X[:, h]) + 1 for h in range(d))
        np.add.at(grid, idx, scale)
        for h in range(d):
            grid = np.cumsum(grid, axis=h)
        return grid

    # integer counts scaled to the common denominator |S| * |P|
    diff = prefix(S, len(P)) - prefix(P, len(S))
    return Fraction(int(_box_max(diff)), len(S) * len(P))


def _box_max(prefix: np.ndarray) -> int:
    m = prefix.shape[0]
    if prefix.ndim == 1:
        # largest |p[b] - p[a]| over all pairs
        return int(prefix.max() - prefix.min())
    best = 0
    for a in range(m - 1):
        for b in range(a + 1, m):
            best = max(best, _box_max(prefix[b] - prefix[a]))
    return best


def linear_scan_ptile(coresets: dict[int, np.ndarray], R: Rect, lo: Fraction, hi: Fraction) -> list[int]:
    """Per-dataset scan: ids whose coreset measure of ``R`` lies in ``[lo, hi]``."""
    out = []
    rlo = np.asarray(R.lo)
    rhi = np.asarray(R.hi)
    for i, S in coresets.items():
        c = int(np.count_nonzero(np.all((S >= rlo) & (S <= rhi), axis=1)))
        n = len(S)
        if lo * n <= c <= hi * n:
            out.append(i)
    return out
