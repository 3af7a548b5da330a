"""Top-k preference index.

For a unit vector ``v`` the score of a dataset is the k-th largest inner
product ``<p, v>``.  Scores are precomputed for every vector of an eps-net of
the unit sphere; a query direction is snapped to its nearest net vector and
answered from a sorted list of that vector's scores.  Because points lie in
the unit ball, moving the direction by ``eps`` moves any score by at most
``eps``.  As with the percentile indexes, the user's ``eps`` is halved
internally (net radius and query slack).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations, product
from typing import Mapping, Sequence

import numpy as np

from .expr import Expr, PrefPred, to_dnf
from .geom import DimensionError
from .ptile.index import CapExceeded, QueryResult
from .rangetree import PointBlock, QueryRegion, QueryStats, RangeTree
from .synopsis import ExactSynopsis, HistogramSynopsis, Synopsis

DEFAULT_PROBES = 100_000
DEFAULT_MAX_TREES = 100_000


class NetError(RuntimeError):
    pass


@dataclass(frozen=True)
class EpsNet:
    vectors: np.ndarray
    eps: float
    radius: float  # largest probe-to-net distance observed

    @property
    def size(self) -> int:
        return len(self.vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def circle_net_size(eps: float) -> int:
    """Even number of equally spaced directions with angular gap <= arcsin(eps/2)."""
    return 2 * math.ceil(math.pi / math.asin(eps / 2))


def _raw_net(eps: float, d: int) -> np.ndarray:
    if d == 1:
        return np.array([[-1.0], [1.0]])
    if d == 2:
        c = circle_net_size(eps)
        t = 2 * math.pi * np.arange(c) / c
        return np.column_stack([np.cos(t), np.sin(t)])
    # grid on the faces of [-1, 1]^d pushed radially onto the sphere; the push
    # is 1-Lipschitz on the faces, and a face point is within sqrt(d-1)/g of a
    # grid node, so g = ceil(sqrt(d-1)/eps) covers the sphere
    g = math.ceil(math.sqrt(d - 1) / eps)
    ticks = np.linspace(-1.0, 1.0, g + 1)
    face = np.array(list(product(ticks, repeat=d - 1)))
    out = []
    for h in range(d):
        for sgn in (-1.0, 1.0):
            pts = np.insert(face, h, sgn, axis=1)
            out.append(pts)
    pts = np.unique(np.round(np.concatenate(out), 12), axis=0)
    return pts / np.linalg.norm(pts, axis=1)[:, None]


def _probe_radius(vectors: np.ndarray, n: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    d = vectors.shape[1]
    worst = 0.0
    for start in range(0, n, 2048):
        u = rng.normal(size=(min(2048, n - start), d))
        u /= np.linalg.norm(u, axis=1)[:, None]
        best = (u @ vectors.T).max(axis=1)
        worst = max(worst, float(np.sqrt(np.maximum(0.0, 2 - 2 * best)).max()))
    return worst


@lru_cache(maxsize=32)
def build_eps_net(eps: float, d: int, probes: int = DEFAULT_PROBES, seed: int = 0) -> EpsNet:
    """Centrally symmetric eps-net of the unit sphere in R^d, probe-checked."""
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if d < 1:
        raise DimensionError("dimension must be positive")
    vecs = _raw_net(eps, d)
    vecs = vecs[np.lexsort(vecs.T[::-1])]  # lexicographic order, used for tie breaks
    radius = _probe_radius(vecs, probes, seed) if probes else 0.0
    if radius > eps:
        raise NetError(f"net misses a probe by {radius} > {eps}")
    vecs.setflags(write=False)
    return EpsNet(vecs, eps, radius)


def nearest_net_vector(net: EpsNet, u: Sequence[float]) -> int:
    """Index of the closest net vector; exact ties go to the lexicographically smallest."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape[0] != net.dim:
        raise DimensionError("direction has the wrong dimension")
    # the net is sorted lexicographically and argmax returns the first maximum
    return int(np.argmax(net.vectors @ u))


def scores_for(syn: Synopsis, vectors: np.ndarray, k: int) -> np.ndarray:
    """Scores of one synopsis for every net vector (``-inf`` when k exceeds its size)."""
    if k > syn.support_size:
        return np.full(len(vectors), -np.inf)
    if isinstance(syn, ExactSynopsis):
        s = syn.points @ vectors.T  # (n, c)
        n = s.shape[0]
        return np.partition(s, n - k, axis=0)[n - k]
    if isinstance(syn, HistogramSynopsis):
        clo = syn.lo + syn._idx * syn.width
        chi = clo + syn.width
        best = np.maximum(clo[:, None, :] * vectors[None], chi[:, None, :] * vectors[None]).sum(axis=2)
        order = np.argsort(-best, axis=0, kind="stable")
        cum = np.cumsum(syn._count[order], axis=0)
        pos = (cum < k).sum(axis=0)
        return best[order[pos, np.arange(len(vectors))], np.arange(len(vectors))]
    return np.array([syn.score(v, k) for v in vectors])


@dataclass
class PrefConfig:
    eps: float
    k: int
    delta: float | None = None
    m: int = 1
    probes: int = DEFAULT_PROBES
    seed: int = 0
    max_trees: int = DEFAULT_MAX_TREES

    def __post_init__(self) -> None:
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.m < 1:
            raise ValueError("m must be at least 1")

    @property
    def eps_internal(self) -> float:
        return self.eps / 2


class PrefIndex:
    def __init__(self, config: PrefConfig, dim: int, net: EpsNet | None = None):
        self.config = config
        self.dim = dim
        self.net = build_eps_net(config.eps_internal, dim, config.probes, config.seed) if net is None else net
        self.ids: list[int] = []
        self.gamma = np.empty((self.net.size, 0))
        self.deltas: dict[int, float | None] = {}
        self.excluded: set[int] = set()
        self._sorted = None
        self.trees: dict[tuple[int, ...], RangeTree] = {}
        if config.m > 1:
            n_trees = math.comb(self.net.size, config.m)
            if n_trees > config.max_trees:
                raise CapExceeded(f"{n_trees} subset trees exceed the cap of {config.max_trees}")
            self.trees = {V: RangeTree(config.m, 0) for V in combinations(range(self.net.size), config.m)}

    @property
    def k(self) -> int:
        return self.config.k

    @property
    def delta(self) -> float | None:
        if self.config.delta is not None:
            return self.config.delta
        if any(v is None for v in self.deltas.values()):
            return None
        return max(self.deltas.values(), default=0.0)

    def add(self, columns: Mapping[int, np.ndarray], deltas: Mapping[int, float | None]) -> None:
        tags = [int(t) for t in columns]
        if any(t in self.deltas for t in tags):
            raise ValueError("dataset already indexed")
        if not tags:
            return
        cols = np.column_stack([np.asarray(columns[t], dtype=float) for t in tags])
        self.ids.extend(tags)
        self.gamma = np.hstack([self.gamma, cols])
        for t in tags:
            self.deltas[t] = deltas.get(t, 0.0)
            if np.all(np.isneginf(columns[t])):
                self.excluded.add(t)
        self._sorted = None
        live = [j for j, t in enumerate(tags) if t not in self.excluded]
        if self.trees and live:
            tag_arr = np.array([tags[j] for j in live])
            for V, tree in self.trees.items():
                pts = cols[list(V)][:, live].T
                tree.insert_points(PointBlock(pts, np.empty((len(live), 0)), np.ones(len(live)), tag_arr))

    def insert(self, tag: int, syn: Synopsis) -> None:
        if syn.dim != self.dim:
            raise DimensionError("synopsis has the wrong dimension")
        self.add({tag: scores_for(syn, self.net.vectors, self.k)}, {tag: syn.pref_delta})

    def remove(self, tag: int) -> None:
        j = self.ids.index(tag)
        self.ids.pop(j)
        self.gamma = np.delete(self.gamma, j, axis=1)
        del self.deltas[tag]
        self.excluded.discard(tag)
        self._sorted = None
        for tree in self.trees.values():
            tree.delete_tag(tag)

    def sorted_rows(self):
        if self._sorted is None:
            order = np.argsort(self.gamma, axis=1, kind="stable")
            vals = np.take_along_axis(self.gamma, order, axis=1)
            self._sorted = (order, vals)
        return self._sorted

    def slack(self, override=None) -> tuple[float, list[str]]:
        if override is not None:
            if override < 0:
                raise ValueError("slack must be non-negative")
            return float(override), [f"slack overridden to {override}"]
        if self.delta is None:
            return self.config.eps_internal, ["synopsis error unknown: results hold only up to the unknown delta"]
        return self.config.eps_internal + self.delta, []

    def notes(self) -> list[str]:
        if self.excluded:
            return [f"excluded (fewer than k={self.k} points): {sorted(self.excluded)}"]
        return []


def build_pref_index(synopses, eps: float, k: int, delta: float | None = None, m: int = 1,
                     probes: int = DEFAULT_PROBES, seed: int = 0, max_trees: int = DEFAULT_MAX_TREES) -> PrefIndex:
    syns = {int(t): s for t, s in synopses.items()} if isinstance(synopses, Mapping) else \
        {i + 1: s for i, s in enumerate(synopses)}
    if not syns:
        raise ValueError("no synopses given")
    dims = {s.dim for s in syns.values()}
    if len(dims) != 1:
        raise DimensionError("synopses have different dimensions")
    for t, s in syns.items():
        if isinstance(s, ExactSynopsis) and np.any(np.linalg.norm(s.points, axis=1) > 1 + 1e-12):
            raise ValueError(f"dataset {t} has points outside the unit ball")
    idx = PrefIndex(PrefConfig(eps, k, delta, m, probes, seed, max_trees), dims.pop())
    idx.add({t: scores_for(s, idx.net.vectors, k) for t, s in syns.items()},
            {t: s.pref_delta for t, s in syns.items()})
    return idx


def _check_pred(idx: PrefIndex, p: PrefPred) -> None:
    if len(p.v) != idx.dim:
        raise DimensionError("preference vector has the wrong dimension")
    if p.k != idx.k:
        raise ValueError(f"index was built for k={idx.k}, query asks for k={p.k}")


def _single(idx: PrefIndex, p: PrefPred, s: float, stats: QueryStats) -> list[tuple[int, float]]:
    _check_pred(idx, p)
    v = nearest_net_vector(idx.net, p.v)
    order, vals = idx.sorted_rows()
    start = int(np.searchsorted(vals[v], p.a - s, side="left"))
    stats.nodes += 1
    out = [(idx.ids[j], float(idx.gamma[v, j])) for j in order[v, start:].tolist()]
    stats.points += len(out)
    return out


def query_pref(idx: PrefIndex, u: Sequence[float], a: float, slack=None, k: int | None = None) -> QueryResult:
    """Datasets whose k-th best score along ``u`` is (approximately) at least ``a``."""
    s, notes = idx.slack(slack)
    stats = QueryStats()
    pairs = _single(idx, PrefPred(tuple(u), idx.k if k is None else k, a), s, stats)
    return QueryResult([t for t, _ in pairs], {t: (g,) for t, g in pairs}, s, f"score >= a - {2 * s:g}",
                       notes + idx.notes(), stats)


def query_pref_expression(idx: PrefIndex, expr: Expr, slack=None) -> QueryResult:
    """AND/OR of preference predicates (same k); see ``query_expression``."""
    s, notes = idx.slack(slack)
    stats = QueryStats()
    seen: dict[int, tuple[float, ...]] = {}
    order: list[int] = []
    for term in to_dnf(expr):
        if not all(isinstance(p, PrefPred) for p in term):
            raise TypeError("preference index got a non-preference predicate")
        for p in term:
            _check_pred(idx, p)
        vs = [nearest_net_vector(idx.net, p.v) for p in term]
        hits: list[tuple[int, tuple[float, ...]]] = []
        if len(term) == 1:
            hits = [(t, (g,)) for t, g in _single(idx, term[0], s, stats)]
        elif len(term) == idx.config.m and len(set(vs)) == len(vs) and idx.trees:
            V = tuple(sorted(vs))
            lo = [0.0] * len(V)
            for p, v in zip(term, vs):
                lo[V.index(v)] = p.a - s
            region = QueryRegion(lo, [math.inf] * len(V))
            for tag, _, _ in idx.trees[V].iter_distinct_tags(region, stats):
                j = idx.ids.index(tag)
                hits.append((tag, tuple(float(idx.gamma[v, j]) for v in vs)))
        else:
            notes.append(f"conjunction of {len(term)} predicates answered by intersecting single queries")
            got = [dict(_single(idx, p, s, stats)) for p in term]
            common = set(got[0]).intersection(*got[1:])
            hits = [(t, tuple(g[t] for g in got)) for t in sorted(common)]
        for t, est in hits:
            if t not in seen:
                seen[t] = est
                order.append(t)
    return QueryResult(order, seen, s, f"score >= a - {2 * s:g}", notes + idx.notes(), stats)
