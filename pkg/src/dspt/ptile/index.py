"""Percentile indexes over coresets.

Each dataset contributes a small coreset ``S_i``.  Every combinatorially
different rectangle ``rho`` of ``S_i`` becomes a lifted point tagged ``i``
whose weight is ``|rho ∩ S_i| / |S_i|``; a query rectangle becomes an orthant
plus a weight interval, and the datasets are the distinct tags found there.

* threshold index: points ``(rho.lo, rho.hi)``; a tag is found when some
  ``rho ⊆ R`` is heavy enough, which happens exactly when the largest such
  ``rho`` is.
* range index: points ``(rho.lo, rho_hat.lo, rho.hi, rho_hat.hi)`` for
  maximal pairs.  The orthant only admits the pair whose ``rho`` is the
  largest rectangle inside ``R``, so both ends of the interval can be tested.
* expression index: m-tuples of range-index pairs, one weight per slot,
  answering conjunctions of m range predicates with one orthant query.

Users pass ``eps``; the indexes work with ``eps / 2`` internally (coreset size
and query slack), so a reported dataset is within ``eps + 2 delta`` of the
requested interval.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterator, Mapping, Sequence

import numpy as np

from ..expr import Expr, PtilePred, check_theta, rationalize, to_dnf
from ..geom import BoundingBox, DimensionError, GeometryError, Rect, range_orthant, threshold_orthant
from ..rangetree import PointBlock, QueryRegion, QueryStats, RangeTree
from ..synopsis import DEFAULT_SAMPLE_CONST, Synopsis
from . import families

log = logging.getLogger(__name__)

DEFAULT_CAP = 200_000


class CapExceeded(RuntimeError):
    pass


@dataclass
class PtileConfig:
    eps: float
    failure: float
    seed: int = 0
    delta: float | None = None
    sample_const: float = DEFAULT_SAMPLE_CONST
    box: BoundingBox | None = None
    m: int = 1
    cap: int = DEFAULT_CAP
    empty_witnesses: bool = True
    all_pairs: bool = False

    def __post_init__(self) -> None:
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0 < self.failure < 1:
            raise ValueError(f"failure must lie in (0, 1), got {self.failure}")
        if self.m < 1:
            raise ValueError("m must be at least 1")

    @property
    def eps_internal(self) -> float:
        return self.eps / 2


@dataclass
class QueryResult:
    ids: list[int]
    estimates: dict[int, tuple[Fraction, ...]]
    slack: Fraction
    contract: str
    notes: list[str] = field(default_factory=list)
    stats: QueryStats = field(default_factory=QueryStats)

    def __iter__(self):
        return iter(self.ids)

    def as_set(self) -> set[int]:
        return set(self.ids)


def dataset_rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(tag),)))


# ---------------------------------------------------------------- lifting


def threshold_block(tag: int, S: np.ndarray, empty_witness: bool = True) -> tuple[PointBlock, int]:
    """Lifted rectangles of ``S`` for the threshold index, plus the family size."""
    S = np.asarray(S, dtype=float)
    d = S.shape[1]
    values = families.axis_values(S)
    lo, hi = families.comb_rect_indices([len(v) for v in values])
    counts = families.rect_counts(S, values, lo, hi)
    coords = np.column_stack([values[h][lo[:, h]] for h in range(d)] + [values[h][hi[:, h]] for h in range(d)])
    nfam = len(coords)
    num = counts
    if empty_witness:
        # the empty rectangle lies in every query and weighs 0
        coords = np.vstack([coords, np.r_[np.full(d, np.inf), np.full(d, -np.inf)]])
        num = np.append(num, 0)
    n = len(coords)
    return PointBlock(coords, num, np.full(n, len(S)), np.full(n, tag)), nfam


def range_pairs(S: np.ndarray, box: BoundingBox, all_pairs: bool = False,
                empty_witness: bool = True) -> tuple[np.ndarray, np.ndarray, int]:
    """Lifted maximal pairs of ``S`` (with facet projections) and their counts.

    Returns ``(coords, counts, family_size)``; ``coords`` rows are
    ``(rho.lo, rho_hat.lo, rho.hi, rho_hat.hi)``.
    """
    S = np.asarray(S, dtype=float)
    d = S.shape[1]
    if box.dim != d:
        raise DimensionError("box and coreset dimensions differ")
    if not box.strictly_contains_points(S):
        raise GeometryError("bounding box must strictly contain every coreset point")
    # projecting S onto the facets of the box adds exactly the box endpoints
    values = families.axis_values(S, box.lo, box.hi)
    sizes = [len(v) for v in values]
    lo, hlo, hi, hhi = families.maximal_pair_indices(sizes, reachable_only=not all_pairs)
    counts = families.rect_counts(S, values, lo, hi)
    cols = []
    for idx in (lo, hlo, hi, hhi):
        cols.extend(values[h][idx[:, h]] for h in range(d))
    coords = np.column_stack(cols) if cols and len(lo) else np.empty((0, 4 * d))
    if empty_witness:
        # (empty set, slab): the slab has no axis value strictly inside on
        # axis h, so it matches exactly when R misses every value on axis h
        rows = []
        for h, k, k1 in families.gap_indices(sizes):
            hat_lo = np.array(box.lo, dtype=float)
            hat_hi = np.array(box.hi, dtype=float)
            hat_lo[h], hat_hi[h] = values[h][k], values[h][k1]
            rows.append(np.r_[np.full(d, np.inf), hat_lo, np.full(d, -np.inf), hat_hi])
        if rows:
            coords = np.vstack([coords, np.array(rows)])
            counts = np.append(counts, np.zeros(len(rows), dtype=np.int64))
    return coords, counts, families.family_size(sizes)


def range_block(tag: int, S: np.ndarray, box: BoundingBox, all_pairs: bool = False,
                empty_witness: bool = True) -> tuple[PointBlock, int]:
    coords, counts, nfam = range_pairs(S, box, all_pairs, empty_witness)
    n = len(coords)
    return PointBlock(coords, counts, np.full(n, len(S)), np.full(n, tag)), nfam


def tuple_block(tag: int, coords: np.ndarray, counts: np.ndarray, den: int, m: int, cap: int) -> PointBlock:
    """All ordered m-tuples of lifted pairs, one weight per slot."""
    p = len(coords)
    if p**m > cap:
        raise CapExceeded(f"dataset {tag}: {p}^{m} = {p**m} lifted points exceeds the cap of {cap}")
    idx = np.array(list(product(range(p), repeat=m)), dtype=np.int64).reshape(-1, m)
    big = np.hstack([coords[idx[:, s]] for s in range(m)])
    num = np.column_stack([counts[idx[:, s]] for s in range(m)])
    n = len(big)
    return PointBlock(big, num, np.full(n, den), np.full(n, tag))


# ---------------------------------------------------------------- index


class PtileIndex:
    """Percentile index of one of three kinds: threshold, range or expression."""

    KINDS = ("threshold", "range", "expression")

    def __init__(self, kind: str, config: PtileConfig, dim: int):
        if kind not in self.KINDS:
            raise ValueError(f"unknown index kind {kind!r}")
        if kind != "threshold" and config.box is None:
            raise GeometryError("range and expression indexes need a bounding box")
        if config.box is not None and config.box.dim != dim:
            raise DimensionError("box and data dimensions differ")
        self.kind = kind
        self.config = config
        self.dim = dim
        self.coresets: dict[int, np.ndarray] = {}
        self.deltas: dict[int, float | None] = {}
        self.lifted: dict[int, PointBlock] = {}
        self.conj_lifted: dict[int, PointBlock] = {}
        self.family_sizes: dict[int, int] = {}
        D = 2 * dim if kind == "threshold" else 4 * dim
        self.tree = RangeTree(D, 1)
        self.conj_tree = RangeTree(4 * dim * config.m, config.m) if kind == "expression" and config.m > 1 else None
        self.planned_n = 0

    # -- construction -----------------------------------------------------

    def _lift(self, tag: int, S: np.ndarray) -> None:
        cfg = self.config
        if self.kind == "threshold":
            block, nfam = threshold_block(tag, S, cfg.empty_witnesses)
        else:
            coords, counts, nfam = range_pairs(S, cfg.box, cfg.all_pairs, cfg.empty_witnesses)
            n = len(coords)
            block = PointBlock(coords, counts, np.full(n, len(S)), np.full(n, tag))
            if self.conj_tree is not None:
                self.conj_lifted[tag] = tuple_block(tag, coords, counts, len(S), cfg.m, cfg.cap)
        self.lifted[tag] = block
        self.family_sizes[tag] = nfam
        log.info("dataset %d: %d rectangles, %d lifted points", tag, nfam, len(block))

    def draw_coreset(self, tag: int, syn: Synopsis, n_datasets: int) -> np.ndarray:
        cfg = self.config
        S = syn.coreset(cfg.eps_internal, cfg.failure, n_datasets, dataset_rng(cfg.seed, tag), cfg.sample_const)
        return np.asarray(S, dtype=float)

    def add_coresets(self, coresets: Mapping[int, np.ndarray], deltas: Mapping[int, float | None] | None = None) -> None:
        """Insert datasets given their coresets (one batch insertion per tree)."""
        new = []
        for tag, S in coresets.items():
            tag = int(tag)
            if tag in self.coresets:
                raise ValueError(f"dataset {tag} already indexed")
            S = np.asarray(S, dtype=float)
            if S.ndim != 2 or S.shape[1] != self.dim or len(S) == 0:
                raise DimensionError(f"dataset {tag}: coreset must be a non-empty (n, {self.dim}) array")
            self.coresets[tag] = S
            self.deltas[tag] = None if deltas is None else deltas.get(tag, 0.0)
            self._lift(tag, S)
            new.append(tag)
        if new:
            self.tree.insert_points(PointBlock.concat([self.lifted[t] for t in new]))
            if self.conj_tree is not None:
                self.conj_tree.insert_points(PointBlock.concat([self.conj_lifted[t] for t in new]))

    def insert(self, tag: int, syn: Synopsis) -> None:
        self.planned_n = max(self.planned_n, len(self.coresets) + 1)
        S = self.draw_coreset(tag, syn, self.planned_n)
        self.add_coresets({tag: S}, {tag: syn.delta})

    def remove(self, tag: int) -> None:
        if tag not in self.coresets:
            raise KeyError(f"dataset {tag} is not indexed")
        self.tree.delete_tag(tag)
        if self.conj_tree is not None:
            self.conj_tree.delete_tag(tag)
            del self.conj_lifted[tag]
        for d in (self.coresets, self.deltas, self.lifted, self.family_sizes):
            del d[tag]

    # -- properties -------------------------------------------------------

    @property
    def ids(self) -> list[int]:
        return sorted(self.coresets)

    @property
    def delta(self) -> float | None:
        if self.config.delta is not None:
            return self.config.delta
        if any(v is None for v in self.deltas.values()):
            return None
        return max(self.deltas.values(), default=0.0)

    def slack(self, override=None) -> tuple[Fraction, list[str]]:
        if override is not None:
            s = rationalize(override)
            if s < 0:
                raise ValueError("slack must be non-negative")
            return s, [f"slack overridden to {override}"]
        eps = rationalize(self.config.eps_internal)
        if self.delta is None:
            return eps, ["synopsis error unknown: results hold only up to the unknown delta"]
        return eps + rationalize(self.delta), []

    def contract(self, slack: Fraction, two_sided: bool) -> str:
        s = float(2 * slack) if self.delta is not None else float(slack)
        return f"measure >= a - {s:g}" + (f" and <= b + {s:g}" if two_sided else "")

    def estimate(self, tag: int, R: Rect) -> Fraction:
        S = self.coresets[tag]
        return Fraction(int(np.count_nonzero(R.mask(S))), len(S))

    def lifted_count(self, tag: int) -> int:
        return len(self.lifted[tag])


def _as_mapping(synopses) -> dict[int, Synopsis]:
    if isinstance(synopses, Mapping):
        return {int(k): v for k, v in synopses.items()}
    return {i + 1: s for i, s in enumerate(synopses)}


def _build(kind: str, synopses, config: PtileConfig) -> PtileIndex:
    syns = _as_mapping(synopses)
    if not syns:
        raise ValueError("no synopses given")
    dims = {s.dim for s in syns.values()}
    if len(dims) != 1:
        raise DimensionError("synopses have different dimensions")
    idx = PtileIndex(kind, config, dims.pop())
    idx.planned_n = len(syns)
    coresets = {t: idx.draw_coreset(t, s, len(syns)) for t, s in syns.items()}
    idx.add_coresets(coresets, {t: s.delta for t, s in syns.items()})
    return idx


def build_threshold_index(synopses, eps: float, failure: float, delta: float | None = None, seed: int = 0,
                          **kw) -> PtileIndex:
    return _build("threshold", synopses, PtileConfig(eps, failure, seed, delta, **kw))


def build_range_index(synopses, eps: float, failure: float, box: BoundingBox, delta: float | None = None,
                      seed: int = 0, **kw) -> PtileIndex:
    return _build("range", synopses, PtileConfig(eps, failure, seed, delta, box=box, **kw))


def build_expression_index(synopses, eps: float, failure: float, box: BoundingBox, m: int,
                           delta: float | None = None, seed: int = 0, **kw) -> PtileIndex:
    return _build("expression", synopses, PtileConfig(eps, failure, seed, delta, box=box, m=m, **kw))


def index_from_coresets(kind: str, config: PtileConfig, coresets: Mapping[int, np.ndarray],
                        deltas: Mapping[int, float | None] | None = None) -> PtileIndex:
    dim = next(iter(coresets.values())).shape[1]
    idx = PtileIndex(kind, config, dim)
    idx.planned_n = len(coresets)
    idx.add_coresets(coresets, deltas)
    return idx


# ---------------------------------------------------------------- queries


def threshold_region(R: Rect, lower: Fraction) -> QueryRegion:
    return QueryRegion.from_orthant(threshold_orthant(R), [(lower, None)])


def range_region(R: Rect, lower: Fraction, upper: Fraction, box: BoundingBox | None) -> QueryRegion:
    return QueryRegion.from_orthant(range_orthant(R, box), [(lower, upper)])


def _check_rect(idx: PtileIndex, R: Rect) -> None:
    if R.dim != idx.dim:
        raise DimensionError(f"query is {R.dim}-dimensional, index is {idx.dim}-dimensional")


def iter_threshold(idx: PtileIndex, R: Rect, a: float, slack=None,
                   stats: QueryStats | None = None) -> Iterator[tuple[int, Fraction]]:
    """Stream ``(dataset, estimate)`` for datasets whose coreset puts at least
    ``a - slack`` of its mass in ``R``; every dataset appears once."""
    _check_rect(idx, R)
    fa, _ = check_theta(a, 1)
    s, _ = idx.slack(slack)
    if idx.kind == "threshold":
        region = threshold_region(R, fa - s)
    else:
        region = range_region(R, fa - s, Fraction(1) + s, idx.config.box)
    for tag, _, _ in idx.tree.iter_distinct_tags(region, stats):
        yield tag, idx.estimate(tag, R)


def iter_threshold_reference(idx: PtileIndex, R: Rect, a: float, slack=None) -> Iterator[tuple[int, Fraction]]:
    """Report-one, delete-its-tag, repeat; re-inserts everything at the end."""
    _check_rect(idx, R)
    fa, _ = check_theta(a, 1)
    s, _ = idx.slack(slack)
    if idx.kind == "threshold":
        region = threshold_region(R, fa - s)
    else:
        region = range_region(R, fa - s, Fraction(1) + s, idx.config.box)
    found = []
    try:
        while True:
            p = idx.tree.report_first(region)
            if p is None:
                break
            found.append(p.tag)
            idx.tree.delete_tag(p.tag)
            yield p.tag, idx.estimate(p.tag, R)
    finally:
        for tag in found:
            idx.tree.insert_points(idx.lifted[tag])


def query_threshold(idx: PtileIndex, R: Rect, a: float, slack=None, reference: bool = False) -> QueryResult:
    s, notes = idx.slack(slack)
    stats = QueryStats()
    it = iter_threshold_reference(idx, R, a, slack) if reference else iter_threshold(idx, R, a, slack, stats)
    pairs = list(it)
    return QueryResult([t for t, _ in pairs], {t: (e,) for t, e in pairs}, s, idx.contract(s, False), notes, stats)


def iter_range(idx: PtileIndex, R: Rect, a: float, b: float, slack=None,
               stats: QueryStats | None = None) -> Iterator[tuple[int, Fraction]]:
    if idx.kind == "threshold":
        raise ValueError("a threshold index cannot answer two-sided queries")
    _check_rect(idx, R)
    fa, fb = check_theta(a, b)
    s, _ = idx.slack(slack)
    region = range_region(R, fa - s, fb + s, idx.config.box)
    for tag, tree, i in idx.tree.iter_distinct_tags(region, stats):
        yield tag, Fraction(int(tree.num[i, 0]), int(tree.den[i]))


def iter_range_reference(idx: PtileIndex, R: Rect, a: float, b: float, slack=None) -> Iterator[tuple[int, Fraction]]:
    _check_rect(idx, R)
    fa, fb = check_theta(a, b)
    s, _ = idx.slack(slack)
    region = range_region(R, fa - s, fb + s, idx.config.box)
    found = []
    try:
        while True:
            p = idx.tree.report_first(region)
            if p is None:
                break
            found.append(p.tag)
            idx.tree.delete_tag(p.tag)
            yield p.tag, p.weight
    finally:
        for tag in found:
            idx.tree.insert_points(idx.lifted[tag])


def query_range(idx: PtileIndex, R: Rect, a: float, b: float, slack=None, reference: bool = False) -> QueryResult:
    s, notes = idx.slack(slack)
    stats = QueryStats()
    it = iter_range_reference(idx, R, a, b, slack) if reference else iter_range(idx, R, a, b, slack, stats)
    pairs = list(it)
    return QueryResult([t for t, _ in pairs], {t: (e,) for t, e in pairs}, s, idx.contract(s, True), notes, stats)


def _conj_region(idx: PtileIndex, preds: Sequence[PtilePred], s: Fraction) -> QueryRegion:
    orth = None
    weights = []
    for p in preds:
        _check_rect(idx, p.rect)
        fa, fb = check_theta(p.a, p.b)
        o = range_orthant(p.rect, idx.config.box)
        orth = o if orth is None else orth + o
        weights.append((fa - s, fb + s))
    return QueryRegion.from_orthant(orth, weights)


def query_expression(idx: PtileIndex, expr: Expr, slack=None) -> QueryResult:
    """AND/OR combinations of percentile predicates.

    The expression is expanded into a disjunction of conjunctions.  A
    conjunction of at most ``m`` predicates is one orthant query on the tuple
    tree (padding by repeating a predicate); single predicates use the pair
    tree; anything else falls back to intersecting single-predicate answers.
    Terms share one seen-set, so each dataset is reported once.
    """
    s, notes = idx.slack(slack)
    stats = QueryStats()
    seen: dict[int, tuple[Fraction, ...]] = {}
    order: list[int] = []

    def emit(tag, est):
        if tag not in seen:
            seen[tag] = est
            order.append(tag)

    for term in to_dnf(expr):
        if not all(isinstance(p, PtilePred) for p in term):
            raise TypeError("percentile index got a non-percentile predicate")
        if len(term) == 1:
            p = term[0]
            it = (iter_threshold(idx, p.rect, p.a, slack, stats) if idx.kind == "threshold"
                  else iter_range(idx, p.rect, p.a, p.b, slack, stats))
            for tag, est in it:
                emit(tag, (est,))
        elif idx.conj_tree is not None and len(term) <= idx.config.m:
            padded = list(term) + [term[-1]] * (idx.config.m - len(term))
            region = _conj_region(idx, padded, s)
            for tag, tree, i in idx.conj_tree.iter_distinct_tags(region, stats):
                if tag not in seen:
                    w = tuple(Fraction(int(n), int(tree.den[i])) for n in tree.num[i][: len(term)])
                    emit(tag, w)
        else:
            notes.append(f"conjunction of {len(term)} predicates answered by intersecting single queries")
            common = None
            ests: dict[int, list[Fraction]] = {}
            for p in term:
                it = (iter_threshold(idx, p.rect, p.a, slack, stats) if idx.kind == "threshold"
                      else iter_range(idx, p.rect, p.a, p.b, slack, stats))
                got = dict(it)
                for t, e in got.items():
                    ests.setdefault(t, []).append(e)
                common = set(got) if common is None else common & set(got)
            for tag in sorted(common or ()):
                emit(tag, tuple(ests[tag]))
    return QueryResult(order, seen, s, idx.contract(s, True), notes, stats)
