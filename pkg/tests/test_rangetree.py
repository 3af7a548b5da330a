import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dspt.geom import DimensionError, Rect, threshold_orthant
from dspt.rangetree import PointBlock, QueryRegion, RangeTree, WeightedPoint, scan


def random_block(rng, n, dim, n_weights=1, tags=8, grid=6):
    coords = rng.integers(0, grid, size=(n, dim)).astype(float)
    den = rng.integers(1, 7, size=n)
    num = np.column_stack([rng.integers(0, den + 1) for _ in range(n_weights)]) if n_weights else np.empty((n, 0))
    return PointBlock(coords, num, den, rng.integers(0, tags, size=n))


def random_region(rng, dim, n_weights=1, grid=6):
    lo = rng.integers(-1, grid, size=dim).astype(float)
    hi = lo + rng.integers(0, grid, size=dim)
    lo = [x if rng.random() < 0.8 else -math.inf for x in lo]
    hi = [x if rng.random() < 0.8 else math.inf for x in hi]
    lo_open = rng.random(dim) < 0.3
    hi_open = rng.random(dim) < 0.3
    weights = []
    for _ in range(n_weights):
        a = int(rng.integers(0, 5))
        b = int(rng.integers(a, 6))
        weights.append((a / 5 if rng.random() < 0.8 else None, b / 5 if rng.random() < 0.8 else None))
    return QueryRegion(lo, hi, lo_open, hi_open, weights)


def key(p):
    return (p.coords, p.num, p.den, p.tag)


def hits(tree, region):
    return sorted(key(p) for p in tree.report(region))


def expected(block, region):
    return sorted(key(block.point(i)) for i in scan(block, region))


def test_empty_tree_reports_nothing():
    t = RangeTree.build([], dim=2, n_weights=1)
    assert t.report(QueryRegion([-math.inf] * 2, [math.inf] * 2, weights=[(0, 1)])) == []
    assert t.report_first(QueryRegion([0, 0], [1, 1])) is None


def test_ten_intervals_full_space():
    values = [2, 4, 6, 10]
    pts = [WeightedPoint((a, b), (sum(a <= v <= b for v in values),), 4, 2) for a in values for b in values if a <= b]
    t = RangeTree.build(pts)
    assert len(t.report(QueryRegion([-math.inf] * 2, [math.inf] * 2, weights=[(0, 1)]))) == 10


def test_threshold_example_region():
    S1, S2 = [1, 7, 9], [2, 4, 6, 10]
    pts = []
    for tag, S in ((1, S1), (2, S2)):
        pts += [WeightedPoint((a, b), (sum(a <= v <= b for v in S),), len(S), tag) for a in S for b in S if a <= b]
    t = RangeTree.build(pts)
    region = QueryRegion.from_orthant(threshold_orthant(Rect.interval(3, 8)), [(0.2, 1)])
    got = {p.coords for p in t.report(region)}
    assert got == {(4.0, 4.0), (4.0, 6.0), (6.0, 6.0), (7.0, 7.0)}
    tags = []
    for p in t.enumerate(region, skip=lambda tag: tag in tags):
        tags.append(p.tag)
    assert sorted(tags) == [1, 2]


@pytest.mark.parametrize("dim,n_weights", [(1, 1), (2, 1), (4, 1), (3, 2), (4, 0)])
def test_report_matches_scan(dim, n_weights):
    rng = np.random.default_rng(dim * 10 + n_weights)
    for trial in range(30):
        block = random_block(rng, int(rng.integers(0, 300)), dim, n_weights)
        tree = RangeTree(dim, n_weights, leaf_size=int(rng.integers(1, 40)))
        tree.insert_points(block)
        for _ in range(10):
            region = random_region(rng, dim, n_weights)
            assert hits(tree, region) == expected(block, region)


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4), st.integers(0, 3), st.integers(0, 3)), max_size=60),
       st.integers(0, 4), st.integers(0, 4), st.integers(0, 4), st.integers(0, 4), st.fractions(0, 1))
def test_report_matches_scan_hypothesis(rows, x0, x1, y0, y1, a):
    block = PointBlock(np.array([r[:2] for r in rows], dtype=float).reshape(-1, 2),
                       np.array([min(r[2], 3) for r in rows]).reshape(-1, 1), np.full(len(rows), 3),
                       np.array([r[3] for r in rows]))
    tree = RangeTree.build(block, dim=2, n_weights=1, leaf_size=2)
    region = QueryRegion([min(x0, x1), min(y0, y1)], [max(x0, x1), max(y0, y1)], weights=[(a, None)])
    assert hits(tree, region) == expected(block, region)


def test_exact_weight_boundaries():
    # 1/3 is not a float; the comparison must still be exact
    t = RangeTree.build([WeightedPoint((0.0,), (1,), 3, 1), WeightedPoint((0.0,), (2,), 6, 2)])
    region = QueryRegion([-1], [1], weights=[(Fraction(1, 3), Fraction(1, 3))])
    assert {p.tag for p in t.report(region)} == {1, 2}
    assert t.report(QueryRegion([-1], [1], weights=[(Fraction(333_333, 999_998), None)])) == []
    # float endpoints snap to nearby simple rationals
    assert len(t.report(QueryRegion([-1], [1], weights=[(1 / 3, None)]))) == 2


def test_strict_bounds():
    t = RangeTree.build([WeightedPoint((1.0,), (), 1, 0), WeightedPoint((2.0,), (), 1, 1)], dim=1, n_weights=0)
    assert {p.tag for p in t.report(QueryRegion([1], [2], lo_open=[True]))} == {1}
    assert {p.tag for p in t.report(QueryRegion([1], [2], hi_open=[True]))} == {0}


def test_dimension_mismatch():
    t = RangeTree(2, 1)
    with pytest.raises(DimensionError):
        t.insert_points([WeightedPoint((1.0,), (1,), 1, 0)])


def test_insert_equals_build():
    rng = np.random.default_rng(5)
    A, B = random_block(rng, 200, 3), random_block(rng, 77, 3)
    t1 = RangeTree.build(PointBlock.concat([A, B]))
    t2 = RangeTree.build(A)
    t2.insert_points(B)
    t2.insert_points(PointBlock.empty(3, 1))
    for _ in range(30):
        region = random_region(rng, 3)
        assert hits(t1, region) == hits(t2, region)


def test_logarithmic_buckets():
    rng = np.random.default_rng(1)
    t = RangeTree(2, 1)
    for _ in range(64):
        t.insert_points(random_block(rng, 1, 2))
    assert len(t) == 64
    assert t.n_buckets == 1  # 64 single inserts merge into one bucket
    t.insert_points(random_block(rng, 1, 2))
    assert t.n_buckets == 2


def test_delete_tag_and_purge():
    rng = np.random.default_rng(2)
    block = random_block(rng, 400, 2, tags=10)
    t = RangeTree(2, 1)
    for i in range(0, 400, 50):
        t.insert_points(block.take(slice(i, i + 50)))
    assert t.delete_tag(99) == 0
    removed = set()
    for tag in range(0, 10, 2):
        n = t.delete_tag(tag)
        assert n == int(np.count_nonzero(block.tags == tag))
        removed.add(tag)
        keep = block.take(~np.isin(block.tags, list(removed)))
        fresh = RangeTree.build(keep)
        assert len(t) == len(keep)
        assert t.live_tags() == set(np.unique(keep.tags).tolist())
        for _ in range(10):
            region = random_region(rng, 2)
            assert hits(t, region) == hits(fresh, region)


def test_reinsert_after_delete():
    rng = np.random.default_rng(3)
    block = random_block(rng, 100, 2, tags=4)
    t = RangeTree.build(block)
    t.delete_tag(1)
    t.insert_points(block.take(block.tags == 1))
    full = QueryRegion([-math.inf] * 2, [math.inf] * 2, weights=[(None, None)])
    assert hits(t, full) == expected(block, full)


def test_report_first_is_member():
    rng = np.random.default_rng(4)
    block = random_block(rng, 150, 2)
    t = RangeTree.build(block)
    for _ in range(50):
        region = random_region(rng, 2)
        first = t.report_first(region)
        if first is None:
            assert scan(block, region) == []
        else:
            assert region.contains(first)


def test_enumerate_skip_grows():
    rng = np.random.default_rng(6)
    block = random_block(rng, 300, 2, tags=12)
    t = RangeTree.build(block)
    for _ in range(20):
        region = random_region(rng, 2)
        seen = []
        for p in t.enumerate(region, skip=lambda tag: tag in seen):
            seen.append(p.tag)
        assert len(seen) == len(set(seen))
        assert set(seen) == {int(block.tags[i]) for i in scan(block, region)}


def test_weight_validation():
    with pytest.raises(ValueError):
        WeightedPoint((0.0,), (3,), 2, 0)
    with pytest.raises(ValueError):
        QueryRegion([0], [1], weights=[(0.5, 0.2)])
