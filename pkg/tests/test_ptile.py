from fractions import Fraction

import numpy as np
import pytest

from dspt import oracle
from dspt.expr import And, Or, PtilePred
from dspt.geom import BoundingBox, GeometryError, Rect
from dspt.ptile import (
    CapExceeded,
    PtileConfig,
    build_expression_index,
    build_range_index,
    build_threshold_index,
    index_from_coresets,
    query_expression,
    query_range,
    query_threshold,
)
from dspt.ptile.families import family_size
from dspt.ptile.index import range_pairs, threshold_block
from dspt.synopsis import ExactSynopsis, HistogramSynopsis

S1 = np.array([[1.0], [7.0], [9.0]])
S2 = np.array([[2.0], [4.0], [6.0], [10.0]])
BOX = BoundingBox.from_bounds([-1], [11])


def example(kind="range", **kw):
    syns = {1: ExactSynopsis(S1, exact_coreset=True), 2: ExactSynopsis(S2, exact_coreset=True)}
    if kind == "threshold":
        return build_threshold_index(syns, 0.005, 0.05, **kw)
    if kind == "range":
        return build_range_index(syns, 0.005, 0.05, BOX, **kw)
    return build_expression_index(syns, 0.005, 0.05, BOX, 2, **kw)


def lifted_weight(idx, tag, coords):
    block = idx.lifted[tag]
    rows = np.nonzero(np.all(block.coords == np.asarray(coords, dtype=float), axis=1))[0]
    assert len(rows) == 1
    return block.point(int(rows[0])).weight


def test_running_example_threshold():
    idx = example("threshold")
    assert lifted_weight(idx, 1, (1, 7)) == Fraction(2, 3)
    assert idx.family_sizes == {1: 6, 2: 10}
    res = query_threshold(idx, Rect.interval(3, 8), 0.2)
    assert sorted(res.ids) == [1, 2]
    assert res.estimates[1] == (Fraction(1, 3),) and res.estimates[2] == (Fraction(1, 2),)


def test_running_example_range():
    idx = example("range")
    assert lifted_weight(idx, 1, (7, 1, 7, 9)) == Fraction(1, 3)
    assert lifted_weight(idx, 2, (4, 2, 6, 10)) == Fraction(2, 4)
    assert sorted(query_range(idx, Rect.interval(3, 8), 0.2, 1).ids) == [1, 2]
    res = query_range(idx, Rect.interval(3, 8), 0.2, 0.4)
    assert res.ids == [1] and res.estimates[1] == (Fraction(1, 3),)


def test_default_slack_widens_interval():
    idx = build_range_index({1: ExactSynopsis(S1, exact_coreset=True), 2: ExactSynopsis(S2, exact_coreset=True)},
                            0.2, 0.05, BOX)
    # slack eps/2 = 0.1: dataset 2 (measure 1/2) now fits [0.2, 0.4] + 0.1
    assert sorted(query_range(idx, Rect.interval(3, 8), 0.2, 0.4).ids) == [1, 2]
    assert query_range(idx, Rect.interval(3, 8), 0.2, 0.4, slack=0).ids == [1]


def test_zero_threshold_reports_everything():
    idx = example("threshold")
    assert sorted(query_threshold(idx, Rect.interval(20, 30), 0.0).ids) == [1, 2]
    idx = example("threshold", empty_witnesses=False)
    assert query_threshold(idx, Rect.interval(20, 30), 0.0).ids == []
    assert sorted(query_threshold(idx, Rect.interval(1, 2), 0.0).ids) == [1, 2]


def test_full_interval_reports_everything():
    idx = example("range")
    for R in (Rect.interval(3, 8), Rect.interval(2.5, 3.5), Rect.interval(-0.5, 10.5)):
        assert sorted(query_range(idx, R, 0, 1).ids) == [1, 2]


def test_lifted_point_counts():
    rng = np.random.default_rng(0)
    for _ in range(10):
        S = rng.integers(0, 6, size=(int(rng.integers(1, 8)), 2)).astype(float)
        block, nfam = threshold_block(1, S, empty_witness=False)
        sizes = [len(np.unique(S[:, h])) for h in range(2)]
        assert len(block) == nfam == family_size(sizes)


def test_single_point_dataset_has_pairs():
    coords, counts, _ = range_pairs(np.array([[5.0, 5.0]]), BoundingBox.from_bounds([0, 0], [10, 10]),
                                    empty_witness=False)
    assert len(coords) == 1 and counts.tolist() == [1]


def test_query_outside_box_rejected():
    idx = example("range")
    with pytest.raises(GeometryError):
        query_range(idx, Rect.interval(-1, 5), 0.2, 1)


def test_data_outside_box_rejected():
    with pytest.raises(GeometryError):
        build_range_index([ExactSynopsis([[20.0]], exact_coreset=True)], 0.1, 0.05, BOX)


def test_threshold_index_rejects_two_sided():
    with pytest.raises(ValueError):
        query_range(example("threshold"), Rect.interval(3, 8), 0.2, 0.4)


def test_expression_examples():
    idx = example("expression")
    repo = oracle.Repository({1: S1, 2: S2})
    exprs = [
        And(PtilePred(Rect.interval(3, 8), 0.2), PtilePred(Rect.interval(0, 5), 0.4)),
        Or(PtilePred(Rect.interval(0, 1.5), 0.3), PtilePred(Rect.interval(9.5, 10.5), 0.2)),
        PtilePred(Rect.interval(3, 8), 0.2, 0.4),
        And(PtilePred(Rect.interval(3, 8), 0.2), PtilePred(Rect.interval(0, 5), 0.4), PtilePred(Rect.interval(0, 10), 0.9)),
    ]
    for e in exprs:
        res = query_expression(idx, e, slack=0)
        assert set(res.ids) == oracle.brute_force_query(repo, e)
        assert len(res.ids) == len(set(res.ids))


def test_expression_point_count():
    idx = example("expression", empty_witnesses=False)
    for tag in (1, 2):
        p = len(idx.lifted[tag])
        assert len(idx.conj_lifted[tag]) == p * p


def test_expression_cap():
    syns = [ExactSynopsis(np.arange(6.0)[:, None], exact_coreset=True)]
    with pytest.raises(CapExceeded):
        build_expression_index(syns, 0.1, 0.05, BoundingBox.from_bounds([-1], [7]), 3, cap=1000)


def test_m1_expression_equals_range():
    rng = np.random.default_rng(1)
    data = {t: rng.integers(0, 5, size=(4, 2)).astype(float) for t in range(1, 6)}
    box = BoundingBox.from_bounds([-1, -1], [6, 6])
    syns = {t: ExactSynopsis(P, exact_coreset=True) for t, P in data.items()}
    r = build_range_index(syns, 0.1, 0.05, box)
    e = build_expression_index(syns, 0.1, 0.05, box, 1)
    for _ in range(30):
        lo = rng.uniform(-0.5, 5, 2)
        R = Rect(tuple(lo), tuple(np.minimum(lo + rng.uniform(0, 3, 2), 5.5)))
        a = float(rng.uniform(0, 1))
        b = float(rng.uniform(a, 1))
        assert set(query_range(r, R, a, b, 0).ids) == set(query_expression(e, PtilePred(R, a, b), 0).ids)


def test_random_exact_instances_match_oracle():
    rng = np.random.default_rng(2)
    for trial in range(40):
        d = int(rng.integers(1, 3))
        grid = 6 if d == 2 else 15
        data = {t: rng.integers(0, grid, size=(int(rng.integers(1, 12)), d)).astype(float)
                for t in range(1, int(rng.integers(1, 8)) + 1)}
        syns = {t: ExactSynopsis(P, exact_coreset=True) for t, P in data.items()}
        box = BoundingBox.from_bounds([-1] * d, [grid] * d)
        th = build_threshold_index(syns, 0.1, 0.05, seed=trial)
        rg = build_range_index(syns, 0.1, 0.05, box, seed=trial)
        repo = oracle.Repository(data)
        for _ in range(15):
            lo = rng.integers(-1, grid, d) + rng.choice([0, 0.5], d)
            lo = np.maximum(lo, -0.5)
            hi = np.minimum(lo + rng.integers(0, grid, d), grid - 0.5)
            R = Rect(tuple(map(float, lo)), tuple(map(float, hi)))
            a = int(rng.integers(0, 6)) / 5
            b = int(rng.integers(a * 5, 6)) / 5
            assert set(query_threshold(th, R, a, 0).ids) == oracle.brute_force_query(repo, PtilePred(R, a))
            assert set(query_range(rg, R, a, b, 0).ids) == oracle.brute_force_query(repo, PtilePred(R, a, b))


def test_reference_matches_streaming():
    idx = example("range")
    for R, a, b in [(Rect.interval(3, 8), 0.2, 1), (Rect.interval(3, 8), 0.2, 0.4), (Rect.interval(0, 10.5), 0, 1)]:
        s = query_range(idx, R, a, b, 0)
        r = query_range(idx, R, a, b, 0, reference=True)
        assert sorted(s.ids) == sorted(r.ids)
    # the reference re-inserts what it deleted
    assert len(idx.tree) == sum(len(b) for b in idx.lifted.values())


def test_insert_remove():
    idx = example("range")
    R = Rect.interval(3, 8)
    idx.insert(3, ExactSynopsis([[5.0], [6.0]], exact_coreset=True))
    assert sorted(query_range(idx, R, 0.9, 1, 0).ids) == [3]
    idx.remove(3)
    assert query_range(idx, R, 0.9, 1, 0).ids == []
    with pytest.raises(KeyError):
        idx.remove(3)
    with pytest.raises(ValueError):
        idx.add_coresets({1: S1})


def test_unknown_delta_note():
    h = HistogramSynopsis.from_points(S1, 2, [0], [10])
    h.delta = None
    idx = build_threshold_index({1: h}, 0.2, 0.05)
    res = query_threshold(idx, Rect.interval(3, 8), 0.2)
    assert idx.delta is None and any("unknown" in n for n in res.notes)


def test_explicit_delta_enters_slack():
    idx = build_threshold_index([ExactSynopsis(S1)], 0.2, 0.05, delta=0.05)
    assert idx.slack()[0] == Fraction(3, 20)
    with pytest.raises(ValueError):
        idx.slack(-0.1)


def test_sampled_coresets_are_deterministic():
    rng = np.random.default_rng(3)
    syns = {t: ExactSynopsis(rng.uniform(0, 1, size=(50, 1))) for t in range(1, 4)}
    a = build_threshold_index(syns, 0.3, 0.1, seed=9)
    b = build_threshold_index(syns, 0.3, 0.1, seed=9)
    c = build_threshold_index(syns, 0.3, 0.1, seed=10)
    assert all(np.array_equal(a.coresets[t], b.coresets[t]) for t in syns)
    assert not all(np.array_equal(a.coresets[t], c.coresets[t]) for t in syns)


def test_index_from_coresets():
    cfg = PtileConfig(0.1, 0.05, box=BOX)
    idx = index_from_coresets("range", cfg, {1: S1, 2: S2}, {1: 0.0, 2: 0.0})
    assert query_range(idx, Rect.interval(3, 8), 0.2, 0.4, 0).ids == [1]


def test_bad_config():
    with pytest.raises(ValueError):
        PtileConfig(0, 0.05)
    with pytest.raises(ValueError):
        PtileConfig(0.1, 1.5)
    with pytest.raises(ValueError):
        query_range(example("range"), Rect.interval(3, 8), 0.5, 0.2)
