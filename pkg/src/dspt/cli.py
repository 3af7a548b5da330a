"""Command line: build, query, verify, bench and update indexes.

    dspt build MANIFEST -o INDEX --mode range --eps 0.1 --failure 0.05 --seed 7
    dspt query INDEX QUERY.json
    dspt verify MANIFEST --mode range --trials 200
    dspt bench INDEX WORKLOAD.json
    dspt update INDEX --add MORE.json --remove 3 4

Query results are JSON lines, one per reported dataset.  The number of worker
threads used by ``verify`` and ``bench`` comes from ``DSPT_THREADS``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import oracle
from .expr import PrefPred, PtilePred, ThetaError, combine, rationalize
from .geom import BoundingBox, GeometryError, Rect
from .pref import build_pref_index, query_pref_expression
from .ptile.index import (
    DEFAULT_CAP,
    PtileIndex,
    build_expression_index,
    build_range_index,
    build_threshold_index,
    query_expression,
)
from .store import load_index, load_manifest, save_index
from .synopsis import DEFAULT_SAMPLE_CONST, SynopsisError

log = logging.getLogger("dspt")

MODES = ("threshold", "range", "expression", "pref")
ALIASES = {"ptile-threshold": "threshold", "ptile-range": "range", "ptile-expr": "expression", "pref-conj": "pref"}


class UsageError(ValueError):
    pass


def threads() -> int:
    try:
        return max(1, int(os.environ.get("DSPT_THREADS", "1")))
    except ValueError:
        return 1


# ------------------------------------------------------------------ build


def build_from_manifest(manifest, mode: str, eps: float, failure: float, seed: int, *, m: int = 1, k: int = 1,
                        cap: int = DEFAULT_CAP, sample_const: float = DEFAULT_SAMPLE_CONST,
                        delta: float | None = None):
    mode = ALIASES.get(mode, mode)
    syns = manifest.synopses()
    if mode == "threshold":
        return build_threshold_index(syns, eps, failure, delta, seed, sample_const=sample_const)
    if mode in ("range", "expression"):
        if manifest.box is None:
            raise UsageError("range and expression indexes need a bounding box in the manifest")
        if mode == "range":
            return build_range_index(syns, eps, failure, manifest.box, delta, seed, sample_const=sample_const)
        return build_expression_index(syns, eps, failure, manifest.box, m, delta, seed,
                                      sample_const=sample_const, cap=cap)
    if mode == "pref":
        return build_pref_index(syns, eps, k, delta, m=m, seed=seed)
    raise UsageError(f"unknown mode {mode!r}")


def cmd_build(args) -> int:
    manifest = load_manifest(args.manifest)
    t0 = time.perf_counter()
    idx = build_from_manifest(manifest, args.mode, args.eps, args.failure, args.seed, m=args.m, k=args.k,
                              cap=args.cap, sample_const=args.sample_const, delta=args.delta)
    save_index(idx, args.out)
    print(json.dumps({"index": str(args.out), "mode": args.mode, "datasets": len(idx.ids),
                      "seconds": round(time.perf_counter() - t0, 3)}))
    return 0


# ------------------------------------------------------------------ query


def parse_query(obj: dict):
    """Query JSON to ``(expr, slack)``."""
    kind = obj.get("kind")
    how = obj.get("combine", "and")
    slack = obj.get("slack")
    if kind == "ptile":
        rects = obj["rects"]
        if rects and isinstance(rects[0][0], (int, float)):
            rects = [rects]
        thetas = obj.get("thetas") or [[obj.get("a", 0.0), obj.get("b", 1.0)]]
        if len(thetas) == 1 and len(rects) > 1:
            thetas = thetas * len(rects)
        if len(thetas) != len(rects):
            raise UsageError("need one theta per rectangle")
        preds = [PtilePred(Rect(tuple(lo), tuple(hi)), a, b) for (lo, hi), (a, b) in zip(rects, thetas)]
    elif kind == "pref":
        vecs = obj["vectors"]
        if vecs and isinstance(vecs[0], (int, float)):
            vecs = [vecs]
        ths = obj["thresholds"]
        if not isinstance(ths, list):
            ths = [ths]
        if len(ths) != len(vecs):
            raise UsageError("need one threshold per vector")
        preds = []
        for v, a in zip(vecs, ths):
            v = np.asarray(v, dtype=float)
            preds.append(PrefPred(tuple((v / np.linalg.norm(v)).tolist()), int(obj["k"]), float(a)))
    else:
        raise UsageError(f"unknown query kind {kind!r}")
    return combine(preds, how), slack


def run_query(idx, obj: dict):
    expr, slack = parse_query(obj)
    if isinstance(idx, PtileIndex):
        if obj["kind"] != "ptile":
            raise UsageError("percentile index got a preference query")
        return query_expression(idx, expr, slack)
    if obj["kind"] != "pref":
        raise UsageError("preference index got a percentile query")
    return query_pref_expression(idx, expr, slack)


def _fmt(x):
    if isinstance(x, Fraction):
        return {"value": float(x), "exact": f"{x.numerator}/{x.denominator}"}
    return {"value": float(x)}


def _read_queries(source: str) -> list[dict]:
    text = source if source.lstrip().startswith(("{", "[")) else Path(source).read_text()
    text = text.strip()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        return [json.loads(line) for line in text.splitlines() if line.strip()]
    return obj if isinstance(obj, list) else [obj]


def cmd_query(args) -> int:
    idx = load_index(args.index)
    for qi, obj in enumerate(_read_queries(args.query)):
        if args.slack is not None:
            obj = dict(obj, slack=args.slack)
        res = run_query(idx, obj)
        for t in res.ids:
            print(json.dumps({"query": qi, "id": t, "estimate": [_fmt(e) for e in res.estimates[t]]}))
        print(json.dumps({"query": qi, "reported": len(res.ids), "contract": res.contract, "notes": res.notes}),
              file=sys.stderr)
    return 0


# ------------------------------------------------------------------ verify


def random_ptile_query(rng, box: BoundingBox, d: int, lo_pts, hi_pts) -> PtilePred:
    a = rng.uniform(lo_pts, hi_pts)
    b = rng.uniform(lo_pts, hi_pts)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    lo = np.maximum(lo, np.nextafter(np.asarray(box.lo), np.inf))
    hi = np.minimum(hi, np.nextafter(np.asarray(box.hi), -np.inf))
    ta = float(rng.uniform(0, 1))
    tb = float(rng.uniform(ta, 1))
    return PtilePred(Rect(tuple(lo), tuple(hi)), round(ta, 3), round(tb, 3))


def cmd_verify(args) -> int:
    manifest = load_manifest(args.manifest)
    args.mode = ALIASES.get(args.mode, args.mode)
    raw = manifest.raw()
    repo = oracle.Repository(raw)
    idx = build_from_manifest(manifest, args.mode, args.eps, args.failure, args.seed, m=args.m, k=args.k)
    rng = np.random.default_rng(args.seed)
    allpts = repo.all_points()
    lo_pts, hi_pts = allpts.min(axis=0), allpts.max(axis=0)
    queries = []
    for _ in range(args.trials):
        if args.mode == "pref":
            u = rng.normal(size=repo.dim)
            u /= np.linalg.norm(u)
            queries.append(PrefPred(tuple(u.tolist()), args.k, float(rng.uniform(-1, 1))))
        else:
            box = manifest.box or BoundingBox.around(allpts)
            p = random_ptile_query(rng, box, repo.dim, lo_pts, hi_pts)
            if args.mode == "threshold":
                p = PtilePred(p.rect, p.a, 1.0)
            queries.append(p)
    slack_known = idx.delta is not None
    width = 2 * float(idx.slack(args.slack)[0])

    def check(p):
        res = query_expression(idx, p, args.slack) if isinstance(idx, PtileIndex) else \
            query_pref_expression(idx, p, args.slack)
        truth = oracle.brute_force_query(repo, p)
        got = set(res.ids)
        missing = truth - got
        unsound = []
        for j in got:
            if isinstance(p, PtilePred):
                mval = float(oracle.eval_percentile(raw[j], p.rect))
                if mval < p.a - width - 1e-12 or mval > p.b + width + 1e-12:
                    unsound.append(j)
            else:
                if oracle.eval_topk(raw[j], p.v, p.k) < p.a - width - 1e-12:
                    unsound.append(j)
        return len(missing), len(unsound), len(got)

    with ThreadPoolExecutor(threads()) as pool:
        results = list(pool.map(check, queries))
    failed = sum(1 for miss, _, _ in results if miss)
    report = {
        "mode": args.mode,
        "trials": len(queries),
        "completeness_violations": sum(r[0] for r in results),
        "soundness_violations": sum(r[1] for r in results),
        "trials_with_missing": failed,
        "empirical_failure_rate": failed / max(1, len(queries)),
        "failure_bound": args.failure,
        "slack_width": width,
        "delta_known": slack_known,
    }
    print(json.dumps(report))
    bad = report["completeness_violations"] or report["soundness_violations"]
    return 1 if (args.strict and bad) else 0


# ------------------------------------------------------------------ bench


def linear_scan(idx, obj: dict) -> list[int]:
    """Answer a query by visiting every dataset, using the same coresets or scores."""
    expr, slack = parse_query(obj)
    if isinstance(idx, PtileIndex):
        s = idx.slack(slack)[0]
        if not isinstance(expr, PtilePred):
            raise UsageError("the scan baseline handles single predicates")
        fa, fb = rationalize(expr.a), rationalize(expr.b)
        upper = Fraction(1) + s if idx.kind == "threshold" else fb + s
        return oracle.linear_scan_ptile(idx.coresets, expr.rect, fa - s, upper)
    s = idx.slack(slack)[0]
    from .pref import nearest_net_vector

    v = nearest_net_vector(idx.net, expr.v)
    return [t for j, t in enumerate(idx.ids) if idx.gamma[v, j] >= expr.a - s]


def bench_queries(idx, queries: list[dict], repeats: int = 3) -> dict:
    rows = []
    for obj in queries:
        best = float("inf")
        res = None
        for _ in range(repeats):
            t0 = time.perf_counter()
            res = run_query(idx, obj)
            best = min(best, time.perf_counter() - t0)
        base = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            scan_ids = linear_scan(idx, obj)
            base = min(base, time.perf_counter() - t0)
        if set(scan_ids) != set(res.ids):
            raise AssertionError("index and scan disagree")
        rows.append({"seconds": best, "scan_seconds": base, "out": len(res.ids),
                     "points": res.stats.points,
                     "nodes": res.stats.nodes})
    if not rows:
        return {"queries": 0}
    return {
        "queries": len(rows),
        "median_seconds": statistics.median(r["seconds"] for r in rows),
        "median_scan_seconds": statistics.median(r["scan_seconds"] for r in rows),
        "speedup": statistics.median(r["scan_seconds"] for r in rows) / max(1e-12, statistics.median(r["seconds"] for r in rows)),
        "rows": rows,
    }


def cmd_bench(args) -> int:
    idx = load_index(args.index)
    report = bench_queries(idx, _read_queries(args.workload), args.repeats)
    print(json.dumps(report))
    return 0


# ------------------------------------------------------------------ update


def cmd_update(args) -> int:
    idx = load_index(args.index)
    for t in args.remove or []:
        idx.remove(int(t))
    if args.add:
        manifest = load_manifest(args.add)
        for t, syn in manifest.synopses().items():
            idx.insert(t, syn)
    save_index(idx, args.out or args.index)
    print(json.dumps({"index": str(args.out or args.index), "datasets": len(idx.ids)}))
    return 0


# ------------------------------------------------------------------ main


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dspt", description="Dataset search by percentile and preference queries.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, build=True):
        p.add_argument("--mode", choices=MODES + tuple(ALIASES), default="range")
        p.add_argument("--eps", type=float, default=0.1)
        p.add_argument("--failure", type=float, default=0.05)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--m", type=int, default=1, help="predicates per conjunction tree")
        p.add_argument("--k", type=int, default=1, help="rank for preference indexes")
        if build:
            p.add_argument("--cap", type=int, default=DEFAULT_CAP)
            p.add_argument("--sample-const", type=float, default=DEFAULT_SAMPLE_CONST)
            p.add_argument("--delta", type=float, default=None, help="override the synopsis error bound")

    p = sub.add_parser("build", help="build an index from a manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", required=True)
    common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="run queries against an index")
    p.add_argument("index")
    p.add_argument("query", help="JSON file, JSON lines file or inline JSON")
    p.add_argument("--slack", type=float, default=None)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("verify", help="compare an index with brute force on random queries")
    p.add_argument("manifest")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--slack", type=float, default=None)
    p.add_argument("--strict", action="store_true", help="exit 1 on any violation")
    common(p, build=False)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="time a workload against a linear scan")
    p.add_argument("index")
    p.add_argument("workload")
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("update", help="insert or remove datasets")
    p.add_argument("index")
    p.add_argument("--add", help="manifest of datasets to insert")
    p.add_argument("--remove", nargs="*", type=int)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_update)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ThetaError, GeometryError, SynopsisError, ValueError, KeyError, OSError) as exc:
        print(f"dspt: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
