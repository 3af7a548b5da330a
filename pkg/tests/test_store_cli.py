import json
import logging

import numpy as np
import pytest

from dspt.cli import main
from dspt.geom import Rect
from dspt.ptile import query_range, query_threshold
from dspt.pref import query_pref
from dspt.store import IndexFormatError, load_index, load_manifest, save_index
from dspt.synopsis import HistogramSynopsis, SynopsisError


@pytest.fixture
def fixture_dir(tmp_path):
    (tmp_path / "s1.csv").write_text("x\n1\n7\n9\n")
    (tmp_path / "s2.jsonl").write_text("[2]\n[4]\n[6]\n[10]\n")
    manifest = {"d": 1, "box": [[-1], [11]], "datasets": [
        {"id": 1, "path": "s1.csv", "synopsis": "exact-coreset", "delta": 0},
        {"id": 2, "path": "s2.jsonl", "synopsis": "exact-coreset", "delta": 0},
    ]}
    (tmp_path / "m.json").write_text(json.dumps(manifest))
    return tmp_path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, [json.loads(x) for x in out.splitlines() if x.strip()], err


def test_manifest_variants(tmp_path):
    rng = np.random.default_rng(0)
    np.savetxt(tmp_path / "a.csv", rng.uniform(0, 1, (20, 2)), delimiter=",")
    h = HistogramSynopsis.from_points(rng.uniform(0, 1, (30, 2)), 3, [0, 0], [1, 1])
    (tmp_path / "h.json").write_text(json.dumps(h.to_json()))
    (tmp_path / "m.json").write_text(json.dumps({"d": 2, "box": [[-1, -1], [2, 2]], "datasets": [
        {"path": "a.csv"},
        {"path": "a.csv", "synopsis": {"histogram": 4}},
        {"path": "a.csv", "synopsis": "histogram(2)", "delta": "unknown"},
        {"path": "h.json", "format": "histogram"},
        {"path": "a.csv", "delta": 0.25},
    ]}))
    m = load_manifest(tmp_path / "m.json")
    syns = m.synopses()
    assert [e.id for e in m.entries] == [1, 2, 3, 4, 5]
    assert syns[1].delta == 0 and syns[3].delta is None and syns[5].delta == 0.25
    assert syns[2].kind == "histogram" and syns[4].cells == h.cells
    with pytest.raises(SynopsisError):
        m.raw()
    (tmp_path / "bad.json").write_text(json.dumps({"d": 2, "datasets": [{"path": "a.csv", "synopsis": "magic"}]}))
    with pytest.raises(SynopsisError):
        load_manifest(tmp_path / "bad.json")


def test_save_load_roundtrip(fixture_dir):
    m = load_manifest(fixture_dir / "m.json")
    from dspt.cli import build_from_manifest

    R = Rect.interval(3, 8)
    for mode in ("threshold", "range", "expression"):
        idx = build_from_manifest(m, mode, 0.005, 0.05, 1)
        save_index(idx, fixture_dir / f"{mode}.idx")
        back = load_index(fixture_dir / f"{mode}.idx")
        assert back.ids == idx.ids and back.kind == idx.kind
        if mode == "threshold":
            assert sorted(query_threshold(back, R, 0.2).ids) == [1, 2]
        else:
            assert query_range(back, R, 0.2, 0.4).ids == [1]
    (fixture_dir / "junk.idx").write_bytes(b"nope")
    with pytest.raises(IndexFormatError):
        load_index(fixture_dir / "junk.idx")


def test_pref_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    ds = []
    for i in range(4):
        np.savetxt(tmp_path / f"u{i}.csv", rng.uniform(-0.6, 0.6, (5, 3)), delimiter=",")
        ds.append({"path": f"u{i}.csv"})
    (tmp_path / "m.json").write_text(json.dumps({"d": 3, "datasets": ds}))
    from dspt.cli import build_from_manifest

    idx = build_from_manifest(load_manifest(tmp_path / "m.json"), "pref", 0.3, 0.05, 0, k=2)
    save_index(idx, tmp_path / "p.idx")
    back = load_index(tmp_path / "p.idx")
    assert np.array_equal(back.gamma, idx.gamma) and np.array_equal(back.net.vectors, idx.net.vectors)
    u = np.array([0.6, 0.0, 0.8])
    assert query_pref(back, u, 0.1).ids == query_pref(idx, u, 0.1).ids


def test_cli_build_logs_family_sizes(fixture_dir, capsys, caplog):
    with caplog.at_level(logging.INFO):
        code, out, _ = run(capsys, "build", fixture_dir / "m.json", "-o", fixture_dir / "t.idx",
                           "--mode", "ptile-threshold", "--eps", 0.005)
    assert code == 0 and out[0]["datasets"] == 2
    assert "dataset 1: 6 rectangles" in caplog.text and "dataset 2: 10 rectangles" in caplog.text


def test_cli_rebuild_is_byte_identical(fixture_dir, capsys):
    for name in ("a.idx", "b.idx"):
        assert run(capsys, "build", fixture_dir / "m.json", "-o", fixture_dir / name, "--seed", 4)[0] == 0
    assert (fixture_dir / "a.idx").read_bytes() == (fixture_dir / "b.idx").read_bytes()


def test_cli_query(fixture_dir, capsys):
    run(capsys, "build", fixture_dir / "m.json", "-o", fixture_dir / "r.idx", "--eps", 0.005)
    code, out, err = run(capsys, "query", fixture_dir / "r.idx", '{"kind": "ptile", "rects": [[3], [8]], "a": 0.2}')
    assert code == 0 and sorted(o["id"] for o in out) == [1, 2]
    assert "contract" in err
    q = {"kind": "ptile", "rects": [[[3], [8]]], "thetas": [[0.2, 0.4]]}
    code, out, _ = run(capsys, "query", fixture_dir / "r.idx", json.dumps(q))
    assert [o["id"] for o in out] == [1] and out[0]["estimate"][0]["exact"] == "1/3"
    code, out, _ = run(capsys, "query", fixture_dir / "r.idx", '{"kind": "ptile", "rects": [[4.5], [5.5]], "a": 0.9}')
    assert code == 0 and out == []
    code, _, err = run(capsys, "query", fixture_dir / "r.idx", '{"kind": "ptile", "rects": [[3], [8]], "a": 2, "b": 3}')
    assert code != 0 and "error" in err
    code, _, err = run(capsys, "query", fixture_dir / "r.idx", '{"kind": "pref", "vectors": [1], "thresholds": 0, "k": 1}')
    assert code != 0


def test_cli_dimension_mismatch(fixture_dir, capsys):
    (fixture_dir / "s3.csv").write_text("1,2\n3,4\n")
    m = json.loads((fixture_dir / "m.json").read_text())
    m["datasets"].append({"id": 3, "path": "s3.csv"})
    (fixture_dir / "m2.json").write_text(json.dumps(m))
    code, _, err = run(capsys, "build", fixture_dir / "m2.json", "-o", fixture_dir / "x.idx", "--mode", "threshold")
    assert code != 0


def test_cli_update(fixture_dir, capsys):
    run(capsys, "build", fixture_dir / "m.json", "-o", fixture_dir / "r.idx", "--eps", 0.005)
    (fixture_dir / "s3.csv").write_text("5\n6\n")
    (fixture_dir / "add.json").write_text(json.dumps({"d": 1, "datasets": [
        {"id": 3, "path": "s3.csv", "synopsis": "exact-coreset"}]}))
    q = '{"kind": "ptile", "rects": [[3], [8]], "a": 0.2}'
    before = sorted(o["id"] for o in run(capsys, "query", fixture_dir / "r.idx", q)[1])
    assert run(capsys, "update", fixture_dir / "r.idx", "--add", fixture_dir / "add.json")[0] == 0
    assert sorted(o["id"] for o in run(capsys, "query", fixture_dir / "r.idx", q)[1]) == [1, 2, 3]
    assert run(capsys, "update", fixture_dir / "r.idx", "--remove", 3)[0] == 0
    assert sorted(o["id"] for o in run(capsys, "query", fixture_dir / "r.idx", q)[1]) == before
    assert run(capsys, "update", fixture_dir / "r.idx", "--remove", 2)[0] == 0
    assert [o["id"] for o in run(capsys, "query", fixture_dir / "r.idx", q)[1]] == [1]
    assert run(capsys, "update", fixture_dir / "r.idx", "--remove", 42)[0] != 0


def test_cli_verify_and_bench(fixture_dir, capsys, monkeypatch):
    monkeypatch.setenv("DSPT_THREADS", "3")
    code, out, _ = run(capsys, "verify", fixture_dir / "m.json", "--mode", "range", "--trials", 50, "--eps", 0.005,
                       "--strict")
    assert code == 0 and out[0]["completeness_violations"] == 0 and out[0]["soundness_violations"] == 0
    run(capsys, "build", fixture_dir / "m.json", "-o", fixture_dir / "r.idx")
    code, out, _ = run(capsys, "bench", fixture_dir / "r.idx", "[]")
    assert code == 0 and out[0]["queries"] == 0
    (fixture_dir / "w.jsonl").write_text('{"kind": "ptile", "rects": [[3], [8]], "a": 0.2}\n'
                                         '{"kind": "ptile", "rects": [[0], [2]], "a": 0.5, "b": 1}\n')
    code, out, _ = run(capsys, "bench", fixture_dir / "r.idx", fixture_dir / "w.jsonl", "--repeats", 1)
    assert code == 0 and out[0]["queries"] == 2
