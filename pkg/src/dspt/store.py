"""Manifests and the on-disk index format.

An index file is ``MAGIC``, an 8-byte little-endian header length, a JSON
header (sorted keys, so identical builds give identical bytes) and the raw
bytes of the arrays the header lists.  Percentile indexes store their
coresets, preference indexes their score matrix and net; the trees are
rebuilt from those on load.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geom import BoundingBox
from .pref import EpsNet, PrefConfig, PrefIndex
from .ptile.index import PtileConfig, PtileIndex
from .synopsis import ExactSynopsis, HistogramSynopsis, Synopsis, SynopsisError, load_points

MAGIC = b"DSPT1\n"


class IndexFormatError(ValueError):
    pass


@dataclass
class Entry:
    id: int
    path: Path
    format: str
    delta: float | None
    synopsis: str
    grid: int | None = None


@dataclass
class Manifest:
    d: int
    box: BoundingBox | None
    entries: list[Entry]

    def synopses(self) -> dict[int, Synopsis]:
        return {e.id: make_synopsis(e, self.box) for e in self.entries}

    def raw(self) -> dict[int, np.ndarray]:
        out = {}
        for e in self.entries:
            if e.format == "histogram":
                raise SynopsisError(f"dataset {e.id} is only available as a histogram")
            out[e.id] = load_points(e.path, e.format)
        return out


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    obj = json.loads(path.read_text())
    base = path.parent
    box = None
    if obj.get("box") is not None:
        lo, hi = obj["box"]
        box = BoundingBox.from_bounds(lo, hi)
    entries = []
    for i, e in enumerate(obj["datasets"], start=1):
        delta = e.get("delta", None)
        if delta == "unknown":
            delta_v = None
        elif delta is None:
            delta_v = float("nan")  # use the synopsis default
        else:
            delta_v = float(delta)
        syn = e.get("synopsis", "exact")
        grid = None
        if isinstance(syn, dict):
            grid = int(syn["histogram"])
            syn = "histogram"
        elif isinstance(syn, str) and syn.startswith("histogram("):
            grid = int(syn[len("histogram(") : -1])
            syn = "histogram"
        if syn not in ("exact", "exact-coreset", "histogram"):
            raise SynopsisError(f"unknown synopsis kind {syn!r}")
        fmt = e.get("format") or ("jsonl" if str(e["path"]).endswith(".jsonl") else "csv")
        entries.append(Entry(int(e.get("id", i)), base / e["path"], fmt, delta_v, syn, grid))
    ids = [e.id for e in entries]
    if len(set(ids)) != len(ids):
        raise SynopsisError("duplicate dataset ids in manifest")
    return Manifest(int(obj["d"]), box, entries)


def make_synopsis(e: Entry, box: BoundingBox | None) -> Synopsis:
    if e.format == "histogram":
        syn: Synopsis = HistogramSynopsis.from_json(json.loads(e.path.read_text()))
    else:
        pts = load_points(e.path, e.format)
        if e.synopsis == "histogram":
            lo, hi = (box.lo, box.hi) if box is not None else (None, None)
            syn = HistogramSynopsis.from_points(pts, e.grid, lo, hi)
        else:
            syn = ExactSynopsis(pts, exact_coreset=e.synopsis == "exact-coreset")
    if e.delta is None:
        syn.delta = None
    elif e.delta == e.delta:  # not NaN: explicit value
        syn.delta = e.delta
    return syn


# ------------------------------------------------------------------ files


def _write(path: Path, header: dict, arrays: dict[str, np.ndarray]) -> None:
    descr = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        b = a.astype(a.dtype.newbyteorder("<"), copy=False).tobytes()
        descr.append({"name": name, "dtype": a.dtype.str.replace(">", "<").replace("=", "<"),
                      "shape": list(a.shape), "offset": offset, "nbytes": len(b)})
        blobs.append(b)
        offset += len(b)
    header = dict(header, arrays=descr)
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hb)))
        fh.write(hb)
        for b in blobs:
            fh.write(b)


def _read(path: Path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise IndexFormatError(f"{path}: not an index file")
    (hl,) = struct.unpack("<Q", data[len(MAGIC) : len(MAGIC) + 8])
    start = len(MAGIC) + 8
    header = json.loads(data[start : start + hl])
    body = start + hl
    arrays = {}
    for a in header["arrays"]:
        raw = data[body + a["offset"] : body + a["offset"] + a["nbytes"]]
        arrays[a["name"]] = np.frombuffer(raw, dtype=np.dtype(a["dtype"])).reshape(a["shape"]).copy()
    return header, arrays


def _box_json(box: BoundingBox | None):
    return None if box is None else [list(box.lo), list(box.hi)]


def save_index(idx, path: str | Path) -> None:
    path = Path(path)
    if isinstance(idx, PtileIndex):
        c = idx.config
        header = {
            "kind": "ptile",
            "mode": idx.kind,
            "dim": idx.dim,
            "config": {
                "eps": c.eps, "failure": c.failure, "seed": c.seed, "delta": c.delta,
                "sample_const": c.sample_const, "box": _box_json(c.box), "m": c.m, "cap": c.cap,
                "empty_witnesses": c.empty_witnesses, "all_pairs": c.all_pairs,
            },
            "planned_n": idx.planned_n,
            "ids": idx.ids,
            "deltas": {str(t): idx.deltas[t] for t in idx.ids},
        }
        arrays = {f"coreset/{t:012d}": idx.coresets[t] for t in idx.ids}
    elif isinstance(idx, PrefIndex):
        c = idx.config
        header = {
            "kind": "pref",
            "dim": idx.dim,
            "config": {"eps": c.eps, "k": c.k, "delta": c.delta, "m": c.m, "probes": c.probes,
                       "seed": c.seed, "max_trees": c.max_trees},
            "net": {"eps": idx.net.eps, "radius": idx.net.radius},
            "ids": idx.ids,
            "deltas": {str(t): idx.deltas[t] for t in idx.ids},
        }
        arrays = {"gamma": idx.gamma, "net": idx.net.vectors}
    else:
        raise TypeError(f"cannot save {type(idx).__name__}")
    _write(path, header, arrays)


def load_index(path: str | Path):
    header, arrays = _read(Path(path))
    deltas = {int(k): v for k, v in header["deltas"].items()}
    if header["kind"] == "ptile":
        c = dict(header["config"])
        c["box"] = None if c["box"] is None else BoundingBox.from_bounds(*c["box"])
        idx = PtileIndex(header["mode"], PtileConfig(**c), header["dim"])
        idx.planned_n = header["planned_n"]
        idx.add_coresets({t: arrays[f"coreset/{t:012d}"] for t in header["ids"]}, deltas)
        return idx
    if header["kind"] == "pref":
        cfg = PrefConfig(**header["config"])
        net = EpsNet(arrays["net"], header["net"]["eps"], header["net"]["radius"])
        idx = PrefIndex(cfg, header["dim"], net=net)
        gamma = arrays["gamma"]
        idx.add({t: gamma[:, j] for j, t in enumerate(header["ids"])}, deltas)
        return idx
    raise IndexFormatError(f"unknown index kind {header['kind']!r}")
