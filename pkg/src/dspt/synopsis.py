"""Per-dataset synopses: the only access the indexes have to the data.

A synopsis answers two calls, ``sample(k, rng)`` (i.i.d. draws from the
distribution it represents) and ``score(v, k)`` (k-th largest inner product
with ``v``), and carries an error bound ``delta``: how far any rectangle
measure (or top-k score) of that distribution can be from the true one.
``delta=None`` means the bound is unknown.
"""

from __future__ import annotations

import csv
import json
import math
from abc import ABC, abstractmethod
from pathlib import Path

import numpy as np

DEFAULT_SAMPLE_CONST = 0.5


class SynopsisError(ValueError):
    pass


def coreset_size(eps: float, failure: float, n_datasets: int, c: float = DEFAULT_SAMPLE_CONST) -> int:
    """``ceil(c * eps**-2 * ln(N / failure))`` samples per dataset."""
    if not 0 < eps < 1:
        raise SynopsisError(f"eps must lie in (0, 1), got {eps}")
    if not 0 < failure < 1:
        raise SynopsisError(f"failure probability must lie in (0, 1), got {failure}")
    if n_datasets < 1:
        raise SynopsisError("need at least one dataset")
    if c <= 0:
        raise SynopsisError("sample constant must be positive")
    return math.ceil(c * eps**-2 * math.log(n_datasets / failure))


def _check_count(k: int) -> None:
    if k < 1:
        raise SynopsisError(f"sample size must be at least 1, got {k}")


class Synopsis(ABC):
    kind = "abstract"

    def __init__(self, dim: int, delta: float | None):
        if delta is not None and delta < 0:
            raise SynopsisError("delta must be non-negative")
        self.dim = dim
        self.delta = delta
        self.exact_coreset = False

    @property
    @abstractmethod
    def support_size(self) -> int:
        """Number of points the synopsis stands for."""

    @abstractmethod
    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray: ...

    @abstractmethod
    def score(self, v, k: int) -> float: ...

    @property
    def pref_delta(self) -> float | None:
        return self.delta

    def coreset(self, eps: float, failure: float, n_datasets: int, rng: np.random.Generator,
                c: float = DEFAULT_SAMPLE_CONST) -> np.ndarray:
        """An (eps + delta)-sample for rectangles with probability >= 1 - failure/N."""
        return self.sample(coreset_size(eps, failure, n_datasets, c), rng)

    def _check_score_args(self, v, k: int) -> np.ndarray:
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.shape[0] != self.dim:
            raise SynopsisError("direction has the wrong dimension")
        if not abs(float(np.linalg.norm(v)) - 1.0) < 1e-9:
            raise SynopsisError("direction must be a unit vector")
        if not 1 <= k <= self.support_size:
            raise SynopsisError(f"k={k} outside [1, {self.support_size}]")
        return v


class ExactSynopsis(Synopsis):
    """Holds the dataset itself.

    With ``exact_coreset=True`` the coreset is the dataset, so every
    rectangle weight is exact; otherwise coresets are drawn uniformly with
    replacement.
    """

    kind = "exact"

    def __init__(self, points, exact_coreset: bool = False, delta: float | None = 0.0):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise SynopsisError("need a non-empty (n, d) array of points")
        if not np.all(np.isfinite(pts)):
            raise SynopsisError("points must be finite")
        super().__init__(pts.shape[1], delta)
        self.points = pts
        self.exact_coreset = exact_coreset
        if exact_coreset:
            self.kind = "exact-coreset"

    @property
    def support_size(self) -> int:
        return self.points.shape[0]

    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        _check_count(k)
        return self.points[rng.integers(0, len(self.points), size=k)]

    def coreset(self, eps, failure, n_datasets, rng, c=DEFAULT_SAMPLE_CONST) -> np.ndarray:
        if self.exact_coreset:
            return self.points.copy()
        return super().coreset(eps, failure, n_datasets, rng, c)

    def score(self, v, k: int) -> float:
        v = self._check_score_args(v, k)
        s = self.points @ v
        return float(np.partition(s, len(s) - k)[len(s) - k])


class HistogramSynopsis(Synopsis):
    """Uniform grid over a box with exact rational cell masses ``count / n``.

    Sampling picks a cell by mass and a point uniformly inside it.  The
    certified rectangle error is the mass two cut layers per axis can carry:
    cells wholly inside or outside a rectangle contribute no error, and the
    cells a rectangle cuts lie in at most two layers along each axis.
    """

    kind = "histogram"

    def __init__(self, lo, hi, g, cells: dict[int, int], n: int, delta: float | None = None):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        d = lo.shape[0]
        g = np.broadcast_to(np.asarray(g, dtype=np.int64), (d,)).copy()
        if np.any(hi <= lo) or np.any(g < 1):
            raise SynopsisError("histogram needs a box with positive extent and g >= 1")
        cells = {int(k): int(c) for k, c in cells.items() if int(c)}
        if sum(cells.values()) != n or n < 1 or any(c < 0 for c in cells.values()):
            raise SynopsisError("cell counts must be non-negative and sum to n >= 1")
        if cells and max(cells) >= int(np.prod(g)):
            raise SynopsisError("cell index out of range")
        self.lo, self.hi, self.g, self.n = lo, hi, g, n
        self.cells = dict(sorted(cells.items()))
        self._flat = np.array(list(self.cells), dtype=np.int64)
        self._count = np.array(list(self.cells.values()), dtype=np.int64)
        self._idx = np.stack(np.unravel_index(self._flat, tuple(g)), axis=1)
        self.width = (hi - lo) / g
        self.layer_bound = self._layer_bound()
        super().__init__(d, self.layer_bound if delta is None else delta)

    @classmethod
    def from_points(cls, points, g, lo=None, hi=None) -> HistogramSynopsis:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or len(pts) == 0:
            raise SynopsisError("need a non-empty (n, d) array of points")
        lo = pts.min(axis=0) if lo is None else np.asarray(lo, dtype=float)
        hi = pts.max(axis=0) if hi is None else np.asarray(hi, dtype=float)
        hi = np.where(hi > lo, hi, lo + 1.0)
        if np.any(pts < lo) or np.any(pts > hi):
            raise SynopsisError("points fall outside the histogram box")
        d = pts.shape[1]
        gg = np.broadcast_to(np.asarray(g, dtype=np.int64), (d,))
        idx = np.floor((pts - lo) / (hi - lo) * gg).astype(np.int64)
        idx = np.minimum(idx, gg - 1)
        flat = np.ravel_multi_index(tuple(idx.T), tuple(gg))
        keys, counts = np.unique(flat, return_counts=True)
        return cls(lo, hi, gg, dict(zip(keys.tolist(), counts.tolist())), len(pts))

    def _layer_bound(self) -> float:
        total = 0
        for h in range(len(self.g)):
            layers = np.bincount(self._idx[:, h], weights=self._count, minlength=int(self.g[h]))
            total += 2 * int(layers.max())
        return min(1.0, total / self.n)

    @property
    def support_size(self) -> int:
        return self.n

    @property
    def pref_delta(self) -> float:
        return float(np.linalg.norm(self.width))

    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        _check_count(k)
        pick = rng.choice(len(self._flat), size=k, p=self._count / self.n)
        u = rng.random((k, self.dim))
        return self.lo + (self._idx[pick] + u) * self.width

    def score(self, v, k: int) -> float:
        """k-th largest score with every point moved to its cell's best corner."""
        v = self._check_score_args(v, k)
        clo = self.lo + self._idx * self.width
        chi = clo + self.width
        best = np.maximum(clo * v, chi * v).sum(axis=1)
        order = np.argsort(-best, kind="stable")
        cum = np.cumsum(self._count[order])
        return float(best[order][np.searchsorted(cum, k)])

    def measure(self, lo, hi) -> float:
        """Mass the histogram puts in the closed box ``[lo, hi]``."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        clo = self.lo + self._idx * self.width
        chi = clo + self.width
        frac = np.clip((np.minimum(chi, hi) - np.maximum(clo, lo)) / self.width, 0.0, 1.0)
        return float((self._count * frac.prod(axis=1)).sum() / self.n)

    def probe_error(self, points, n_probes: int, rng: np.random.Generator) -> float:
        """Largest observed measure error over random probe rectangles."""
        pts = np.asarray(points, dtype=float)
        worst = 0.0
        for _ in range(n_probes):
            a = self.lo + rng.random(self.dim) * (self.hi - self.lo)
            b = self.lo + rng.random(self.dim) * (self.hi - self.lo)
            lo, hi = np.minimum(a, b), np.maximum(a, b)
            true = np.all((pts >= lo) & (pts <= hi), axis=1).mean()
            worst = max(worst, abs(true - self.measure(lo, hi)))
        return worst

    def to_json(self) -> dict:
        return {
            "lo": self.lo.tolist(),
            "hi": self.hi.tolist(),
            "g": self.g.tolist(),
            "n": self.n,
            "cells": {str(k): [c, self.n] for k, c in self.cells.items()},
            "delta": self.delta,
        }

    @classmethod
    def from_json(cls, obj: dict) -> HistogramSynopsis:
        cells = {}
        for k, v in obj["cells"].items():
            c, n = (v, obj["n"]) if isinstance(v, int) else v
            if n != obj["n"]:
                raise SynopsisError("cell masses must share the denominator n")
            cells[int(k)] = int(c)
        return cls(obj["lo"], obj["hi"], obj["g"], cells, int(obj["n"]), obj.get("delta"))


def load_points(path: str | Path, fmt: str | None = None) -> np.ndarray:
    """Read a CSV (optional header row) or JSONL (one array per line) dataset."""
    path = Path(path)
    fmt = fmt or ("jsonl" if path.suffix in (".jsonl", ".json") else "csv")
    rows: list[list[float]] = []
    if fmt == "csv":
        with path.open(newline="") as fh:
            for i, row in enumerate(csv.reader(fh)):
                if not row or all(not c.strip() for c in row):
                    continue
                try:
                    rows.append([float(c) for c in row])
                except ValueError:
                    if i == 0 and not rows:
                        continue  # header
                    raise SynopsisError(f"{path}: non-numeric row {i + 1}")
    elif fmt == "jsonl":
        with path.open() as fh:
            for i, line in enumerate(fh):
                if line.strip():
                    rows.append([float(x) for x in json.loads(line)])
    else:
        raise SynopsisError(f"unknown dataset format {fmt!r}")
    if not rows:
        raise SynopsisError(f"{path}: empty dataset")
    if len({len(r) for r in rows}) != 1:
        raise SynopsisError(f"{path}: rows have different lengths")
    pts = np.array(rows, dtype=float)
    if not np.all(np.isfinite(pts)):
        raise SynopsisError(f"{path}: non-finite coordinate")
    return pts
