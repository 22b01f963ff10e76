"""Frequency grids, operating points, frozen FRF datasets and weighting filters.

Everything here is an immutable value: arrays are copied on construction and
flagged read-only, so instances can be shared between workers freely.

Two on-disk formats are supported for datasets:

* CSV, one row per (omega, p) cell with the fixed column order
  ``omega_rad_s, p, re_N, im_N, re_D, im_D``.  An optional first comment line
  ``# domain=discrete Ts=0.005 p_range=0,1`` carries the grid metadata.
* JSON, ``{"grid": {"domain", "Ts", "omegas"}, "points", "p_range",
  "samples": {"N": [[[re, im], ...], ...], "D": ...}}`` with samples indexed
  ``[frequency][point]``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import MissingCell, NanSample, NonMonotoneGrid, UnknownChannel

CHANNELS = ("S", "SG", "KS", "T")
CSV_COLUMNS = ("omega_rad_s", "p", "re_N", "im_N", "re_D", "im_D")


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FrequencyGrid:
    """Ordered angular frequencies in rad/s.

    ``Ts is None`` means a continuous-time grid; otherwise frequencies are
    evaluated on the unit circle as ``exp(1j * omega * Ts)``.
    """

    omegas: np.ndarray
    Ts: float | None = None

    def __post_init__(self):
        w = _frozen(np.atleast_1d(self.omegas))
        if w.ndim != 1 or w.size == 0:
            raise ValueError("frequency grid must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(w)):
            raise NanSample("non-finite frequency in grid")
        if np.any(w < 0):
            raise NonMonotoneGrid("negative frequency in grid")
        if np.any(np.diff(w) <= 0):
            raise NonMonotoneGrid("grid frequencies must be strictly increasing")
        if self.Ts is not None:
            if not self.Ts > 0:
                raise ValueError("sampling time must be positive")
            nyq = math.pi / self.Ts
            if w[-1] > nyq * (1 + 1e-12):
                raise NonMonotoneGrid(
                    f"frequency {w[-1]:g} rad/s exceeds Nyquist {nyq:g} rad/s"
                )
        object.__setattr__(self, "omegas", w)

    @property
    def domain(self) -> str:
        return "continuous" if self.Ts is None else "discrete"

    @property
    def discrete(self) -> bool:
        return self.Ts is not None

    def __len__(self) -> int:
        return self.omegas.size

    def points(self) -> np.ndarray:
        """Evaluation points ``z = exp(i w Ts)`` or ``s = i w``."""
        if self.Ts is None:
            return 1j * self.omegas
        return np.exp(1j * self.omegas * self.Ts)

    @classmethod
    def logspace(cls, lo: float, hi: float, n: int, Ts: float | None = None):
        w = np.logspace(np.log10(lo), np.log10(hi), n)
        # pin the endpoints exactly; logspace can overshoot Nyquist by an ulp
        w[0], w[-1] = lo, hi
        return cls(w, Ts)


@dataclass(frozen=True)
class OperatingPointSet:
    points: np.ndarray
    p_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        p = _frozen(np.atleast_1d(self.points))
        lo, hi = (float(v) for v in self.p_range)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("operating point set must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(p)):
            raise NanSample("non-finite operating point")
        if lo > hi:
            raise ValueError("scheduling range lower bound exceeds upper bound")
        if np.any((p < lo) | (p > hi)):
            raise ValueError(f"operating points must lie in [{lo}, {hi}]")
        if np.unique(p).size != p.size:
            raise ValueError("operating points must be distinct")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "p_range", (lo, hi))

    def __len__(self) -> int:
        return self.points.size

    @classmethod
    def equidistant(cls, n: int, p_range=(0.0, 1.0)):
        return cls(np.linspace(p_range[0], p_range[1], n), p_range)


@dataclass(frozen=True)
class FrfDataset:
    """Frozen FRF samples of the coprime plant factors.

    ``N`` and ``D`` have shape ``(len(grid), len(points))``.
    """

    grid: FrequencyGrid
    points: OperatingPointSet
    N: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        N = _frozen(self.N, complex)
        D = _frozen(self.D, complex)
        shape = (len(self.grid), len(self.points))
        if N.shape != shape or D.shape != shape:
            raise MissingCell(f"sample arrays must have shape {shape}, got {N.shape}/{D.shape}")
        if not (np.all(np.isfinite(N)) and np.all(np.isfinite(D))):
            raise NanSample("dataset contains non-finite samples")
        if np.min(np.abs(N) + np.abs(D)) <= 0:
            raise ValueError("factors vanish simultaneously; not a coprime pair")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "D", D)

    @property
    def shape(self) -> tuple[int, int]:
        return self.N.shape

    @property
    def G(self) -> np.ndarray:
        """Plant FRF ``N / D`` (inf where ``D`` vanishes)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.N / self.D

    def point_index(self, p: float) -> int:
        idx = np.flatnonzero(np.isclose(self.points.points, p, rtol=0, atol=1e-12))
        if idx.size == 0:
            raise KeyError(f"operating point {p} not in dataset")
        return int(idx[0])


# --------------------------------------------------------------------------
# weights


@dataclass(frozen=True)
class RationalWeight:
    """Rational filter with coefficients in descending powers of z (or s).

    ``Ts is None`` marks a continuous-time weight.
    """

    num: np.ndarray
    den: np.ndarray
    Ts: float | None = None

    def __post_init__(self):
        num = _frozen(np.atleast_1d(np.trim_zeros(np.asarray(self.num, float), "f")))
        den = _frozen(np.atleast_1d(np.trim_zeros(np.asarray(self.den, float), "f")))
        if den.size == 0 or not np.any(den):
            raise ValueError("weight denominator is zero")
        if num.size == 0:
            num = _frozen([0.0])
        if num.size > den.size:
            raise ValueError("weight must be proper")
        roots = np.roots(den)
        if self.Ts is None:
            stable = np.all(roots.real < 0)
        else:
            stable = np.all(np.abs(roots) < 1)
        if not stable:
            raise ValueError(f"weight denominator roots {roots} are not strictly stable")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    def __call__(self, lam) -> np.ndarray:
        lam = np.asarray(lam, complex)
        return np.polyval(self.num, lam) / np.polyval(self.den, lam)

    def frf(self, grid: FrequencyGrid) -> np.ndarray:
        if (self.Ts is None) != (grid.Ts is None) or (
            self.Ts is not None and not math.isclose(self.Ts, grid.Ts)
        ):
            raise ValueError("weight and grid time domains differ")
        return self(grid.points())

    def to_dict(self) -> dict:
        return {"num": self.num.tolist(), "den": self.den.tolist()}


@dataclass(frozen=True)
class SampledWeight:
    """Weight given directly as complex FRF samples on a grid."""

    grid: FrequencyGrid
    samples: np.ndarray

    def __post_init__(self):
        s = _frozen(self.samples, complex)
        if s.shape != (len(self.grid),):
            raise ValueError("weight samples must match the grid length")
        if not np.all(np.isfinite(s)):
            raise NanSample("weight samples must be finite")
        object.__setattr__(self, "samples", s)

    def frf(self, grid: FrequencyGrid) -> np.ndarray:
        if len(grid) != len(self.grid) or not np.allclose(grid.omegas, self.grid.omegas, rtol=1e-12):
            raise ValueError("sampled weight is defined on a different grid")
        return np.array(self.samples)

    def to_dict(self) -> dict:
        return {"frf": {"re": self.samples.real.tolist(), "im": self.samples.imag.tolist()}}


Weight = Union[RationalWeight, SampledWeight]


@dataclass(frozen=True)
class WeightSet:
    """One weighting filter per four-block channel (subset of S, SG, KS, T)."""

    weights: Mapping[str, Weight] = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.weights) - set(CHANNELS)
        if unknown:
            raise UnknownChannel(f"unknown channel(s) {sorted(unknown)}")
        object.__setattr__(self, "weights", dict(self.weights))

    @property
    def channels(self) -> tuple[str, ...]:
        return tuple(c for c in CHANNELS if c in self.weights)

    def __getitem__(self, channel: str) -> Weight:
        try:
            return self.weights[channel]
        except KeyError:
            raise UnknownChannel(f"no weight for channel {channel!r}") from None

    def to_json(self, Ts: float | None) -> str:
        return json.dumps(
            {"Ts": Ts, "channels": {c: self.weights[c].to_dict() for c in self.channels}},
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str, grid: FrequencyGrid | None = None) -> "WeightSet":
        obj = json.loads(text)
        Ts = obj.get("Ts")
        out = {}
        for ch, spec in obj["channels"].items():
            if "frf" in spec:
                if grid is None:
                    raise ValueError("sampled weights need the dataset grid")
                samples = np.asarray(spec["frf"]["re"]) + 1j * np.asarray(spec["frf"]["im"])
                out[ch] = SampledWeight(grid, samples)
            else:
                out[ch] = RationalWeight(spec["num"], spec["den"], Ts)
        return cls(out)


def weight_frf(weights: WeightSet, channel: str, grid: FrequencyGrid) -> np.ndarray:
    """Evaluate the weight of ``channel`` at every grid frequency."""
    if channel not in CHANNELS:
        raise UnknownChannel(f"unknown channel {channel!r}")
    return weights[channel].frf(grid)


# --------------------------------------------------------------------------
# serialization


def _csv_header(ds: FrfDataset) -> str:
    lo, hi = ds.points.p_range
    meta = f"# domain={ds.grid.domain}"
    if ds.grid.Ts is not None:
        meta += f" Ts={ds.grid.Ts!r}"
    return meta + f" p_range={lo!r},{hi!r}\n"


def dumps_csv(ds: FrfDataset) -> str:
    buf = io.StringIO()
    buf.write(_csv_header(ds))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for j, p in enumerate(ds.points.points):
        for k, w in enumerate(ds.grid.omegas):
            n, d = ds.N[k, j], ds.D[k, j]
            writer.writerow([repr(float(v)) for v in (w, p, n.real, n.imag, d.real, d.imag)])
    return buf.getvalue()


def dumps_json(ds: FrfDataset) -> str:
    def pairs(a):
        return [[[float(v.real), float(v.imag)] for v in row] for row in a]

    return json.dumps(
        {
            "grid": {"domain": ds.grid.domain, "Ts": ds.grid.Ts, "omegas": ds.grid.omegas.tolist()},
            "points": ds.points.points.tolist(),
            "p_range": list(ds.points.p_range),
            "samples": {"N": pairs(ds.N), "D": pairs(ds.D)},
        }
    )


def save_frf_dataset(ds: FrfDataset, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = format or _guess_format(path)
    text = dumps_csv(ds) if fmt == "csv" else dumps_json(ds)
    path.write_text(text, encoding="utf-8")


def _guess_format(path: Path) -> str:
    suffix = path.suffix.lower().lstrip(".")
    if suffix not in ("csv", "json"):
        raise ValueError(f"cannot infer dataset format from {path.name!r}; use .csv or .json")
    return suffix


def _parse_meta(line: str) -> dict:
    meta = {}
    for tok in line.lstrip("#").split():
        if "=" in tok:
            k, v = tok.split("=", 1)
            meta[k] = v
    return meta


def loads_csv(text: str, Ts: float | None = None, p_range: Sequence[float] | None = None) -> FrfDataset:
    lines = text.splitlines()
    meta = {}
    while lines and lines[0].startswith("#"):
        meta.update(_parse_meta(lines.pop(0)))
    rows = list(csv.reader(lines))
    if not rows:
        raise MissingCell("empty dataset file")
    if tuple(c.strip() for c in rows[0]) == CSV_COLUMNS:
        rows = rows[1:]
    try:
        table = np.array([[float(v) for v in r] for r in rows if r], dtype=float)
    except ValueError as exc:
        raise NanSample(f"unparseable numeric field: {exc}") from None
    if table.ndim != 2 or table.shape[1] != 6:
        raise MissingCell("each row needs 6 columns: " + ", ".join(CSV_COLUMNS))
    if np.isnan(table).any():
        raise NanSample("dataset file contains NaN fields")

    if Ts is None and meta.get("domain", "discrete") == "discrete" and "Ts" in meta:
        Ts = float(meta["Ts"])
    if p_range is None and "p_range" in meta:
        p_range = tuple(float(v) for v in meta["p_range"].split(","))

    # blocks of rows per operating point, in file order
    p = table[:, 1]
    pts = sorted(set(p.tolist()))
    blocks = {}
    for pv in pts:
        sel = table[p == pv]
        if np.any(np.diff(sel[:, 0]) <= 0):
            raise NonMonotoneGrid(f"frequencies not strictly increasing for p={pv}")
        blocks[pv] = sel
    omegas = blocks[pts[0]][:, 0]
    for pv in pts:
        if blocks[pv].shape[0] != omegas.size or not np.array_equal(blocks[pv][:, 0], omegas):
            raise MissingCell(f"operating point p={pv} does not cover the full frequency grid")
    N = np.stack([blocks[pv][:, 2] + 1j * blocks[pv][:, 3] for pv in pts], axis=1)
    D = np.stack([blocks[pv][:, 4] + 1j * blocks[pv][:, 5] for pv in pts], axis=1)
    if p_range is None:
        p_range = (min(pts), max(pts))
    return FrfDataset(FrequencyGrid(omegas, Ts), OperatingPointSet(pts, tuple(p_range)), N, D)


def loads_json(text: str) -> FrfDataset:
    obj = json.loads(text)
    g = obj["grid"]
    Ts = g.get("Ts") if g.get("domain", "discrete") == "discrete" else None
    points = obj["points"]
    p_range = obj.get("p_range") or (min(points), max(points))

    def cplx(a):
        arr = np.asarray(a, dtype=float)
        if arr.shape != (len(g["omegas"]), len(points), 2):
            raise MissingCell(f"sample array has shape {arr.shape}, expected "
                              f"({len(g['omegas'])}, {len(points)}, 2)")
        if np.isnan(arr).any():
            raise NanSample("dataset contains NaN samples")
        return arr[..., 0] + 1j * arr[..., 1]

    N, D = cplx(obj["samples"]["N"]), cplx(obj["samples"]["D"])
    order = np.argsort(points, kind="stable")
    return FrfDataset(
        FrequencyGrid(g["omegas"], Ts),
        OperatingPointSet(np.asarray(points)[order], tuple(p_range)),
        N[:, order],
        D[:, order],
    )


def load_frf_dataset(path, format: str | None = None, **kwargs) -> FrfDataset:
    """Read a dataset written by :func:`save_frf_dataset` (or by hand)."""
    path = Path(path)
    fmt = format or _guess_format(path)
    text = path.read_text(encoding="utf-8")
    if fmt == "csv":
        return loads_csv(text, **kwargs)
    if fmt == "json":
        return loads_json(text)
    raise ValueError(f"unknown format {fmt!r}")
