"""Stability and performance certificates computed from frozen FRF data alone.

For each operating point the closed-loop characteristic function

    Dp = D_G D_K + N_G N_K

is sampled on the grid.  Its inverse is stable exactly when the closed curve
``Dp(e^{iw})`` (positive frequencies mirrored by conjugate symmetry) does not
wind around the origin.  When it does not, ``-arg Dp`` gives the phase of a
multiplier that rotates every sample onto the positive real axis.

Performance for a channel with weight ``W`` holds at level ``gamma`` when the
disks centred at ``Dp`` with radius ``|W Np| / gamma`` all exclude the origin
and the stability test passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ctrlparam import ControllerParameterization, eval_factor
from .errors import GridTooCoarse, NearOrigin
from .frfdata import CHANNELS, FrfDataset, WeightSet, weight_frf

STABLE = "stable"
UNSTABLE = "unstable"
MARGINAL = "marginal"


def close_conjugate(samples) -> np.ndarray:
    """Closed curve from positive-frequency samples of a real-coefficient system."""
    samples = np.asarray(samples, complex)
    return np.concatenate([samples, np.conj(samples[::-1])])


def winding_number(curve, origin_tol: float = 0.0, max_increment: float = math.pi / 2) -> int:
    """Net counter-clockwise turns of a closed sampled curve around 0.

    The last sample connects back to the first.  Raises ``NearOrigin`` if a
    sample lies within ``origin_tol`` of 0 and ``GridTooCoarse`` if two
    consecutive samples differ in phase by more than ``max_increment``.
    """
    curve = np.asarray(curve, complex)
    if curve.size == 0:
        raise ValueError("empty curve")
    if np.min(np.abs(curve)) <= origin_tol:
        raise NearOrigin(f"curve passes within {origin_tol:g} of the origin")
    nxt = np.roll(curve, -1)
    dphi = np.angle(nxt / curve)
    if np.max(np.abs(dphi)) > max_increment:
        k = int(np.argmax(np.abs(dphi)))
        raise GridTooCoarse(f"phase jumps by {dphi[k]:.3f} rad between samples {k} and {k + 1}")
    return int(round(float(np.sum(dphi)) / (2 * math.pi)))


def characteristic(data: FrfDataset, controller: ControllerParameterization, j: int):
    """``(Dp, NK, DK)`` sampled at operating point index ``j``."""
    p = float(data.points.points[j])
    w = data.grid.omegas
    NK = eval_factor(controller, "N", w, p)
    DK = eval_factor(controller, "D", w, p)
    return data.D[:, j] * DK + data.N[:, j] * NK, NK, DK


def channel_numerator(channel: str, NG, DG, NK, DK):
    if channel == "S":
        return DG * DK
    if channel == "SG":
        return NG * DK
    if channel == "KS":
        return DG * NK
    if channel == "T":
        return NG * NK
    raise KeyError(channel)


@dataclass(frozen=True)
class StabilityEntry:
    p: float
    winding: int | None
    min_abs: float
    phases: np.ndarray | None
    verdict: str

    @property
    def stable(self) -> bool:
        return self.verdict == STABLE


@dataclass(frozen=True)
class StabilityCertificate:
    entries: tuple[StabilityEntry, ...]

    @property
    def stable(self) -> bool:
        return all(e.stable for e in self.entries)

    @property
    def verdict(self) -> str:
        return STABLE if self.stable else UNSTABLE

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "points": [
                {"p": e.p, "winding": e.winding, "min_abs_Dp": e.min_abs, "verdict": e.verdict}
                for e in self.entries
            ],
        }


def check_stability(
    data: FrfDataset,
    controller: ControllerParameterization,
    p: float,
    origin_rtol: float = 1e-9,
    max_increment: float = math.pi / 2,
) -> StabilityEntry:
    """Winding-number stability test at one operating point of the dataset."""
    j = data.point_index(p)
    Dp, _, _ = characteristic(data, controller, j)
    absD = np.abs(Dp)
    tol = origin_rtol * float(np.max(absD))
    try:
        wind = winding_number(close_conjugate(Dp), tol, max_increment)
    except NearOrigin:
        return StabilityEntry(float(p), None, float(absD.min()), None, MARGINAL)
    if wind != 0:
        return StabilityEntry(float(p), wind, float(absD.min()), None, UNSTABLE)
    phases = -np.unwrap(np.angle(Dp))
    return StabilityEntry(float(p), 0, float(absD.min()), phases, STABLE)


def certify_stability(data: FrfDataset, controller: ControllerParameterization, **kwargs) -> StabilityCertificate:
    return StabilityCertificate(tuple(check_stability(data, controller, p, **kwargs)
                                      for p in data.points.points))


@dataclass(frozen=True)
class PerformanceCertificate:
    gamma: float
    channels: tuple[str, ...]
    margins: np.ndarray  # (n_omega, n_points, n_channels)
    stability: StabilityCertificate
    achieved_gamma: float
    worst_cell: tuple[int, int, int]
    omegas: np.ndarray
    points: np.ndarray
    tol: float = 0.0

    @property
    def worst_margin(self) -> float:
        return float(self.margins.min())

    @property
    def passed(self) -> bool:
        return self.stability.stable and self.worst_margin > self.tol

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        k, j, c = self.worst_cell
        return {
            "verdict": self.verdict,
            "gamma": self.gamma,
            "achieved_gamma": self.achieved_gamma,
            "worst_margin": self.worst_margin,
            "worst_cell": {"omega": float(self.omegas[k]), "p": float(self.points[j]),
                           "channel": self.channels[c]},
            "channels": list(self.channels),
            "stability": self.stability.to_dict(),
        }


def disk_margins(data, weights, controller, gamma, channels=None):
    """``|Dp| - |W Np| / gamma`` per (frequency, point, channel), plus the
    grid peak of ``|W Np / Dp|`` (the achieved performance level)."""
    channels = tuple(channels or weights.channels)
    W = {ch: weight_frf(weights, ch, data.grid) for ch in channels}
    out = np.empty((len(data.grid), len(data.points), len(channels)))
    peak = 0.0
    inv_gamma = 0.0 if math.isinf(gamma) else 1.0 / gamma
    for j in range(len(data.points)):
        Dp, NK, DK = characteristic(data, controller, j)
        absD = np.abs(Dp)
        for c, ch in enumerate(channels):
            wn = np.abs(W[ch] * channel_numerator(ch, data.N[:, j], data.D[:, j], NK, DK))
            out[:, j, c] = absD - inv_gamma * wn
            with np.errstate(divide="ignore"):
                peak = max(peak, float(np.max(wn / absD)))
    return out, peak


def check_performance(
    data: FrfDataset,
    weights: WeightSet,
    controller: ControllerParameterization,
    gamma: float,
    channels=None,
    tol: float = 0.0,
    stability: StabilityCertificate | None = None,
) -> PerformanceCertificate:
    """Disk-exclusion performance test at level ``gamma`` (``inf`` allowed)."""
    channels = tuple(channels or weights.channels)
    for ch in channels:
        if ch not in CHANNELS:
            raise KeyError(ch)
    if stability is None:
        stability = certify_stability(data, controller)
    margins, peak = disk_margins(data, weights, controller, gamma, channels)
    worst = np.unravel_index(int(np.argmin(margins)), margins.shape)
    return PerformanceCertificate(float(gamma), channels, margins, stability, peak,
                                  tuple(int(i) for i in worst), data.grid.omegas,
                                  data.points.points, tol)
