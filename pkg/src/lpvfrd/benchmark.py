"""Unbalanced-disk LPV benchmark: model, frozen FRF data and reference controller."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .errors import OutOfRange
from .frfdata import FrequencyGrid, FrfDataset, OperatingPointSet, RationalWeight, WeightSet
from .ltikit import StateSpaceModel, c2d_zoh, coprime_factorize, eval_frf

TS = 0.005
N_OMEGA = 400
N_POINTS = 9
OMEGA_MIN = 1e-2
OMEGA_MAX = 200 * math.pi


@dataclass(frozen=True)
class DiskParameters:
    K: float = 0.0536  # Nm/A
    R: float = 9.50  # Ohm
    L: float = 0.84e-3  # H
    J: float = 2.2e-4  # Nm^2
    b: float = 6.6e-5  # Nms/rad
    M: float = 0.07  # kg
    l: float = 0.042  # m
    g: float = 9.81  # m/s^2

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"parameter {f.name} must be strictly positive")

    @property
    def stiffness(self) -> float:
        """Gravity coefficient ``M g l / J`` multiplying ``p * theta``."""
        return self.M * self.g * self.l / self.J


@dataclass(frozen=True)
class LpvStateSpace:
    """Affine LPV model ``X(p) = X0 + p * X1`` for X in A, B, C, D."""

    A0: np.ndarray
    A1: np.ndarray
    B0: np.ndarray
    B1: np.ndarray
    C0: np.ndarray
    C1: np.ndarray
    D0: float = 0.0
    D1: float = 0.0
    p_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        n = np.asarray(self.A0).shape[0]
        shapes = {"A0": (n, n), "A1": (n, n), "B0": (n, 1), "B1": (n, 1), "C0": (1, n), "C1": (1, n)}
        for name, shape in shapes.items():
            arr = np.array(getattr(self, name), dtype=float).reshape(shape)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.A0.shape[0]

    def A(self, p):
        return self.A0 + p * self.A1

    def B(self, p):
        return self.B0 + p * self.B1

    def C(self, p):
        return self.C0 + p * self.C1

    def D(self, p):
        return self.D0 + p * self.D1


def build_unbalanced_disk(params: DiskParameters = DiskParameters()) -> LpvStateSpace:
    """States ``(theta, theta_dot, I)``, input voltage, output ``theta``."""
    P = params
    A0 = np.array([
        [0.0, 1.0, 0.0],
        [0.0, -P.b / P.J, P.K / P.J],
        [0.0, -P.K / P.L, -P.R / P.L],
    ])
    A1 = np.zeros((3, 3))
    A1[1, 0] = P.stiffness
    B0 = np.array([[0.0], [0.0], [1.0 / P.L]])
    C0 = np.array([[1.0, 0.0, 0.0]])
    return LpvStateSpace(A0, A1, B0, np.zeros((3, 1)), C0, np.zeros((1, 3)), 0.0, 0.0, (0.0, 1.0))


def freeze(lpv: LpvStateSpace, p: float) -> StateSpaceModel:
    lo, hi = lpv.p_range
    if not lo - 1e-12 <= p <= hi + 1e-12:
        raise OutOfRange(f"p={p} outside scheduling range [{lo}, {hi}]")
    return StateSpaceModel(lpv.A(p), lpv.B(p), lpv.C(p), lpv.D(p))


def frozen_discrete(lpv: LpvStateSpace, p: float, Ts: float = TS) -> StateSpaceModel:
    return c2d_zoh(freeze(lpv, p), Ts)


def default_grid(n: int = N_OMEGA, Ts: float = TS) -> FrequencyGrid:
    """Log-spaced grid from 1e-2 rad/s up to and including Nyquist."""
    return FrequencyGrid.logspace(OMEGA_MIN, math.pi / Ts, n, Ts)


def default_points(n: int = N_POINTS) -> OperatingPointSet:
    return OperatingPointSet.equidistant(n, (0.0, 1.0))


def generate_dataset(
    lpv: LpvStateSpace,
    Ts: float = TS,
    grid: FrequencyGrid | None = None,
    points: OperatingPointSet | None = None,
    workers: int = 1,
) -> FrfDataset:
    """Freeze, discretize, factor and sample the plant at every operating point."""
    grid = default_grid(Ts=Ts) if grid is None else grid
    points = default_points() if points is None else points
    if grid.Ts is None or not math.isclose(grid.Ts, Ts):
        raise ValueError("dataset grid must be discrete with the plant sampling time")

    def column(p):
        f = coprime_factorize(frozen_discrete(lpv, p, Ts))
        return eval_frf(f.Nss, grid), eval_frf(f.Dss, grid)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            cols = list(pool.map(column, points.points))
    else:
        cols = [column(p) for p in points.points]
    N = np.stack([c[0] for c in cols], axis=1)
    D = np.stack([c[1] for c in cols], axis=1)
    return FrfDataset(grid, points, N, D)


def sinc(theta):
    """Unnormalized sinc, ``sin(theta) / theta`` with value 1 at 0."""
    return np.sinc(np.asarray(theta, dtype=float) / math.pi)


# --------------------------------------------------------------------------
# reference controller and default weights

# rows: basis index i = 0..5; columns: scheduling function {1, p}
REFERENCE_W = np.array([
    [143.74, 74.97],
    [-113.36, -6.25],
    [-24.37, -72.88],
    [-40.16, -44.02],
    [-72.00, -6.82],
    [106.74, 55.59],
])
REFERENCE_V = np.array([
    [1.0, 0.0],
    [-0.51, 0.39],
    [-0.017, -0.25],
    [-0.24, -0.13],
    [-0.19, -0.25],
    [-0.049, 0.24],
])


def reference_controller(Ts: float = TS):
    """Published pulse-basis controller (order 5, affine in p)."""
    from .ctrlparam import ControllerParameterization, PulseBasis, SchedulingBasis

    basis = PulseBasis(5, Ts)
    return ControllerParameterization(basis, basis, SchedulingBasis.affine(), REFERENCE_W, REFERENCE_V)


def _c2d_tf(num, den, Ts):
    """Bilinear (Tustin) map of a continuous rational weight."""
    import scipy.signal

    numd, dend, _ = scipy.signal.cont2discrete((num, den), Ts, method="bilinear")
    return np.ravel(numd), np.ravel(dend)


def default_weights(Ts: float = TS) -> WeightSet:
    """Mixed-sensitivity weights for the disk (see README for the shapes).

    Each weight is the inverse of the closed-loop bound it enforces:

    * ``S``: ``(s/Ms + wb) / (s + wb*A)`` -> DC gain ``1/A``, HF gain ``1/Ms``
    * ``T``: ``(s + wt/Mt) / (At*s + wt)`` -> roll-off above ``wt``
    * ``SG``, ``KS``: constant bounds on disturbance and control sensitivity
    """
    w = DEFAULT_WEIGHT_PARAMS
    ws = _c2d_tf([1 / w["Ms"], w["wb"]], [1.0, w["wb"] * w["A"]], Ts)
    wt = _c2d_tf([1.0, w["wt"] / w["Mt"]], [w["At"], w["wt"]], Ts)
    return WeightSet({
        "S": RationalWeight(*ws, Ts),
        "SG": RationalWeight([w["Wsg"]], [1.0], Ts),
        "KS": RationalWeight([w["Wks"]], [1.0], Ts),
        "T": RationalWeight(*wt, Ts),
    })


DEFAULT_WEIGHT_PARAMS = {
    "Ms": 1.6,
    "wb": 5.0,
    "A": 5e-2,
    "Mt": 1.6,
    "wt": 300.0,
    "At": 0.1,
    "Wsg": 12.5,
    "Wks": 1 / 350,
}
