"""Controller synthesis from coprime-factor FRF data by SOCP and gamma bisection.

At a fixed level ``gamma`` every (frequency, operating point, channel) cell
contributes the convex constraint

    gamma * Re{Dp(theta)} - margin  >=  |W Np(theta)|

in which ``Dp`` and ``Np`` are affine in the controller coefficients
``theta``.  Each is one three-dimensional second-order cone.  The smallest
feasible ``gamma`` is located by bisection, using that feasibility at
``gamma`` implies feasibility at any larger value.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .conic import ConicProgram, ConicSolution, solve
from .ctrlparam import ControllerParameterization, regressor_row
from .errors import InfeasibleAtUpperBound, NumericalBreakdown, UnknownChannel
from .frfdata import CHANNELS, FrfDataset, WeightSet, weight_frf

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SynthesisProblem:
    data: FrfDataset
    weights: WeightSet
    param: ControllerParameterization
    channels: tuple[str, ...] = CHANNELS
    margin: float = 1e-6
    gamma_bracket: tuple[float, float] = (1e-2, 1e3)
    bisect_tol: float = 1e-3
    slack_cap: float = 1.0
    theta_bound: float = 1e4

    def __post_init__(self):
        channels = tuple(self.channels)
        if not channels:
            raise ValueError("at least one channel is required")
        for ch in channels:
            if ch not in CHANNELS:
                raise UnknownChannel(ch)
            self.weights[ch]  # raises UnknownChannel when the weight is missing
        object.__setattr__(self, "channels", channels)
        lo, hi = self.gamma_bracket
        if not 0 < lo < hi:
            raise ValueError(f"gamma bracket must satisfy 0 < lo < hi, got {self.gamma_bracket}")
        if not self.margin > 0:
            raise ValueError("margin must be positive")
        if not self.bisect_tol > 0:
            raise ValueError("bisection tolerance must be positive")
        if not math.isclose(self.param.Ts, self.data.grid.Ts or float("nan")):
            raise ValueError("controller basis and data use different sampling times")


def channel_factors(NG, DG, rows_N, rows_D, channel: str):
    """Affine forms of ``Np`` and ``Dp`` in ``theta`` for one channel.

    ``rows_N = (R, o)`` and ``rows_D`` are the regressors of ``N_K`` and
    ``D_K`` (``factor = R @ theta + o``).  ``NG``/``DG`` are scalars or
    arrays matching the rows.  Returns ``((R_Np, o_Np), (R_Dp, o_Dp))``.
    """
    RN, oN = rows_N
    RD, oD = rows_D
    NG = np.asarray(NG, complex)
    DG = np.asarray(DG, complex)
    nc = NG[..., None] if NG.ndim else NG
    dc = DG[..., None] if DG.ndim else DG
    if channel == "S":
        num = (dc * RD, DG * oD)
    elif channel == "SG":
        num = (nc * RD, NG * oD)
    elif channel == "KS":
        num = (dc * RN, DG * oN)
    elif channel == "T":
        num = (nc * RN, NG * oN)
    else:
        raise UnknownChannel(channel)
    den = (dc * RD + nc * RN, DG * oD + NG * oN)
    return num, den


def _cell_forms(problem: SynthesisProblem):
    """Stacked ``(R_WNp, o_WNp, R_Dp, o_Dp)`` over (frequency, point, channel)."""
    data, param = problem.data, problem.param
    omegas = data.grid.omegas
    W = [weight_frf(problem.weights, ch, data.grid) for ch in problem.channels]
    nw, npt, nc, d = len(omegas), len(data.points), len(problem.channels), param.n_theta
    RWN = np.empty((nw, npt, nc, d), complex)
    oWN = np.empty((nw, npt, nc), complex)
    RDp = np.empty((nw, npt, d), complex)
    oDp = np.empty((nw, npt), complex)
    for j, p in enumerate(data.points.points):
        rN = regressor_row(param, "N", omegas, p)
        rD = regressor_row(param, "D", omegas, p)
        for c, ch in enumerate(problem.channels):
            (Rn, on), (Rd, od) = channel_factors(data.N[:, j], data.D[:, j], rN, rD, ch)
            RWN[:, j, c] = W[c][:, None] * Rn
            oWN[:, j, c] = W[c] * on
        RDp[:, j], oDp[:, j] = Rd, od
    return RWN, oWN, RDp, oDp


@dataclass
class _Forms:
    RWN: np.ndarray
    oWN: np.ndarray
    RDp: np.ndarray
    oDp: np.ndarray

    @classmethod
    def build(cls, problem):
        return cls(*_cell_forms(problem))

    def margins(self, theta, gamma) -> np.ndarray:
        """``gamma Re{Dp} - |W Np|`` per (frequency, point, channel)."""
        Dp = self.RDp @ theta + self.oDp
        WNp = self.RWN @ theta + self.oWN
        return gamma * Dp.real[..., None] - np.abs(WNp)


def assemble(problem: SynthesisProblem, gamma: float, forms: _Forms | None = None,
             slack: bool = True) -> ConicProgram:
    """Max-slack SOCP at level ``gamma``; variables ``x = (theta, s)``.

    Each cell gives the cone ``(gamma Re Dp - margin - s, Re W Np, Im W Np)``,
    divided by a positive cell-dependent scale (which leaves the constraint
    unchanged; only the objective weighs slack per cell).
    Two extra cones keep the program bounded: ``s <= slack_cap`` and
    ``||theta|| <= theta_bound``.

    With ``slack=False`` the variables are ``theta`` alone, the objective is
    zero and the slack cone is dropped: a pure feasibility program for
    :func:`lpvfrd.conic.check_feasible`.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    f = forms or _Forms.build(problem)
    d = problem.param.n_theta
    nw, npt, nc = f.oWN.shape
    K = nw * npt * nc
    RD = np.broadcast_to(f.RDp[:, :, None, :], (nw, npt, nc, d)).reshape(K, d)
    oD = np.broadcast_to(f.oDp[:, :, None], (nw, npt, nc)).reshape(K)
    RW = f.RWN.reshape(K, d)
    oW = f.oWN.reshape(K)

    G = np.zeros((K, 3, d + 1))
    h = np.empty((K, 3))
    G[:, 0, :d] = -gamma * RD.real
    G[:, 0, d] = 1.0
    h[:, 0] = gamma * oD.real - problem.margin
    G[:, 1, :d] = -RW.real
    h[:, 1] = oW.real
    G[:, 2, :d] = -RW.imag
    h[:, 2] = oW.imag
    # cones are invariant under positive scaling; equalize block magnitudes
    # (cells differ by several decades) so iterates stay well inside
    size = np.sqrt(np.sum(G[:, :, :d] ** 2, axis=(1, 2)) + np.sum(h ** 2, axis=1))
    size = np.where(size > 0, size, 1.0)
    G /= size[:, None, None]
    h /= size[:, None]
    G = G.reshape(3 * K, d + 1)
    h = h.reshape(3 * K)

    # s <= cap as a 2-dim cone (cap - s, 0)
    G_cap = np.zeros((2, d + 1))
    G_cap[0, d] = 1.0
    h_cap = np.array([problem.slack_cap, 0.0])
    # ||theta|| <= bound
    G_th = np.zeros((d + 1, d + 1))
    G_th[1:, :d] = -np.eye(d)
    h_th = np.zeros(d + 1)
    h_th[0] = problem.theta_bound

    if not slack:
        return ConicProgram(np.zeros(d), np.vstack([G, G_th])[:, :d], np.concatenate([h, h_th]),
                            (3,) * K + (d + 1,))
    c = np.zeros(d + 1)
    c[d] = -1.0
    return ConicProgram(c, np.vstack([G, G_cap, G_th]), np.concatenate([h, h_cap, h_th]),
                        (3,) * K + (2, d + 1))


@dataclass(frozen=True)
class BisectionStep:
    gamma: float
    feasible: bool
    slack: float
    solver_status: str
    solver_iterations: int


@dataclass(frozen=True)
class FeasibilityProbe:
    feasible: bool
    theta: np.ndarray | None
    slack: float
    solution: ConicSolution | None


def probe(problem: SynthesisProblem, gamma: float, forms: _Forms | None = None,
          tol: float = 1e-9, maxiter: int = 100) -> FeasibilityProbe:
    """Solve the max-slack program at ``gamma`` and re-check the answer directly.

    The verdict comes from re-evaluating the returned ``theta`` on every
    cell, so an iterate from a stalled solve can still certify feasibility;
    otherwise solver failure counts as infeasible.
    """
    f = forms or _Forms.build(problem)
    prog = assemble(problem, gamma, f)
    d = problem.param.n_theta
    try:
        sol = solve(prog, tol=tol, maxiter=maxiter)
        x = sol.x
    except NumericalBreakdown as exc:
        log.info("gamma=%.6g: solver breakdown (%s)", gamma, exc)
        sol, x = None, exc.x
    if x is None or not np.all(np.isfinite(x)):
        return FeasibilityProbe(False, None, -math.inf, sol)
    # the verdict rests on direct re-evaluation, not on solver status
    theta, s = x[:d], float(x[d])
    ok = s > 0 and float(f.margins(theta, gamma).min()) >= problem.margin
    return FeasibilityProbe(ok, theta, s, sol)


def bisect_gamma(feasible: Callable[[float], bool], lo: float, hi: float, tol: float):
    """Smallest feasible level in ``[lo, hi]`` to relative accuracy ``tol``.

    ``feasible`` must be monotone.  Midpoints are geometric since the bracket
    spans several decades.  Returns ``(gamma, trace)`` where ``gamma`` is the
    last feasible level and ``trace`` lists ``(gamma, feasible)`` pairs.
    Raises ``InfeasibleAtUpperBound`` when ``hi`` is not feasible.
    """
    trace = []
    ok = feasible(hi)
    trace.append((hi, ok))
    if not ok:
        raise InfeasibleAtUpperBound(f"infeasible at the upper bracket gamma={hi:g}", gamma=hi)
    ok = feasible(lo)
    trace.append((lo, ok))
    if ok:
        return lo, trace
    while hi - lo > tol * lo:
        mid = math.sqrt(lo * hi)
        ok = feasible(mid)
        trace.append((mid, ok))
        if ok:
            hi = mid
        else:
            lo = mid
    return hi, trace


@dataclass(frozen=True)
class SynthesisResult:
    gamma: float
    theta: np.ndarray
    controller: ControllerParameterization
    margins: np.ndarray  # gamma Re{Dp} - |W Np|, shape (n_omega, n_points, n_channels)
    channels: tuple[str, ...]
    omegas: np.ndarray
    points: np.ndarray
    iterations: tuple[BisectionStep, ...] = field(default=())

    @property
    def worst_margin(self) -> float:
        return float(self.margins.min())

    def margins_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["omega", "p", "channel", "margin"])
        for k, w in enumerate(self.omegas):
            for j, p in enumerate(self.points):
                for c, ch in enumerate(self.channels):
                    out.writerow([repr(float(w)), repr(float(p)), ch, repr(float(self.margins[k, j, c]))])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "gamma": self.gamma,
            "worst_margin": self.worst_margin,
            "n_constraints": int(self.margins.size),
            "bisection_steps": len(self.iterations),
            "theta": self.theta.tolist(),
        }


def bisect(problem: SynthesisProblem, tol: float = 1e-9, maxiter: int = 100) -> SynthesisResult:
    """Minimal feasible gamma and the controller found at that level."""
    forms = _Forms.build(problem)
    steps: list[BisectionStep] = []
    best: dict[float, FeasibilityProbe] = {}

    def feasible(gamma):
        pr = probe(problem, gamma, forms, tol, maxiter)
        sol = pr.solution
        steps.append(BisectionStep(gamma, pr.feasible, pr.slack,
                                   sol.status if sol else "breakdown",
                                   sol.iterations if sol else 0))
        log.info("gamma=%.6g feasible=%s slack=%.3g", gamma, pr.feasible, pr.slack)
        if pr.feasible:
            best[gamma] = pr
        return pr.feasible

    lo, hi = problem.gamma_bracket
    try:
        gamma, _ = bisect_gamma(feasible, lo, hi, problem.bisect_tol)
    except InfeasibleAtUpperBound as exc:
        top = steps[0] if steps else None
        raise InfeasibleAtUpperBound(
            f"{exc}; best slack {top.slack if top else float('nan'):.3g}",
            gamma=hi, best_slack=top.slack if top else None,
        ) from None
    theta = best[gamma].theta
    return SynthesisResult(
        gamma=gamma,
        theta=theta,
        controller=problem.param.with_theta(theta),
        margins=forms.margins(theta, gamma),
        channels=problem.channels,
        omegas=problem.data.grid.omegas,
        points=problem.data.points.points,
        iterations=tuple(steps),
    )


def synthesis_margins(problem: SynthesisProblem, theta, gamma: float) -> np.ndarray:
    """Direct re-evaluation of ``gamma Re{Dp} - |W Np|`` for any ``theta``."""
    return _Forms.build(problem).margins(np.asarray(theta, float), gamma)
