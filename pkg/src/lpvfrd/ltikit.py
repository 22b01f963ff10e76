"""SISO state-space models: ZOH discretization, FRF evaluation, LQR feedback,
coprime factorization and Bezout verification.

Only the handful of operations needed to produce and verify coprime-factor
FRF data are implemented; MIMO is not supported.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    NonFiniteExponential,
    NotDetectable,
    NotStabilizable,
    ResidualTooLarge,
    SingularResolvent,
)
from .frfdata import FrequencyGrid


@dataclass(frozen=True)
class StateSpaceModel:
    """SISO model ``x' = A x + B u``, ``y = C x + D u``.

    ``Ts is None`` denotes continuous time.  A static gain has ``n == 0``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float = 0.0
    Ts: float | None = None

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2) if np.size(self.A) else np.zeros((0, 0))
        n = A.shape[0]
        B = np.array(self.B, dtype=float).reshape(n, 1)
        C = np.array(self.C, dtype=float).reshape(1, n)
        D = float(np.asarray(self.D, dtype=float).reshape(()))
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))
                and np.all(np.isfinite(C)) and math.isfinite(D)):
            raise ValueError("state-space matrices must be finite")
        if self.Ts is not None and not self.Ts > 0:
            raise ValueError("sampling time must be positive")
        for name, val in (("A", A), ("B", B), ("C", C)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "D", D)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def discrete(self) -> bool:
        return self.Ts is not None

    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.A) if self.n else np.zeros(0, complex)

    def is_stable(self) -> bool:
        poles = self.poles()
        if poles.size == 0:
            return True
        if self.discrete:
            return bool(np.max(np.abs(poles)) < 1)
        return bool(np.max(poles.real) < 0)

    def __call__(self, lam) -> np.ndarray:
        """Transfer function value at complex point(s) ``lam``."""
        lam = np.atleast_1d(np.asarray(lam, complex))
        if self.n == 0:
            return np.full(lam.shape, self.D, dtype=complex)
        eye = np.eye(self.n)
        M = lam[:, None, None] * eye - self.A
        cond = np.linalg.cond(M)
        if np.any(~np.isfinite(cond)) or np.any(cond > 1e14):
            bad = lam[~np.isfinite(cond) | (cond > 1e14)][0]
            raise SingularResolvent(f"evaluation point {bad} is (numerically) a pole")
        rhs = np.broadcast_to(self.B.astype(complex), (lam.size, self.n, 1))
        x = np.linalg.solve(M, rhs)
        return (self.C @ x)[:, 0, 0] + self.D

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "B": self.B.ravel().tolist(),
                "C": self.C.ravel().tolist(), "D": self.D, "Ts": self.Ts}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> "StateSpaceModel":
        return cls(obj["A"], obj["B"], obj["C"], obj["D"], obj.get("Ts"))


def static_gain(k: float, Ts: float | None = None) -> StateSpaceModel:
    return StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), k, Ts)


# --------------------------------------------------------------------------
# interconnection algebra (SISO, same time domain)


def _check_domain(a: StateSpaceModel, b: StateSpaceModel) -> float | None:
    if (a.Ts is None) != (b.Ts is None) or (a.Ts is not None and not math.isclose(a.Ts, b.Ts)):
        raise ValueError("models live in different time domains")
    return a.Ts


def series(g2: StateSpaceModel, g1: StateSpaceModel) -> StateSpaceModel:
    """Product ``g2 * g1`` (signal passes through g1 first)."""
    Ts = _check_domain(g1, g2)
    n1, n2 = g1.n, g2.n
    A = np.block([[g1.A, np.zeros((n1, n2))], [g2.B @ g1.C, g2.A]])
    B = np.vstack([g1.B, g2.B * g1.D])
    C = np.hstack([g2.D * g1.C, g2.C])
    return StateSpaceModel(A, B, C, g2.D * g1.D, Ts)


def parallel(g1: StateSpaceModel, g2: StateSpaceModel) -> StateSpaceModel:
    """Sum ``g1 + g2``."""
    Ts = _check_domain(g1, g2)
    A = scipy.linalg.block_diag(g1.A, g2.A)
    return StateSpaceModel(A, np.vstack([g1.B, g2.B]), np.hstack([g1.C, g2.C]), g1.D + g2.D, Ts)


def inverse(g: StateSpaceModel) -> StateSpaceModel:
    """Inverse of a bi-proper model (nonzero feedthrough)."""
    if abs(g.D) < 1e-12:
        raise ValueError("model is strictly proper; no proper inverse")
    Di = 1.0 / g.D
    return StateSpaceModel(g.A - g.B @ g.C * Di, g.B * Di, -Di * g.C, Di, g.Ts)


# --------------------------------------------------------------------------
# discretization and frequency response


def c2d_zoh(model: StateSpaceModel, Ts: float) -> StateSpaceModel:
    """Exact zero-order-hold equivalent via the augmented matrix exponential."""
    if model.discrete:
        raise ValueError("model is already discrete")
    n = model.n
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = model.A
    M[:n, n:] = model.B
    E = scipy.linalg.expm(M * Ts)
    if not np.all(np.isfinite(E)):
        raise NonFiniteExponential("matrix exponential overflowed")
    return StateSpaceModel(E[:n, :n], E[:n, n:], model.C, model.D, Ts)


def eval_frf(model: StateSpaceModel, grid: FrequencyGrid) -> np.ndarray:
    """``C (lam I - A)^-1 B + D`` at ``lam = i w`` or ``exp(i w Ts)``."""
    if model.discrete != grid.discrete or (
        model.discrete and not math.isclose(model.Ts, grid.Ts)
    ):
        raise ValueError("grid and model time domains differ")
    return model(grid.points())


# --------------------------------------------------------------------------
# stabilization and coprime factors


def stabilizing_feedback(model: StateSpaceModel) -> np.ndarray:
    """Discrete LQR gain ``F`` (``u = F x``) with ``Q = I``, ``R = 1``.

    The result has ``rho(A + B F) < 1``; ``NotStabilizable`` is raised when
    the Riccati equation has no stabilizing solution.
    """
    if not model.discrete:
        raise ValueError("stabilizing_feedback expects a discrete-time model")
    A, B = model.A, model.B
    n = model.n
    if n == 0:
        return np.zeros((1, 0))
    try:
        P = scipy.linalg.solve_discrete_are(A, B, np.eye(n), np.eye(1))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NotStabilizable(f"no stabilizing Riccati solution: {exc}") from None
    if not np.all(np.isfinite(P)):
        raise NotStabilizable("Riccati solution is not finite")
    F = -(B.T @ P @ A) / (1.0 + (B.T @ P @ B).item())
    rho = np.max(np.abs(np.linalg.eigvals(A + B @ F)))
    if not rho < 1:
        raise NotStabilizable(f"closed-loop spectral radius {rho:.6g} >= 1")
    return F


@dataclass(frozen=True)
class CoprimeFactorModels:
    Nss: StateSpaceModel
    Dss: StateSpaceModel
    F: np.ndarray


@dataclass(frozen=True)
class BezoutPair:
    Xss: StateSpaceModel
    Yss: StateSpaceModel
    residual: float | None = None


def coprime_factorize(model: StateSpaceModel, F: np.ndarray | None = None) -> CoprimeFactorModels:
    """Right coprime factors ``G = N D^-1`` sharing the dynamics ``A + B F``.

    ``F`` defaults to the LQR gain of :func:`stabilizing_feedback`; passing
    ``F = 0`` for a stable plant gives ``N = G``, ``D = 1``.
    """
    if F is None:
        F = stabilizing_feedback(model)
    F = np.asarray(F, dtype=float).reshape(1, model.n)
    Af = model.A + model.B @ F
    if model.n and np.max(np.abs(np.linalg.eigvals(Af))) >= 1:
        raise NotStabilizable("A + B F is not Schur")
    Nss = StateSpaceModel(Af, model.B, model.C + model.D * F, model.D, model.Ts)
    Dss = StateSpaceModel(Af, model.B, F, 1.0, model.Ts)
    return CoprimeFactorModels(Nss, Dss, F)


def observer_gain(model: StateSpaceModel) -> np.ndarray:
    """Output-injection gain ``L`` with ``A + L C`` Schur (LQR on the dual)."""
    dual = StateSpaceModel(model.A.T, model.C.T, model.B.T, model.D, model.Ts)
    try:
        return stabilizing_feedback(dual).T
    except NotStabilizable as exc:
        raise NotDetectable(str(exc)) from None


def observer_controller(model: StateSpaceModel, F: np.ndarray, L: np.ndarray) -> StateSpaceModel:
    """Observer-based controller from the error ``e = -y`` to ``u``."""
    A = model.A + model.B @ F + L @ model.C + model.D * (L @ F)
    return StateSpaceModel(A, L, F, 0.0, model.Ts)


def bezout_pair(
    factors: CoprimeFactorModels,
    plant: StateSpaceModel,
    grid: FrequencyGrid | None = None,
    controller: StateSpaceModel | None = None,
    tol: float = 1e-6,
) -> BezoutPair:
    """Stable ``X, Y`` with ``N X + D Y = 1`` built from a stabilizing controller.

    The controller ``K0`` (observer-based unless given) is factored as
    ``N_K0 D_K0^-1``; with ``Dp0 = D_G D_K0 + N_G N_K0`` the pair is
    ``X = N_K0 Dp0^-1``, ``Y = D_K0 Dp0^-1``.  If ``grid`` is supplied the
    identity residual is checked there.
    """
    if controller is None:
        L = observer_gain(plant)
        controller = observer_controller(plant, factors.F, L)
    if controller.n == 0:
        NK = controller
        DK = StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), 1.0, plant.Ts)
    else:
        kf = coprime_factorize(controller)
        NK, DK = kf.Nss, kf.Dss
    Dp0 = parallel(series(factors.Dss, DK), series(factors.Nss, NK))
    Q = inverse(Dp0)
    X, Y = series(NK, Q), series(DK, Q)
    if not (X.is_stable() and Y.is_stable()):
        raise ResidualTooLarge("controller does not stabilize the plant; X, Y unstable")
    residual = None
    if grid is not None:
        residual = bezout_residual(factors, BezoutPair(X, Y), grid)
        if not residual < tol:
            raise ResidualTooLarge(f"Bezout residual {residual:.3g} exceeds {tol:g}")
    return BezoutPair(X, Y, residual)


def bezout_residual(factors: CoprimeFactorModels, pair: BezoutPair, grid: FrequencyGrid) -> float:
    N, D = eval_frf(factors.Nss, grid), eval_frf(factors.Dss, grid)
    X, Y = eval_frf(pair.Xss, grid), eval_frf(pair.Yss, grid)
    return float(np.max(np.abs(N * X + D * Y - 1.0)))
