"""Scheduling-dependent controller factors built from stable basis functions.

Both factors are linear combinations

    N_K(z, p) = sum_i w_i(p) phi_i(z),    w_i(p) = sum_l w[i, l] psi_l(p)
    D_K(z, p) = sum_i v_i(p) phi_i(z),    v_i(p) = sum_l v[i, l] psi_l(p)

with ``phi_0 = psi_1 = 1``.  ``D_K`` is kept monic by pinning ``v[0, :] =
(1, 0, ..., 0)``; the remaining coefficients form the free vector ``theta``
(all of ``w`` row-major, then ``v[1:, :]`` row-major).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import OutOfRange, UnsupportedBasis


@dataclass(frozen=True)
class PulseBasis:
    """FIR basis ``phi_i(z) = z^-i`` for ``i = 0..order``."""

    order: int
    Ts: float

    kind = "pulse"

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("basis order must be non-negative")

    @property
    def size(self) -> int:
        return self.order + 1

    def evaluate(self, omega) -> np.ndarray:
        """Matrix ``(len(omega), order+1)`` of basis values on the unit circle."""
        zinv = np.exp(-1j * np.atleast_1d(np.asarray(omega, float)) * self.Ts)
        return zinv[:, None] ** np.arange(self.size)

    def to_dict(self) -> dict:
        return {"kind": "pulse", "order": self.order, "Ts": self.Ts}


@dataclass(frozen=True)
class RationalBasis:
    """User basis: ``phi_0 = 1`` followed by stable rational filters.

    ``filters`` holds ``(num, den)`` pairs in descending powers of z.
    """

    filters: tuple
    Ts: float

    kind = "rational"

    def __post_init__(self):
        clean = []
        for num, den in self.filters:
            num = np.atleast_1d(np.asarray(num, float))
            den = np.atleast_1d(np.trim_zeros(np.asarray(den, float), "f"))
            if num.size > den.size:
                raise ValueError("basis functions must be proper")
            roots = np.roots(den)
            if roots.size and np.max(np.abs(roots)) >= 1:
                raise ValueError(f"basis function has poles {roots} outside the open unit disk")
            clean.append((tuple(num.tolist()), tuple(den.tolist())))
        object.__setattr__(self, "filters", tuple(clean))

    @property
    def order(self) -> int:
        return len(self.filters)

    @property
    def size(self) -> int:
        return self.order + 1

    def evaluate(self, omega) -> np.ndarray:
        z = np.exp(1j * np.atleast_1d(np.asarray(omega, float)) * self.Ts)
        cols = [np.ones_like(z)]
        cols += [np.polyval(num, z) / np.polyval(den, z) for num, den in self.filters]
        return np.stack(cols, axis=1)

    def to_dict(self) -> dict:
        return {"kind": "rational", "order": self.order, "Ts": self.Ts,
                "filters": [[list(n), list(d)] for n, d in self.filters]}


def basis_from_dict(obj: dict):
    if obj["kind"] == "pulse":
        return PulseBasis(int(obj["order"]), float(obj["Ts"]))
    if obj["kind"] == "rational":
        return RationalBasis(tuple(tuple(f) for f in obj["filters"]), float(obj["Ts"]))
    raise UnsupportedBasis(f"unknown basis kind {obj['kind']!r}")


@dataclass(frozen=True)
class SchedulingBasis:
    """Scheduling functions ``psi_1 = 1, psi_2, ..., psi_m``.

    ``kind`` is ``"polynomial"`` (``psi_l = p^(l-1)``; affine is degree 1) or
    ``"table"`` (piecewise-linear interpolation of user-tabulated values).
    """

    kind: str = "polynomial"
    m: int = 2
    p_range: tuple[float, float] = (0.0, 1.0)
    breakpoints: tuple = ()
    table: tuple = ()  # rows psi_2..psi_m sampled at the breakpoints

    def __post_init__(self):
        if self.kind not in ("polynomial", "table"):
            raise ValueError(f"unknown scheduling basis kind {self.kind!r}")
        if self.m < 1:
            raise ValueError("need at least the constant scheduling function")
        if self.kind == "table":
            bp = np.asarray(self.breakpoints, float)
            tab = np.asarray(self.table, float).reshape(self.m - 1, bp.size)
            if bp.size < 2 or np.any(np.diff(bp) <= 0):
                raise ValueError("table breakpoints must be strictly increasing")
            object.__setattr__(self, "breakpoints", tuple(bp.tolist()))
            object.__setattr__(self, "table", tuple(map(tuple, tab.tolist())))

    @classmethod
    def affine(cls, p_range=(0.0, 1.0)) -> "SchedulingBasis":
        return cls("polynomial", 2, tuple(p_range))

    @classmethod
    def polynomial(cls, degree: int, p_range=(0.0, 1.0)) -> "SchedulingBasis":
        return cls("polynomial", degree + 1, tuple(p_range))

    def evaluate(self, p) -> np.ndarray:
        """Values ``(psi_1(p), ..., psi_m(p))``; raises if ``p`` is out of range."""
        p = float(p)
        lo, hi = self.p_range
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        if not lo - tol <= p <= hi + tol:
            raise OutOfRange(f"scheduling value {p} outside [{lo}, {hi}]")
        if self.kind == "polynomial":
            return p ** np.arange(self.m)
        rows = [np.interp(p, self.breakpoints, row) for row in self.table]
        return np.array([1.0, *rows])

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "m": self.m, "p_range": list(self.p_range)}
        if self.kind == "table":
            out["breakpoints"] = list(self.breakpoints)
            out["table"] = [list(r) for r in self.table]
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "SchedulingBasis":
        kind = obj.get("kind", "polynomial")
        if kind == "affine":
            kind = "polynomial"
        return cls(kind, int(obj["m"]), tuple(obj.get("p_range", (0.0, 1.0))),
                   tuple(obj.get("breakpoints", ())), tuple(map(tuple, obj.get("table", ()))))


@dataclass(frozen=True)
class ControllerParameterization:
    num_basis: PulseBasis | RationalBasis
    den_basis: PulseBasis | RationalBasis
    sched: SchedulingBasis
    w: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)

    def __post_init__(self):
        nN, nD, m = self.num_basis.size, self.den_basis.size, self.sched.m
        if self.den_basis.order < self.num_basis.order:
            raise ValueError("denominator order must be at least the numerator order")
        if self.num_basis.Ts != self.den_basis.Ts:
            raise ValueError("numerator and denominator bases use different sampling times")
        w = np.zeros((nN, m)) if self.w is None else np.array(self.w, float)
        if self.v is None:
            v = np.zeros((nD, m))
            v[0, 0] = 1.0
        else:
            v = np.array(self.v, float)
        if w.shape != (nN, m) or v.shape != (nD, m):
            raise ValueError(f"coefficient shapes {w.shape}, {v.shape} do not match "
                             f"({nN}, {m}) and ({nD}, {m})")
        pinned = np.zeros(m)
        pinned[0] = 1.0
        if not np.array_equal(v[0], pinned):
            raise ValueError("D_K must be monic: v[0] must equal (1, 0, ..., 0)")
        w.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "v", v)

    @property
    def Ts(self) -> float:
        return self.num_basis.Ts

    @property
    def n_theta(self) -> int:
        return self.w.size + self.v.size - self.sched.m

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.w.ravel(), self.v[1:].ravel()])

    def with_theta(self, theta) -> "ControllerParameterization":
        theta = np.asarray(theta, float)
        if theta.shape != (self.n_theta,):
            raise ValueError(f"theta must have length {self.n_theta}")
        nw = self.w.size
        w = theta[:nw].reshape(self.w.shape)
        v = np.vstack([self.v[:1], theta[nw:].reshape(self.v.shape[0] - 1, self.v.shape[1])])
        return replace(self, w=w, v=v)

    def coefficients(self, which: str, p: float) -> np.ndarray:
        """Scheduled coefficients ``w_i(p)`` or ``v_i(p)``."""
        psi = self.sched.evaluate(p)
        return (self.w if _which(which) == "N" else self.v) @ psi

    def to_dict(self) -> dict:
        out = {}
        if self.num_basis == self.den_basis:
            out["basis"] = self.num_basis.to_dict()
        else:
            out["num_basis"] = self.num_basis.to_dict()
            out["den_basis"] = self.den_basis.to_dict()
        out["sched"] = self.sched.to_dict()
        out["w"] = self.w.tolist()
        out["v"] = self.v.tolist()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, obj: dict) -> "ControllerParameterization":
        if "basis" in obj:
            nb = db = basis_from_dict(obj["basis"])
        else:
            nb, db = basis_from_dict(obj["num_basis"]), basis_from_dict(obj["den_basis"])
        return cls(nb, db, SchedulingBasis.from_dict(obj["sched"]), obj.get("w"), obj.get("v"))

    @classmethod
    def from_json(cls, text: str) -> "ControllerParameterization":
        return cls.from_dict(json.loads(text))


def default_parameterization(Ts: float, order: int = 5) -> ControllerParameterization:
    basis = PulseBasis(order, Ts)
    return ControllerParameterization(basis, basis, SchedulingBasis.affine())


def _which(which: str) -> str:
    if which not in ("N", "D"):
        raise ValueError(f"which must be 'N' or 'D', got {which!r}")
    return which


def eval_factor(param: ControllerParameterization, which: str, omega, p: float) -> np.ndarray:
    """Controller factor ``N_K`` or ``D_K`` at frequencies ``omega`` for frozen ``p``."""
    basis = param.num_basis if _which(which) == "N" else param.den_basis
    return basis.evaluate(omega) @ param.coefficients(which, p)


def regressor_row(param: ControllerParameterization, which: str, omega, p: float):
    """Affine map ``theta -> factor``: returns ``(rows, offset)``.

    ``rows`` has shape ``(len(omega), n_theta)`` and ``offset`` shape
    ``(len(omega),)`` so that ``eval_factor(...) == rows @ theta + offset``.
    """
    psi = param.sched.evaluate(p)
    nw = param.w.size
    if _which(which) == "N":
        phi = param.num_basis.evaluate(omega)
        rows = np.zeros((phi.shape[0], param.n_theta), complex)
        rows[:, :nw] = (phi[:, :, None] * psi[None, None, :]).reshape(phi.shape[0], -1)
        return rows, np.zeros(phi.shape[0], complex)
    phi = param.den_basis.evaluate(omega)
    rows = np.zeros((phi.shape[0], param.n_theta), complex)
    rows[:, nw:] = (phi[:, 1:, None] * psi[None, None, :]).reshape(phi.shape[0], -1)
    # pinned terms: v[0] = e_1 so the offset is phi_0 * psi_1 = 1
    offset = phi[:, 0] * (param.v[0] @ psi)
    return rows, offset

