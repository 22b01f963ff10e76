"""Second-order cone programming by a homogeneous self-dual interior-point method.

Programs are posed as::

    minimize    c'x
    subject to  G x + s = h,   A x = b,   s in Q_1 x ... x Q_K

where each ``Q_k = {(t, u) : t >= ||u||}`` is a second-order cone acting on a
consecutive block of the slack vector ``s``.  The cone variables are thus
affine images of the decision vector, which keeps the Newton systems at the
size of ``x`` no matter how many cones there are.

The iteration follows the standard Nesterov-Todd scaled, Mehrotra
predictor-corrector scheme on the self-dual embedding, so infeasibility and
unboundedness are reported through certificates instead of divergence.
Cones of equal dimension are processed together as ``(K, d)`` arrays.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import IllFormedProgram, NumericalBreakdown

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAXITER = "maxiter"
# stalled on rounding errors; best iterate meets the relaxed tolerance
INACCURATE = "optimal_inaccurate"


@dataclass(frozen=True)
class ConicProgram:
    """Linear objective, affine cone constraints and linear equalities.

    ``cone_dims`` partitions the rows of ``G``/``h`` into consecutive
    second-order cone blocks (each of dimension >= 2).
    """

    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    cone_dims: tuple[int, ...]
    A: np.ndarray | None = None
    b: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, float).ravel()
        n = c.size
        G = np.asarray(self.G, float).reshape(-1, n) if np.size(self.G) else np.zeros((0, n))
        h = np.asarray(self.h, float).ravel()
        dims = tuple(int(d) for d in self.cone_dims)
        A = np.zeros((0, n)) if self.A is None or np.size(self.A) == 0 else np.asarray(self.A, float).reshape(-1, n)
        b = np.zeros(0) if self.b is None else np.asarray(self.b, float).ravel()
        if h.size != G.shape[0]:
            raise IllFormedProgram("h and G row counts differ")
        if sum(dims) != G.shape[0]:
            raise IllFormedProgram("cone dimensions do not add up to the rows of G")
        if any(d < 2 for d in dims):
            raise IllFormedProgram("cone dimensions must be at least 2")
        if b.size != A.shape[0]:
            raise IllFormedProgram("b and A row counts differ")
        for name, arr in (("c", c), ("G", G), ("h", h), ("A", A), ("b", b)):
            if not np.all(np.isfinite(arr)):
                raise IllFormedProgram(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "cone_dims", dims)

    @property
    def n(self) -> int:
        return self.c.size

    @classmethod
    def with_variable_cones(cls, c, cones: Sequence[Sequence[int]], A=None, b=None) -> "ConicProgram":
        """Build from cones on index sets of ``x`` directly: ``x[idx] in Q``.

        Each index set lists the cone's head variable first.
        """
        c = np.asarray(c, float).ravel()
        rows = []
        for idx in cones:
            idx = list(idx)
            if len(set(idx)) != len(idx):
                raise IllFormedProgram("a variable appears twice in one cone")
            for i in idx:
                if not 0 <= i < c.size:
                    raise IllFormedProgram(f"cone index {i} out of range")
                e = np.zeros(c.size)
                e[i] = -1.0
                rows.append(e)
        G = np.array(rows).reshape(-1, c.size)
        return cls(c, G, np.zeros(G.shape[0]), tuple(len(i) for i in cones), A, b)

    def dump(self) -> str:
        """Sparse text form: one ``<block> <row> <col> <value>`` line per nonzero."""
        lines = [f"n {self.n} m {self.G.shape[0]} p {self.A.shape[0]}",
                 "cones " + " ".join(map(str, self.cone_dims))]
        for name, M in (("G", self.G), ("A", self.A)):
            for i, j in zip(*np.nonzero(M)):
                lines.append(f"{name} {i} {j} {float(M[i, j])!r}")
        for name, v in (("c", self.c), ("h", self.h), ("b", self.b)):
            for i in np.flatnonzero(v):
                lines.append(f"{name} {i} {float(v[i])!r}")
        return "\n".join(lines) + "\n"


@dataclass
class ConicSolution:
    status: str
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    z: np.ndarray
    primal_objective: float = float("nan")
    dual_objective: float = float("nan")
    gap: float = float("nan")
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    iterations: int = 0
    trace: list = field(default_factory=list, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


# --------------------------------------------------------------------------
# second-order cone algebra on (K, d) blocks


def _jdot(u, v):
    return u[:, 0] * v[:, 0] - np.einsum("ki,ki->k", u[:, 1:], v[:, 1:])


def _jnorm(u):
    """``sqrt(u0^2 - ||u1||^2)`` in the cancellation-free factored form."""
    r = np.linalg.norm(u[:, 1:], axis=1)
    return np.sqrt(np.maximum((u[:, 0] - r) * (u[:, 0] + r), 0.0))


def _jflip(u):
    out = -u
    out[:, 0] = u[:, 0]
    return out


def _jprod(u, v):
    out = np.empty_like(u)
    out[:, 0] = np.einsum("ki,ki->k", u, v)
    out[:, 1:] = u[:, :1] * v[:, 1:] + v[:, :1] * u[:, 1:]
    return out


def _jdiv(lam, r):
    """Solve ``lam o x = r`` for ``x`` (``lam`` in the cone interior)."""
    det = _jnorm(lam) ** 2
    l0 = lam[:, 0]
    l1r1 = np.einsum("ki,ki->k", lam[:, 1:], r[:, 1:])
    out = np.empty_like(r)
    out[:, 0] = (l0 * r[:, 0] - l1r1) / det
    out[:, 1:] = r[:, 1:] / l0[:, None] + ((l1r1 / l0 - r[:, 0]) / det)[:, None] * lam[:, 1:]
    return out


def _max_step(x, dx):
    """Largest ``a`` with ``x + a dx`` in the cone (``inf`` if unbounded)."""
    if x.shape[0] == 0:
        return np.inf
    nrm = _jnorm(x)
    xb = x / nrm[:, None]
    x0, x1 = xb[:, 0], xb[:, 1:]
    x1d1 = np.einsum("ki,ki->k", x1, dx[:, 1:])
    r0 = (x0 * dx[:, 0] - x1d1) / nrm
    r1 = (dx[:, 1:] - x1 * (dx[:, :1] - (x1d1 / (1.0 + x0))[:, None])) / nrm[:, None]
    worst = np.max(np.linalg.norm(r1, axis=1) - r0)
    return np.inf if worst <= 0 else 1.0 / worst


class _Scaling:
    """Nesterov-Todd scaling ``W`` per cone block: ``W z = W^-1 s = lam``."""

    def __init__(self, s, z):
        sn = _jnorm(s)
        zn = _jnorm(z)
        sb, zb = s / sn[:, None], z / zn[:, None]
        gamma = np.sqrt(0.5 * (1.0 + np.einsum("ki,ki->k", sb, zb)))
        # NT point of the normalized pair, then its Jordan square root
        v = (sb + _jflip(zb)) / (2.0 * gamma[:, None])
        v[:, 0] += 1.0
        self.w = v / np.sqrt(2.0 * v[:, :1])
        self.beta = np.sqrt(sn / zn)

    def apply(self, v):
        return self.beta[:, None] * (2.0 * self.w * np.einsum("ki,ki->k", self.w, v)[:, None] - _jflip(v))

    def apply_inv(self, v):
        jw = _jflip(self.w)
        return (2.0 * jw * _jdot(self.w, v)[:, None] - _jflip(v)) / self.beta[:, None]

    def apply_inv_mat(self, M):
        """``W^-1`` applied to each block of a stacked matrix ``(K, d, n)``."""
        jw = _jflip(self.w)
        wJM = M[:, 0, :] * self.w[:, :1] - np.einsum("ki,kin->kn", self.w[:, 1:], M[:, 1:, :])
        JM = M.copy()
        JM[:, 1:, :] *= -1
        return (2.0 * jw[:, :, None] * wJM[:, None, :] - JM) / self.beta[:, None, None]


class _Cones:
    """Row bookkeeping: groups of equal-dimension cone blocks."""

    def __init__(self, dims):
        self.m = int(sum(dims))
        self.count = len(dims)
        starts = np.concatenate([[0], np.cumsum(dims)[:-1]]).astype(int)
        self.groups = []
        for d in sorted(set(dims)):
            st = starts[np.asarray(dims) == d]
            self.groups.append(st[:, None] + np.arange(d))

    def split(self, v):
        return [v[idx] for idx in self.groups]

    def join(self, parts):
        out = np.empty(self.m)
        for idx, p in zip(self.groups, parts):
            out[idx] = p
        return out

    def identity(self):
        parts = []
        for idx in self.groups:
            e = np.zeros(idx.shape)
            e[:, 0] = 1.0
            parts.append(e)
        return self.join(parts)

    def interior_shift(self, v):
        """``inf {a : v + a e in cone}`` (negative if ``v`` is interior)."""
        if self.count == 0:
            return -1.0
        return max(float(np.max(np.linalg.norm(p[:, 1:], axis=1) - p[:, 0])) for p in self.split(v))


# --------------------------------------------------------------------------


class _Kkt:
    """Solver for ``[0 A' G'; A 0 0; G 0 -W'W] [x; y; z] = [bx; by; bz]``."""

    def __init__(self, prog, cones, scalings):
        self.prog, self.cones, self.scalings = prog, cones, scalings
        n, p = prog.n, prog.A.shape[0]
        self.WiG = []
        H = np.zeros((n, n))
        for idx, sc in zip(cones.groups, scalings):
            Gk = prog.G[idx]  # (K, d, n)
            WiG = sc.apply_inv_mat(Gk) if sc is not None else Gk
            self.WiG.append(WiG)
            flat = WiG.reshape(-1, n)
            H += flat.T @ flat
        K = np.zeros((n + p, n + p))
        K[:n, :n] = H
        K[:n, n:] = prog.A.T
        K[n:, :n] = prog.A
        scale = np.sqrt(np.maximum(np.abs(np.diag(K)), 1e-300))
        scale[np.abs(np.diag(K)) == 0] = 1.0
        self.scale = 1.0 / scale
        Ks = K * self.scale[:, None] * self.scale[None, :]
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                self.lu = scipy.linalg.lu_factor(Ks, check_finite=True)
            rc = np.linalg.cond(Ks)
            self.singular = not np.isfinite(rc) or rc > 1e15
        except (ValueError, np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
            self.singular = True
        self.Ks = Ks

    def _winv2(self, v):
        parts = self.cones.split(v)
        out = [sc.apply_inv(sc.apply_inv(q)) if sc is not None else q
               for q, sc in zip(parts, self.scalings)]
        return self.cones.join(out) if parts else v

    def _w2(self, v):
        parts = self.cones.split(v)
        out = [sc.apply(sc.apply(q)) if sc is not None else q for q, sc in zip(parts, self.scalings)]
        return self.cones.join(out) if parts else v

    def _reduced(self, bx, by, bz):
        prog = self.prog
        n = prog.n
        rhs = np.concatenate([bx + prog.G.T @ self._winv2(bz), by]) * self.scale
        if self.singular:
            sol = np.linalg.lstsq(self.Ks, rhs, rcond=None)[0]
        else:
            sol = scipy.linalg.lu_solve(self.lu, rhs)
        sol *= self.scale
        x, y = sol[:n], sol[n:]
        z = self._winv2(prog.G @ x - bz)
        return x, y, z

    def solve(self, bx, by, bz, refine: int = 2):
        prog = self.prog
        x, y, z = self._reduced(bx, by, bz)
        for _ in range(refine):
            rx = bx - prog.A.T @ y - prog.G.T @ z
            ry = by - prog.A @ x
            rz = bz - prog.G @ x + self._w2(z)
            dx, dy, dz = self._reduced(rx, ry, rz)
            x, y, z = x + dx, y + dy, z + dz
        return x, y, z


def _interior(cones: _Cones, v) -> bool:
    return all(np.all(_jnorm(q) > 0) and np.all(q[:, 0] > 0) for q in cones.split(v))


def solve(
    program: ConicProgram,
    tol: float = 1e-9,
    maxiter: int = 100,
    abstol: float | None = None,
    reltol: float | None = None,
    feastol: float | None = None,
) -> ConicSolution:
    """Primal-dual interior-point solve of ``program``.

    ``tol`` sets the feasibility, absolute-gap and relative-gap tolerances
    unless they are given individually.  If the iteration stalls or breaks
    down on rounding errors, the best iterate seen is returned with status
    ``optimal_inaccurate`` when it meets a relaxed tolerance
    ``max(1e-5, 1e3 tol)``; otherwise ``NumericalBreakdown`` is raised.
    """
    inacc_tol = max(1e-5, 1e3 * tol)
    feastol = tol if feastol is None else feastol
    abstol = tol if abstol is None else abstol
    reltol = tol if reltol is None else reltol
    prog = program
    c, h, A, b = prog.c, prog.h, prog.A, prog.b
    n, p = prog.n, A.shape[0]
    cones = _Cones(prog.cone_dims)
    m = cones.m
    if n == 0:
        raise IllFormedProgram("program has no variables")
    resx0 = max(1.0, np.linalg.norm(c))
    resy0 = max(1.0, np.linalg.norm(b))
    resz0 = max(1.0, np.linalg.norm(h))

    # starting point: least-squares primal and dual with W = I
    kkt = _Kkt(prog, cones, [None] * len(cones.groups))
    x, _, zz = kkt.solve(np.zeros(n), b, h)
    s = -zz
    _, y, z = kkt.solve(-c, np.zeros(p), np.zeros(m))
    e = cones.identity()
    a_s = cones.interior_shift(s)
    if a_s >= -1e-8 * max(1.0, np.linalg.norm(s)):
        s = s + (1.0 + max(a_s, 0.0)) * e
    a_z = cones.interior_shift(z)
    if a_z >= -1e-8 * max(1.0, np.linalg.norm(z)):
        z = z + (1.0 + max(a_z, 0.0)) * e
    tau, kappa = 1.0, 1.0

    trace = []
    try:
        it, status, sol_parts, best = _iterate(
            prog, cones, x, y, z, s, tau, kappa, maxiter, feastol, abstol, reltol,
            resx0, resy0, resz0, trace)
    except NumericalBreakdown as exc:
        best = exc.best
        if best[0] > inacc_tol:
            raise
        status, it = INACCURATE, len(trace) - 1
        sol_parts = best[1][:4]
    if status == MAXITER and best[0] <= inacc_tol:
        status, sol_parts = INACCURATE, best[1][:4]
    if status == INACCURATE:
        pcost, dcost, gap_t, pres, dres = best[1][4]
    else:
        _, pcost, dcost, gap_t, pres, dres, _, _ = trace[-1]
    xs, ss, ys, zs = sol_parts
    return ConicSolution(
        status=status, x=xs, s=ss, y=ys, z=zs,
        primal_objective=float(pcost), dual_objective=float(dcost), gap=float(gap_t),
        primal_residual=float(pres), dual_residual=float(dres), iterations=it, trace=trace,
    )


def _iterate(prog, cones, x, y, z, s, tau, kappa, maxiter, feastol, abstol, reltol,
             resx0, resy0, resz0, trace):
    """Main loop; a breakdown carries the best iterate so far as ``exc.best``."""
    state = {"best": (np.inf, None)}
    try:
        # transient inf/nan in a direction is caught by the finiteness guard
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return _loop(prog, cones, x, y, z, s, tau, kappa, maxiter, feastol, abstol, reltol,
                         resx0, resy0, resz0, trace, state)
    except NumericalBreakdown as exc:
        exc.best = state["best"]
        if exc.best[1] is not None:
            exc.x = exc.best[1][0]
        raise


def _loop(prog, cones, x, y, z, s, tau, kappa, maxiter, feastol, abstol, reltol,
          resx0, resy0, resz0, trace, state):
    c, G, h, A, b = prog.c, prog.G, prog.h, prog.A, prog.b
    n, p, m = prog.n, A.shape[0], cones.m
    status = MAXITER
    sol_parts = None
    best = state["best"]
    for it in range(maxiter + 1):
        # residuals of the embedding
        hrx = -A.T @ y - G.T @ z
        hry = A @ x
        hrz = s + G @ x
        cx, by_, hz = c @ x, b @ y, h @ z
        r1 = -hrx + c * tau
        r2 = -hry + b * tau
        r3 = hrz - h * tau
        r4 = kappa + cx + by_ + hz
        gap = float(s @ z)
        mu = (gap + tau * kappa) / (cones.count + 1)
        pcost, dcost = cx / tau, -(by_ + hz) / tau
        pres = max(np.linalg.norm(r2) / resy0, np.linalg.norm(r3) / resz0) / tau
        dres = np.linalg.norm(r1) / resx0 / tau
        gap_t = gap / tau**2
        if pcost < 0:
            relgap = gap_t / -pcost
        elif dcost > 0:
            relgap = gap_t / dcost
        else:
            relgap = np.inf
        pinfres = np.linalg.norm(hrx) / resx0 / -(hz + by_) if hz + by_ < 0 else np.inf
        dinfres = (max(np.linalg.norm(hry) / resy0, np.linalg.norm(hrz) / resz0) / -cx
                   if cx < 0 else np.inf)
        trace.append((it, pcost, dcost, gap_t, pres, dres, tau, kappa))
        score = max(pres, dres, min(gap_t, relgap))
        if np.isfinite(score) and score < best[0]:
            best = (score, (x / tau, s / tau, y / tau, z / tau, (pcost, dcost, gap_t, pres, dres)))
            state["best"] = best
        log.debug("it %2d pcost % .8e dcost % .8e gap %.2e pres %.2e dres %.2e k/t %.2e",
                  it, pcost, dcost, gap_t, pres, dres, kappa / tau)

        if pres <= feastol and dres <= feastol and (gap_t <= abstol or relgap <= reltol):
            status = OPTIMAL
            sol_parts = (x / tau, s / tau, y / tau, z / tau)
            break
        if pinfres <= feastol:
            status = INFEASIBLE
            scale = -(hz + by_)
            sol_parts = (np.full(n, np.nan), np.full(m, np.nan), y / scale, z / scale)
            break
        if dinfres <= feastol:
            status = UNBOUNDED
            sol_parts = (x / -cx, s / -cx, np.full(p, np.nan), np.full(m, np.nan))
            break
        if it == maxiter:
            break

        s_parts, z_parts = cones.split(s), cones.split(z)
        if not (all(np.all(_jnorm(q) > 0) for q in s_parts)
                and all(np.all(_jnorm(q) > 0) for q in z_parts)):
            raise NumericalBreakdown(f"iterate left the cone interior at iteration {it}", x / tau)
        scalings = [_Scaling(sp, zp) for sp, zp in zip(s_parts, z_parts)]
        lam = [sc.apply(zp) for sc, zp in zip(scalings, z_parts)]
        kkt = _Kkt(prog, cones, scalings)
        try:
            x1, y1, z1 = kkt.solve(-c, b, h)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown(f"KKT solve failed at iteration {it}: {exc}", x / tau) from None
        denom_base = c @ x1 + b @ y1 + h @ z1

        def newton(eta, rc, rt):
            ds_part = cones.join([sc.apply(_jdiv(lm, rcp)) for sc, lm, rcp in zip(scalings, lam, rc)]) \
                if m else np.zeros(0)
            x0, y0, z0 = kkt.solve(-eta * r1, eta * r2, -eta * r3 - ds_part)
            rhs4 = -eta * r4 - rt / tau
            dtau = (rhs4 - c @ x0 - b @ y0 - h @ z0) / (denom_base - kappa / tau)
            dx, dy, dz = x0 + dtau * x1, y0 + dtau * y1, z0 + dtau * z1
            ds = ds_part - kkt._w2(dz)
            dkappa = (rt - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        def steplen(dz, ds, dtau, dkappa):
            a = np.inf
            for sp, dsp in zip(s_parts, cones.split(ds)):
                a = min(a, _max_step(sp, dsp))
            for zp, dzp in zip(z_parts, cones.split(dz)):
                a = min(a, _max_step(zp, dzp))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        rc_aff = [-_jprod(lm, lm) for lm in lam]
        dx, dy, dz, ds, dtau, dkappa = newton(1.0, rc_aff, -tau * kappa)
        a_aff = min(1.0, steplen(dz, ds, dtau, dkappa))
        sigma = (1.0 - a_aff) ** 3
        # corrector
        rc = []
        for sc, lm, dsp, dzp in zip(scalings, lam, cones.split(ds), cones.split(dz)):
            corr = _jprod(sc.apply_inv(dsp), sc.apply(dzp))
            sig_e = np.zeros_like(lm)
            sig_e[:, 0] = sigma * mu
            rc.append(sig_e - _jprod(lm, lm) - corr)
        rt = sigma * mu - tau * kappa - dtau * dkappa
        dx, dy, dz, ds, dtau, dkappa = newton(1.0 - sigma, rc, rt)
        if not all(np.all(np.isfinite(v)) for v in (dx, dy, dz, ds, dtau, dkappa)):
            raise NumericalBreakdown(f"non-finite search direction at iteration {it}", x / tau)
        alpha = min(1.0, 0.99 * steplen(dz, ds, dtau, dkappa))
        # rounding can still land on a cone boundary when blocks are very elongated
        for _ in range(30):
            if _interior(cones, s + alpha * ds) and _interior(cones, z + alpha * dz):
                break
            alpha *= 0.5
        if not np.isfinite(alpha) or alpha < 1e-14:
            raise NumericalBreakdown(f"step length {alpha:.3g} at iteration {it}", x / tau)
        x, y, z, s = x + alpha * dx, y + alpha * dy, z + alpha * dz, s + alpha * ds
        tau, kappa = tau + alpha * dtau, kappa + alpha * dkappa

    if sol_parts is None:
        sol_parts = (x / tau, s / tau, y / tau, z / tau)
    return it, status, sol_parts, best


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    witness: np.ndarray | None = None
    certificate: tuple[np.ndarray, np.ndarray] | None = None
    solution: ConicSolution | None = None


def check_feasible(program: ConicProgram, tol: float = 1e-9, maxiter: int = 100) -> Feasibility:
    """Decide feasibility of the constraint set of ``program`` (objective ignored).

    A feasible answer carries a witness ``x``; an infeasible one carries the
    dual certificate ``(y, z)`` with ``A'y + G'z = 0``, ``z in K`` and
    ``b'y + h'z = -1``.
    """
    zero = ConicProgram(np.zeros(program.n), program.G, program.h, program.cone_dims,
                        program.A, program.b)
    sol = solve(zero, tol=tol, maxiter=maxiter)
    if sol.status == OPTIMAL:
        return Feasibility(True, witness=sol.x, solution=sol)
    if sol.status == INFEASIBLE:
        return Feasibility(False, certificate=(sol.y, sol.z), solution=sol)
    raise NumericalBreakdown(f"feasibility undecided after {sol.iterations} iterations")


def cone_violation(program: ConicProgram, x: np.ndarray) -> float:
    """Largest amount by which ``h - G x`` leaves its cones (0 if inside)."""
    s = program.h - program.G @ x
    cones = _Cones(program.cone_dims)
    if cones.count == 0:
        return 0.0
    return max(0.0, cones.interior_shift(s))
