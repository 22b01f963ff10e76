"""Closed-loop simulation: frozen discrete loops and the nonlinear unbalanced disk.

The nonlinear plant

    theta'' = (M g l / J) sin(theta) - (b/J) theta' + (K/J) I
    I'      = -(K/L) theta' - (R/L) I + u / L

is integrated with the classical fourth-order Runge-Kutta method on
``Ts / substeps`` sub-intervals while ``u`` is held over each control period.
The controller sees ``e_k = r(t_k) - theta_k`` and the scheduling value
``p_k = sinc(theta_k)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .benchmark import TS, DiskParameters, sinc
from .errors import Divergence
from .ltikit import StateSpaceModel
from .realize import ScheduledFilter

DIVERGENCE_LIMIT = 1e6
# the electrical pole R/L ~ 1.1e4 rad/s needs h <= ~2.5e-4 s for RK4 stability
DEFAULT_SUBSTEPS = 50


@dataclass(frozen=True)
class Signal:
    """Piecewise-constant (``"step"``) or piecewise-linear signal over knots."""

    times: tuple[float, ...] = (0.0,)
    values: tuple[float, ...] = (0.0,)
    interp: str = "step"

    def __post_init__(self):
        t = tuple(float(x) for x in self.times)
        v = tuple(float(x) for x in self.values)
        if len(t) != len(v) or not t:
            raise ValueError("signal needs matching, non-empty times and values")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("signal knot times must be strictly increasing")
        if self.interp not in ("step", "linear"):
            raise ValueError(f"unknown interpolation {self.interp!r}")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __call__(self, t: float) -> float:
        if self.interp == "linear":
            return float(np.interp(t, self.times, self.values))
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[max(i, 0)]

    @classmethod
    def constant(cls, value: float = 0.0) -> "Signal":
        return cls((0.0,), (value,))

    def to_dict(self) -> dict:
        return {"times": list(self.times), "values": list(self.values), "interp": self.interp}

    @classmethod
    def from_dict(cls, obj: dict) -> "Signal":
        return cls(tuple(obj["times"]), tuple(obj["values"]), obj.get("interp", "step"))


@dataclass(frozen=True)
class SimScenario:
    reference: Signal
    duration: float
    disturbance: Signal = field(default_factory=Signal.constant)
    Ts: float = TS
    substeps: int = DEFAULT_SUBSTEPS
    x0: tuple[float, float, float] = (0.0, 0.0, 0.0)
    p_override: float | None = None

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not self.Ts > 0:
            raise ValueError("Ts must be positive")
        if int(self.substeps) < 1:
            raise ValueError("substeps must be at least 1")
        if len(self.x0) != 3:
            raise ValueError("x0 is (theta, theta_dot, current)")
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.Ts))

    def to_dict(self) -> dict:
        return {"reference": self.reference.to_dict(), "disturbance": self.disturbance.to_dict(),
                "duration": self.duration, "Ts": self.Ts, "substeps": self.substeps,
                "x0": list(self.x0), "p_override": self.p_override}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, obj: dict) -> "SimScenario":
        dist = obj.get("disturbance")
        return cls(
            reference=Signal.from_dict(obj["reference"]),
            duration=float(obj["duration"]),
            disturbance=Signal.from_dict(dist) if dist else Signal.constant(),
            Ts=float(obj.get("Ts", TS)),
            substeps=int(obj.get("substeps", DEFAULT_SUBSTEPS)),
            x0=tuple(obj.get("x0", (0.0, 0.0, 0.0))),
            p_override=obj.get("p_override"),
        )

    @classmethod
    def from_json(cls, text: str) -> "SimScenario":
        return cls.from_dict(json.loads(text))


def staircase_scenario(levels=(0.0, math.pi / 4, math.pi / 2, math.pi / 4, 0.0),
                       segment: float = 4.0, Ts: float = TS, **kw) -> SimScenario:
    """Piecewise-constant reference holding each level for ``segment`` seconds."""
    times = tuple(segment * i for i in range(len(levels)))
    return SimScenario(Signal(times, tuple(levels)), segment * len(levels), Ts=Ts, **kw)


def ramp_scenario(top: float = math.pi / 2, speed: float = 0.08, hold: float = 5.0,
                  Ts: float = TS, **kw) -> SimScenario:
    """Slow ramp 0 -> ``top`` -> 0 at ``speed`` rad/s with holds at each end.

    ``|d sinc/d theta| <= 0.41`` on ``[0, pi/2]``, so the default speed keeps
    the scheduling rate near 0.033 /s, with room for tracking lag.
    """
    rise = top / speed
    times = (0.0, hold, hold + rise, 2 * hold + rise, 2 * hold + 2 * rise)
    values = (0.0, 0.0, top, top, 0.0)
    return SimScenario(Signal(times, values, "linear"), 3 * hold + 2 * rise, Ts=Ts, **kw)


@dataclass(frozen=True)
class SimResult:
    """Sampled closed-loop signals at the control instants ``t_k = k Ts``.

    ``x`` holds the plant state (for the disk: theta, theta_dot, current);
    ``p`` is the raw scheduling value and ``p_used`` what the controller saw.
    """

    t: np.ndarray
    r: np.ndarray
    y: np.ndarray
    u: np.ndarray
    e: np.ndarray
    p: np.ndarray
    p_used: np.ndarray
    x: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        return self.x[:, 0]

    @property
    def theta_dot(self) -> np.ndarray:
        return self.x[:, 1]

    @property
    def current(self) -> np.ndarray:
        return self.x[:, 2]

    def max_abs_error_after(self, t0: float) -> float:
        return float(np.max(np.abs(self.e[self.t >= t0 - 1e-12])))

    def segment_errors(self, breaks, window: float) -> np.ndarray:
        """Peak ``|e|`` over the last ``window`` seconds before each break."""
        out = []
        for b in breaks:
            sel = (self.t > b - window - 1e-12) & (self.t < b - 1e-12)
            out.append(float(np.max(np.abs(self.e[sel]))) if np.any(sel) else math.nan)
        return np.array(out)

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        n = self.x.shape[1]
        out.writerow(["t", "r", "y", "u", "e", "p", "p_used"] + [f"x{i}" for i in range(n)])
        for k in range(self.t.size):
            out.writerow([repr(float(v)) for v in (self.t[k], self.r[k], self.y[k], self.u[k],
                                                   self.e[k], self.p[k], self.p_used[k])]
                         + [repr(float(v)) for v in self.x[k]])
        return buf.getvalue()


def simulate_frozen_step(plant: StateSpaceModel, filt: ScheduledFilter, p: float,
                         duration: float, amplitude: float = 1.0) -> SimResult:
    """Unit-step (scaled by ``amplitude``) response of the frozen discrete loop."""
    if not plant.discrete or not math.isclose(plant.Ts, filt.Ts):
        raise ValueError("plant must be discrete with the controller sampling time")
    if plant.D != 0.0:
        raise ValueError("plant must be strictly proper (no algebraic loop)")
    n_steps = int(round(duration / plant.Ts)) + 1
    filt.reset()
    A, B, C = plant.A, plant.B[:, 0], plant.C[0]
    x = np.zeros(plant.n)
    xs = np.empty((n_steps, plant.n))
    y, u, e = np.empty(n_steps), np.empty(n_steps), np.empty(n_steps)
    for k in range(n_steps):
        xs[k] = x
        y[k] = C @ x
        if not abs(y[k]) <= DIVERGENCE_LIMIT:
            raise Divergence(f"|y| exceeded {DIVERGENCE_LIMIT:g} at step {k} (t={k * plant.Ts:g} s)", step=k)
        e[k] = amplitude - y[k]
        u[k] = filt.step(e[k], p)
        x = A @ x + B * u[k]
    t = plant.Ts * np.arange(n_steps)
    pp = np.full(n_steps, float(p))
    return SimResult(t, np.full(n_steps, amplitude), y, u, e, pp, pp, xs)


def disk_rhs(params: DiskParameters):
    """Right-hand side ``f(x, u)`` of the disk as plain floats (fast scalar loop)."""
    a = params.stiffness
    bj = params.b / params.J
    kj = params.K / params.J
    kl = params.K / params.L
    rl = params.R / params.L
    il = 1.0 / params.L

    def f(th, om, cur, u):
        return om, a * math.sin(th) - bj * om + kj * cur, -kl * om - rl * cur + il * u

    return f


def rk4_hold(f, x, u: float, h: float, n: int):
    """``n`` RK4 steps of size ``h`` with the input held at ``u``."""
    th, om, cur = x
    for _ in range(n):
        k1 = f(th, om, cur, u)
        k2 = f(th + 0.5 * h * k1[0], om + 0.5 * h * k1[1], cur + 0.5 * h * k1[2], u)
        k3 = f(th + 0.5 * h * k2[0], om + 0.5 * h * k2[1], cur + 0.5 * h * k2[2], u)
        k4 = f(th + h * k3[0], om + h * k3[1], cur + h * k3[2], u)
        th += h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        om += h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        cur += h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    return th, om, cur


def disk_energy(params: DiskParameters, x) -> np.ndarray:
    """Stored energy relative to the hanging rest state (kinetic, potential, magnetic)."""
    x = np.atleast_2d(x)
    th, om, cur = x[:, 0], x[:, 1], x[:, 2]
    P = params
    return 0.5 * P.J * om**2 + P.M * P.g * P.l * (1.0 + np.cos(th)) + 0.5 * P.L * cur**2


def simulate_nonlinear(params: DiskParameters, filt: ScheduledFilter | None,
                       scenario: SimScenario) -> SimResult:
    """Sampled-data loop around the nonlinear disk.

    ``filt=None`` runs open loop with ``u`` equal to the disturbance signal.
    The scheduling value fed to the controller is clipped to its range since
    ``sinc`` dips below 0 for ``|theta| > pi``; ``p_override`` pins it.
    """
    if filt is not None:
        if not math.isclose(filt.Ts, scenario.Ts):
            raise ValueError("controller and scenario sampling times differ")
        filt.reset()
        lo, hi = filt.param.sched.p_range
    f = disk_rhs(params)
    n_steps = scenario.n_steps + 1
    h = scenario.Ts / scenario.substeps
    x = scenario.x0
    t = scenario.Ts * np.arange(n_steps)
    xs = np.empty((n_steps, 3))
    r, u, e = np.empty(n_steps), np.empty(n_steps), np.empty(n_steps)
    p, p_used = np.empty(n_steps), np.empty(n_steps)
    for k in range(n_steps):
        xs[k] = x
        th = x[0]
        if not (math.isfinite(th) and abs(th) <= DIVERGENCE_LIMIT):
            raise Divergence(f"state diverged at step {k} (t={t[k]:g} s)", step=k)
        r[k] = scenario.reference(t[k])
        e[k] = r[k] - th
        p[k] = float(sinc(th))
        if scenario.p_override is not None:
            p_used[k] = float(scenario.p_override)
        elif filt is not None:
            p_used[k] = min(max(p[k], lo), hi)
        else:
            p_used[k] = p[k]
        uk = filt.step(e[k], p_used[k]) if filt is not None else 0.0
        u[k] = uk
        if k + 1 < n_steps:
            x = rk4_hold(f, x, uk + scenario.disturbance(t[k]), h, scenario.substeps)
    return SimResult(t, r, xs[:, 0].copy(), u, e, p, p_used, xs)
