"""Executable scheduled controller ``u = N_K(p) D_K(p)^-1 e`` for pulse bases.

With ``phi_i = z^-i`` and monic ``D_K`` the series connection of ``D_K^-1``
and ``N_K`` is the pair of difference equations

    zeta_k = e_k - sum_{i>=1} v_i(p_k) zeta_{k-i}
    u_k    = sum_{i>=0} w_i(p_k) zeta_{k-i}

with the scheduling coefficients evaluated at the current sample ``p_k``.
"""

from __future__ import annotations

import numpy as np

from .ctrlparam import ControllerParameterization, PulseBasis
from .errors import UnsupportedBasis
from .ltikit import StateSpaceModel


class ScheduledFilter:
    """Stateful realization of a pulse-basis controller parameterization."""

    def __init__(self, param: ControllerParameterization):
        if not (isinstance(param.num_basis, PulseBasis) and isinstance(param.den_basis, PulseBasis)):
            raise UnsupportedBasis("only pulse bases can be realized as difference equations")
        pinned = np.zeros(param.sched.m)
        pinned[0] = 1.0
        if not np.array_equal(param.v[0], pinned):
            raise ValueError("D_K must be monic for a well-posed inverse")
        self.param = param
        self.Ts = param.Ts
        self.n_num = param.num_basis.order
        self.n_den = param.den_basis.order
        # zeta history, most recent first: zeta_{k-1}, zeta_{k-2}, ...
        self._hist = np.zeros(max(self.n_num, self.n_den))

    def reset(self) -> None:
        self._hist[:] = 0.0

    @property
    def state(self) -> np.ndarray:
        return self._hist.copy()

    def step(self, e: float, p: float) -> float:
        """Advance one sample; raises ``OutOfRange`` for ``p`` outside the scheduling range."""
        w = self.param.coefficients("N", p)
        v = self.param.coefficients("D", p)
        h = self._hist
        zeta = float(e) - float(v[1:] @ h[: self.n_den])
        u = w[0] * zeta + float(w[1:] @ h[: self.n_num])
        if h.size:
            h[1:] = h[:-1]
            h[0] = zeta
        return float(u)

    def run(self, e, p) -> np.ndarray:
        """Filter a whole sequence from the current state (call ``reset`` first
        for a fresh start); ``p`` may be a scalar (frozen) or a sequence."""
        e = np.asarray(e, float)
        p = np.broadcast_to(np.asarray(p, float), e.shape)
        return np.array([self.step(ek, pk) for ek, pk in zip(e, p)])

    def frozen_model(self, p: float) -> StateSpaceModel:
        """LTI state-space model of the filter with ``p`` held constant."""
        w = self.param.coefficients("N", p)
        v = self.param.coefficients("D", p)
        n = max(self.n_num, self.n_den)
        num = np.zeros(n + 1)
        den = np.zeros(n + 1)
        num[: w.size] = w
        den[: v.size] = v
        # controllable canonical form of (sum b_i z^-i) / (1 + sum a_i z^-i)
        b0 = num[0]
        A = np.zeros((n, n))
        if n:
            A[0, :] = -den[1:]
            A[1:, :-1] = np.eye(n - 1)
        B = np.zeros((n, 1))
        if n:
            B[0, 0] = 1.0
        C = (num[1:] - b0 * den[1:]).reshape(1, n)
        return StateSpaceModel(A, B, C, b0, self.Ts)


def realize(param: ControllerParameterization) -> ScheduledFilter:
    return ScheduledFilter(param)
