import math

import numpy as np
import pytest

from lpvfrd import benchmark as bm
from lpvfrd.ctrlparam import ControllerParameterization, PulseBasis, SchedulingBasis
from lpvfrd.errors import Divergence
from lpvfrd.ltikit import StateSpaceModel
from lpvfrd.realize import realize
from lpvfrd.simulate import (
    SimScenario,
    Signal,
    disk_energy,
    disk_rhs,
    ramp_scenario,
    rk4_hold,
    simulate_frozen_step,
    simulate_nonlinear,
    staircase_scenario,
)
from randsys import single_point_dataset

P = bm.DiskParameters()
FROZEN = SchedulingBasis("polynomial", 1, (0.0, 0.0))


def static_gain(k, Ts=1.0):
    return ControllerParameterization(PulseBasis(0, Ts), PulseBasis(0, Ts), FROZEN, [[k]])


def test_zero_reference_stays_at_rest(reference):
    res = simulate_nonlinear(P, realize(reference), SimScenario(Signal.constant(0.0), 2.0))
    assert np.all(res.x == 0) and np.all(res.u == 0)
    assert res.t.size == 401


def test_open_loop_upright_is_unstable():
    res = simulate_nonlinear(P, None, SimScenario(Signal.constant(0.0), 0.5, x0=(0.01, 0.0, 0.0)))
    assert abs(res.theta[-1]) > 10 * 0.01


def test_rk4_fourth_order():
    # a slow electrical pole so the error is dominated by the mechanics
    params = bm.DiskParameters(L=0.5)
    f = disk_rhs(params)
    x0, u, T = (0.3, 0.0, 0.0), 1.0, 0.4
    ref = rk4_hold(f, x0, u, T / 4096, 4096)
    errs = [abs(rk4_hold(f, x0, u, T / n, n)[0] - ref[0]) for n in (20, 40, 80)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 3.5)


def test_energy_never_increases_without_input():
    scen = SimScenario(Signal.constant(0.0), 3.0, x0=(0.5, 0.0, 0.0))
    res = simulate_nonlinear(P, None, scen)
    E = disk_energy(P, res.x)
    assert np.all(np.diff(E) <= 1e-8 * E[0])
    assert E[-1] < E[0]


def test_energy_balance_derivative():
    # dE/dt = -b w^2 - R I^2 + I u
    f = disk_rhs(P)
    x, u = np.array([0.4, 1.3, 0.02]), 0.7
    dx = np.array(f(*x, u))
    th, om, cur = x
    dE = P.J * om * dx[1] - P.M * P.g * P.l * math.sin(th) * om + P.L * cur * dx[2]
    assert dE == pytest.approx(-P.b * om**2 - P.R * cur**2 + cur * u, rel=1e-12)


def test_small_signal_matches_frozen_loop(disk, reference):
    amp = 0.005
    nl = simulate_nonlinear(P, realize(reference),
                            SimScenario(Signal.constant(amp), 3.0, p_override=1.0))
    lin = simulate_frozen_step(bm.frozen_discrete(disk, 1.0), realize(reference), 1.0, 3.0, amplitude=amp)
    assert np.max(np.abs(nl.y - lin.y)) < 0.05 * np.max(np.abs(lin.y))


def test_frozen_step_steady_state_matches_frf():
    plant = StateSpaceModel([[0.6]], [1.0], [0.4], 0.0, 1.0)
    ds = single_point_dataset(plant, 64)
    k = 0.8
    res = simulate_frozen_step(plant, realize(static_gain(k)), 0.0, 200.0)
    NG, DG = ds.N[0, 0], ds.D[0, 0]
    T0 = (NG * k / (DG + NG * k)).real  # complementary sensitivity at omega = 0
    assert res.y[-1] == pytest.approx(T0, abs=1e-3)


def test_frozen_step_divergence():
    plant = StateSpaceModel([[0.5]], [1.0], [1.0], 0.0, 1.0)
    with pytest.raises(Divergence) as info:
        simulate_frozen_step(plant, realize(static_gain(-5.0)), 0.0, 100.0)
    assert info.value.step > 0


def test_frozen_step_rejects_feedthrough():
    plant = StateSpaceModel([[0.5]], [1.0], [1.0], 1.0, 1.0)
    with pytest.raises(ValueError):
        simulate_frozen_step(plant, realize(static_gain(1.0)), 0.0, 10.0)


def test_nonlinear_divergence():
    # positive feedback with a huge gain throws the disk past the limit
    bad = ControllerParameterization(PulseBasis(0, bm.TS), PulseBasis(0, bm.TS), SchedulingBasis.affine(),
                                     [[-1e7, 0.0]])
    with pytest.raises(Divergence):
        simulate_nonlinear(P, realize(bad), SimScenario(Signal.constant(0.1), 5.0, substeps=2))


def test_reference_frozen_step_settles(disk, reference):
    res = simulate_frozen_step(bm.frozen_discrete(disk, 0.5), realize(reference), 0.5, 8.0)
    assert res.max_abs_error_after(5.0) < 0.05


def test_signal_interpolation():
    s = Signal((0.0, 1.0), (0.0, 2.0))
    assert s(0.5) == 0.0 and s(1.0) == 2.0 and s(-1.0) == 0.0
    lin = Signal((0.0, 1.0), (0.0, 2.0), "linear")
    assert lin(0.25) == 0.5 and lin(5.0) == 2.0
    with pytest.raises(ValueError):
        Signal((1.0, 0.0), (0.0, 0.0))
    with pytest.raises(ValueError):
        Signal((0.0,), (0.0,), "cubic")


def test_scenario_json_roundtrip():
    scen = ramp_scenario(x0=(0.1, 0.0, 0.0), p_override=0.5)
    back = SimScenario.from_json(scen.to_json())
    assert back == scen
    with pytest.raises(ValueError):
        SimScenario(Signal.constant(), 0.0)


def test_builtin_scenarios():
    st = staircase_scenario()
    assert st.duration == 20.0 and st.reference(9.0) == pytest.approx(math.pi / 2)
    rp = ramp_scenario()
    t = np.linspace(0, rp.duration, 2001)
    r = np.array([rp.reference(x) for x in t])
    assert r.max() == pytest.approx(math.pi / 2)
    assert np.max(np.abs(np.diff(r) / np.diff(t))) <= 0.08 + 1e-9


def test_result_csv_and_segments(reference):
    res = simulate_nonlinear(P, realize(reference), staircase_scenario(levels=(0.0, 0.2), segment=1.0))
    lines = res.to_csv().splitlines()
    assert lines[0] == "t,r,y,u,e,p,p_used,x0,x1,x2"
    assert len(lines) == res.t.size + 1
    seg = res.segment_errors([1.0, 2.0], 0.2)
    assert seg[0] == 0.0 and seg[1] < 0.05
