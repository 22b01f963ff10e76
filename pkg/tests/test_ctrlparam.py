import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpvfrd import benchmark as bm
from lpvfrd.ctrlparam import (
    ControllerParameterization,
    PulseBasis,
    RationalBasis,
    SchedulingBasis,
    default_parameterization,
    eval_factor,
    regressor_row,
)
from lpvfrd.errors import OutOfRange, UnsupportedBasis

TS = bm.TS


def test_zero_theta_gives_unit_denominator():
    K = default_parameterization(TS)
    w = np.array([0.0, 10.0, 300.0])
    np.testing.assert_array_equal(eval_factor(K, "D", w, 0.4), np.ones(3))
    np.testing.assert_array_equal(eval_factor(K, "N", w, 0.4), np.zeros(3))


def test_pulse_order_one_cancels_at_nyquist():
    b = PulseBasis(1, TS)
    K = ControllerParameterization(b, b, SchedulingBasis("polynomial", 1), [[1.0], [1.0]])
    assert abs(eval_factor(K, "N", [math.pi / TS], 0.0)[0]) < 1e-15


def test_reference_denominator_dc_value():
    K = bm.reference_controller()
    expected = float(np.sum(bm.REFERENCE_V[:, 0] + bm.REFERENCE_V[:, 1]))
    assert expected == pytest.approx(1.0 - 0.12 - 0.267 - 0.37 - 0.44 + 0.191, abs=1e-12)
    assert eval_factor(K, "D", [0.0], 1.0)[0] == pytest.approx(expected, abs=1e-13)


def test_offsets_and_shapes():
    K = default_parameterization(TS)
    w = np.linspace(0, 600, 7)
    rows, off = regressor_row(K, "D", w, 0.3)
    assert rows.shape == (7, 22)
    np.testing.assert_array_equal(off, np.ones(7))
    _, offN = regressor_row(K, "N", w, 0.3)
    np.testing.assert_array_equal(offN, np.zeros(7))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 1.0), st.sampled_from(["N", "D"]))
def test_factor_is_affine_in_theta(seed, p, which):
    rng = np.random.default_rng(seed)
    K = default_parameterization(TS)
    theta = rng.standard_normal(K.n_theta) * 10
    w = rng.uniform(0, math.pi / TS, 5)
    rows, off = regressor_row(K, which, w, p)
    direct = eval_factor(K.with_theta(theta), which, w, p)
    assert np.max(np.abs(rows @ theta + off - direct)) < 1e-12 * (1 + np.max(np.abs(direct)))


def test_theta_roundtrip_and_pinning():
    K = bm.reference_controller()
    again = default_parameterization(TS).with_theta(K.theta)
    np.testing.assert_array_equal(again.w, K.w)
    np.testing.assert_array_equal(again.v, K.v)
    with pytest.raises(ValueError):
        ControllerParameterization(K.num_basis, K.den_basis, K.sched, K.w, np.ones((6, 2)))


def test_out_of_range_scheduling():
    K = default_parameterization(TS)
    with pytest.raises(OutOfRange):
        eval_factor(K, "N", [1.0], 1.2)


def test_denominator_order_at_least_numerator():
    with pytest.raises(ValueError):
        ControllerParameterization(PulseBasis(3, TS), PulseBasis(2, TS), SchedulingBasis.affine())


def test_rational_basis_checks():
    with pytest.raises(ValueError):
        RationalBasis((([1.0], [1.0, -1.2]),), TS)
    with pytest.raises(ValueError):
        RationalBasis((([1.0, 0.0, 0.0], [1.0, -0.5]),), TS)
    rb = RationalBasis((([1.0], [1.0, -0.5]),), TS)
    vals = rb.evaluate([0.0])
    assert vals[0, 0] == 1.0 and vals[0, 1] == pytest.approx(2.0)


def test_scheduling_bases():
    aff = SchedulingBasis.affine()
    np.testing.assert_array_equal(aff.evaluate(0.5), [1.0, 0.5])
    np.testing.assert_array_equal(SchedulingBasis.polynomial(2).evaluate(0.5), [1.0, 0.5, 0.25])
    tab = SchedulingBasis("table", 2, (0.0, 1.0), (0.0, 1.0), ((0.0, 2.0),))
    np.testing.assert_allclose(tab.evaluate(0.25), [1.0, 0.5])
    assert SchedulingBasis.from_dict({"kind": "affine", "m": 2}) == aff


def test_json_roundtrip():
    K = bm.reference_controller()
    back = ControllerParameterization.from_json(K.to_json())
    np.testing.assert_array_equal(back.w, K.w)
    np.testing.assert_array_equal(back.v, K.v)
    assert back.num_basis == K.num_basis and back.sched == K.sched
    obj = K.to_dict()
    assert obj["basis"] == {"kind": "pulse", "order": 5, "Ts": TS}
    obj["basis"]["kind"] = "laguerre"
    with pytest.raises(UnsupportedBasis):
        ControllerParameterization.from_dict(obj)
