import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lpvfrd import benchmark as bm
from lpvfrd.errors import OutOfRange
from lpvfrd.frfdata import FrequencyGrid, OperatingPointSet, dumps_csv
from lpvfrd.ltikit import eval_frf


def test_model_matrix_entries(disk):
    A1 = disk.A(1.0)
    assert A1[1, 0] == pytest.approx(131.10, abs=5e-3)
    assert A1[1, 1] == pytest.approx(-0.3, abs=1e-12)
    assert A1[1, 2] == pytest.approx(243.64, abs=5e-3)
    assert A1[2, 1] == pytest.approx(-63.81, abs=5e-3)
    assert A1[2, 2] == pytest.approx(-11309.5, abs=0.05)
    assert disk.B(1.0)[2, 0] == pytest.approx(1190.5, abs=0.05)
    np.testing.assert_array_equal(disk.C(0.3), [[1.0, 0.0, 0.0]])
    assert disk.D(0.3) == 0.0


def test_stiffness_vanishes_at_zero(disk):
    assert disk.A(0.0)[1, 0] == 0.0
    assert disk.A(0.5)[1, 0] == pytest.approx(65.55, abs=5e-3)


def test_freeze(disk):
    np.testing.assert_array_equal(bm.freeze(disk, 0.0).A, disk.A0)
    assert np.max(bm.freeze(disk, 1.0).poles().real) > 0
    with pytest.raises(OutOfRange):
        bm.freeze(disk, 1.5)


def test_parameters_positive():
    with pytest.raises(ValueError):
        bm.DiskParameters(R=0.0)


def test_dataset_shape_and_grid(dataset):
    assert dataset.shape == (400, 9)
    assert dataset.grid.omegas[0] == 1e-2
    assert dataset.grid.omegas[-1] == 200 * math.pi
    np.testing.assert_allclose(dataset.points.points, np.arange(9) / 8, atol=0)


def test_single_cell_dataset(disk):
    ds = bm.generate_dataset(disk, grid=FrequencyGrid([1.0], bm.TS), points=OperatingPointSet([0.5]))
    assert ds.shape == (1, 1)


def test_dataset_reconstructs_plant(disk, dataset):
    for j, p in enumerate(dataset.points.points):
        G = eval_frf(bm.frozen_discrete(disk, p), dataset.grid)
        assert np.all(np.abs(dataset.N[:, j] / dataset.D[:, j] - G) < 1e-8 * (1 + np.abs(G)))


def test_dataset_deterministic(disk, dataset):
    again = bm.generate_dataset(disk, workers=3)
    assert dumps_csv(again) == dumps_csv(dataset)


def test_grid_must_match_sampling_time(disk):
    with pytest.raises(ValueError):
        bm.generate_dataset(disk, grid=FrequencyGrid([1.0], 0.01))


@given(st.floats(-math.pi, math.pi))
def test_scheduling_embedding(theta):
    a = bm.DiskParameters().stiffness
    assert a * bm.sinc(theta) * theta == pytest.approx(a * math.sin(theta), abs=1e-12)


def test_sinc_range():
    th = np.linspace(-math.pi, math.pi, 2001)
    p = bm.sinc(th)
    assert p.min() >= -1e-15 and p.max() == 1.0
    assert bm.sinc(4.4934).min() == pytest.approx(-0.2172, abs=1e-4)  # global minimum of sinc


def test_reference_layout():
    K = bm.reference_controller()
    assert K.n_theta == 22
    assert K.w.shape == (6, 2) and K.v.shape == (6, 2)
    np.testing.assert_array_equal(K.v[0], [1.0, 0.0])


def test_default_weights_stable_and_complete():
    ws = bm.default_weights()
    assert ws.channels == ("S", "SG", "KS", "T")
    for ch in ws.channels:
        roots = np.roots(ws[ch].den)
        assert np.all(np.abs(roots) < 1)
