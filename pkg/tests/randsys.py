"""Random discrete SISO plants and FIR controllers with eigenvalue ground truth."""

import math

import numpy as np

from lpvfrd.ctrlparam import ControllerParameterization, PulseBasis, SchedulingBasis
from lpvfrd.frfdata import FrequencyGrid, FrfDataset, OperatingPointSet
from lpvfrd.ltikit import StateSpaceModel, coprime_factorize, eval_frf
from lpvfrd.realize import realize

TS = 1.0


def random_plant(rng, order: int, unstable: bool, Ts: float = TS) -> StateSpaceModel:
    """Real block-diagonal poles under a random similarity transform.

    Stable poles have modulus in [0.1, 0.9]; an unstable plant gets one
    real or complex pole pair of modulus in [1.1, 1.8].
    """
    blocks = []
    remaining = order
    first = True
    while remaining:
        bad = unstable and first
        r = rng.uniform(1.1, 1.8) if bad else rng.uniform(0.1, 0.9)
        if remaining >= 2 and rng.random() < 0.5:
            phi = rng.uniform(0.2, math.pi - 0.2)
            blocks.append(r * np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]]))
            remaining -= 2
        else:
            blocks.append(np.array([[r * rng.choice([-1.0, 1.0])]]))
            remaining -= 1
        first = False
    A = np.zeros((order, order))
    i = 0
    for b in blocks:
        k = b.shape[0]
        A[i:i + k, i:i + k] = b
        i += k
    T = np.eye(order) + 0.3 * rng.standard_normal((order, order))
    A = T @ A @ np.linalg.inv(T)
    B = rng.standard_normal((order, 1))
    C = rng.standard_normal((1, order))
    D = rng.standard_normal() if rng.random() < 0.3 else 0.0
    return StateSpaceModel(A, B, C, D, Ts)


def random_fir_controller(rng, Ts: float = TS) -> ControllerParameterization:
    nN = int(rng.integers(0, 4))
    nD = int(rng.integers(nN, 5))
    scale = 10 ** rng.uniform(-2, 0.5)
    w = scale * rng.standard_normal((nN + 1, 1))
    v = np.vstack([[1.0], 0.4 * rng.standard_normal((nD, 1))])
    return ControllerParameterization(PulseBasis(nN, Ts), PulseBasis(nD, Ts),
                                      SchedulingBasis("polynomial", 1, (0.0, 0.0)), w, v)


def closed_loop_matrix(plant: StateSpaceModel, ctrl: StateSpaceModel) -> np.ndarray:
    """State matrix of ``u = K(-y)``, ``y = G u``."""
    Ag, Bg, Cg, Dg = plant.A, plant.B, plant.C, plant.D
    Ak, Bk, Ck, Dk = ctrl.A, ctrl.B, ctrl.C, ctrl.D
    s = 1.0 / (1.0 + Dk * Dg)
    # u = s (Ck xk - Dk Cg xg)
    Ux = -s * Dk * Cg
    Uk = s * Ck
    top = np.hstack([Ag + Bg @ Ux, Bg @ Uk])
    bot = np.hstack([-Bk @ (Cg + Dg * Ux), Ak - Bk @ (Dg * Uk)])
    return np.vstack([top, bot])


def ground_truth_radius(plant, param) -> float:
    K = realize(param).frozen_model(0.0)
    return float(np.max(np.abs(np.linalg.eigvals(closed_loop_matrix(plant, K)))))


def single_point_dataset(plant: StateSpaceModel, n: int = 2048) -> FrfDataset:
    grid = FrequencyGrid(np.linspace(0.0, math.pi / plant.Ts, n), plant.Ts)
    f = coprime_factorize(plant)
    N = eval_frf(f.Nss, grid)[:, None]
    D = eval_frf(f.Dss, grid)[:, None]
    return FrfDataset(grid, OperatingPointSet([0.0], (0.0, 0.0)), N, D)


def corpus(seed: int = 2024, count: int = 200, band: float = 0.02):
    """``count`` (plant, controller, dataset, truth_stable) cases.

    Half the plants are unstable; controllers are redrawn towards a random
    target verdict so both outcomes are well represented.  Cases whose
    closed-loop spectral radius lies within ``band`` of 1 are redrawn: their
    verdict is not decidable on a finite grid.
    """
    rng = np.random.default_rng(seed)
    cases = []
    while len(cases) < count:
        unstable = len(cases) % 2 == 1
        plant = random_plant(rng, int(rng.integers(1, 5)), unstable)
        # aim for a balanced mix of verdicts by redrawing controllers a few times
        want_stable = rng.random() < 0.5
        for _ in range(60):
            param = random_fir_controller(rng)
            rho = ground_truth_radius(plant, param)
            if abs(rho - 1.0) >= band and (rho < 1.0) == want_stable:
                break
        if abs(rho - 1.0) < band:
            continue
        cases.append((plant, param, single_point_dataset(plant), rho < 1.0))
    return cases
