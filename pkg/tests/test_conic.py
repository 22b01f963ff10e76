import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpvfrd.conic import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    ConicProgram,
    check_feasible,
    cone_violation,
    solve,
)
from lpvfrd.errors import IllFormedProgram

cvxopt = pytest.importorskip("cvxopt")


def random_socp(rng, n=3, k=4, d=3, radius=5.0):
    """Strictly feasible, bounded SOCP ``min c'x`` with ``k`` affine cones and a ball."""
    x0 = rng.standard_normal(n)
    G_blocks, h_blocks = [], []
    for _ in range(k):
        G = rng.standard_normal((d, n))
        s0 = rng.standard_normal(d)
        s0[0] = np.linalg.norm(s0[1:]) + rng.uniform(0.1, 1.0)
        G_blocks.append(G)
        h_blocks.append(s0 + G @ x0)
    # ||x|| <= radius + ||x0|| keeps the program bounded
    G_blocks.append(np.vstack([np.zeros(n), -np.eye(n)]))
    h_blocks.append(np.r_[radius + np.linalg.norm(x0), np.zeros(n)])
    c = rng.standard_normal(n)
    return ConicProgram(c, np.vstack(G_blocks), np.concatenate(h_blocks), (d,) * k + (n + 1,))


def cvxopt_optimum(prog):
    cvxopt.solvers.options.update(show_progress=False, abstol=1e-9, reltol=1e-9, feastol=1e-9)
    Gq, hq, r = [], [], 0
    for d in prog.cone_dims:
        Gq.append(cvxopt.matrix(prog.G[r:r + d]))
        hq.append(cvxopt.matrix(prog.h[r:r + d]))
        r += d
    sol = cvxopt.solvers.socp(cvxopt.matrix(prog.c), Gq=Gq, hq=hq)
    assert sol["status"] == "optimal"
    return float(sol["primal objective"])


def grid_optimum(prog, lo=-3.0, hi=3.0, n=401, zooms=5):
    """Brute-force minimum of a 2-variable program by successive grid refinement."""
    cx, cy, half = (lo + hi) / 2, (lo + hi) / 2, (hi - lo) / 2
    best = math.inf
    for _ in range(zooms):
        xs = np.linspace(cx - half, cx + half, n)
        ys = np.linspace(cy - half, cy + half, n)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        P = np.stack([X.ravel(), Y.ravel()], axis=1)
        S = prog.h[None, :] - P @ prog.G.T
        ok = np.ones(len(P), bool)
        r = 0
        for d in prog.cone_dims:
            blk = S[:, r:r + d]
            ok &= blk[:, 0] >= np.linalg.norm(blk[:, 1:], axis=1)
            r += d
        obj = np.where(ok, P @ prog.c, math.inf)
        i = int(np.argmin(obj))
        best = min(best, obj[i])
        cx, cy = P[i]
        half = 25 * (xs[1] - xs[0])
    return best


def test_norm_of_ones():
    prog = ConicProgram.with_variable_cones([1.0, 0.0, 0.0], [(0, 1, 2)], A=[[0, 1, 0], [0, 0, 1]], b=[1, 1])
    sol = solve(prog)
    assert sol.status == OPTIMAL
    assert sol.x[0] == pytest.approx(math.sqrt(2), abs=1e-7)


def test_equality_only():
    # x = 3 with a vacuous cone (1, 0) >= 0 on an auxiliary row
    prog = ConicProgram([1.0], [[0.0], [0.0]], [1.0, 0.0], (2,), A=[[1.0]], b=[3.0])
    sol = solve(prog)
    assert sol.status == OPTIMAL
    assert sol.x[0] == pytest.approx(3.0, abs=1e-8)


def test_negative_head_infeasible():
    prog = ConicProgram.with_variable_cones([0.0, 0.0], [(0, 1)], A=[[1.0, 0.0]], b=[-1.0])
    res = check_feasible(prog)
    assert not res.feasible
    y, z = res.certificate
    assert np.linalg.norm(prog.A.T @ y + prog.G.T @ z) < 1e-6 * (1 + np.linalg.norm(z))
    assert prog.b @ y + prog.h @ z < 0


def test_unit_head_feasible_with_centred_witness():
    prog = ConicProgram.with_variable_cones([0.0, 0.0, 0.0], [(0, 1, 2)], A=[[1.0, 0.0, 0.0]], b=[1.0])
    res = check_feasible(prog)
    assert res.feasible
    assert res.witness[0] == pytest.approx(1.0, abs=1e-8)
    assert np.linalg.norm(res.witness[1:]) < 1e-6


def test_unbounded():
    prog = ConicProgram.with_variable_cones([-1.0, 0.0], [(0, 1)])
    assert solve(prog).status == UNBOUNDED


def test_primal_infeasible_status():
    # x0 >= |x1| and x0 <= -1 cannot both hold
    prog = ConicProgram([0.0, 0.0], [[-1.0, 0.0], [0.0, -1.0], [1.0, 0.0], [0.0, 0.0]],
                        [0.0, 0.0, -1.0, 0.0], (2, 2))
    assert solve(prog).status == INFEASIBLE


@pytest.mark.parametrize("kwargs", [
    dict(c=[1.0], G=[[1.0]], h=[0.0], cone_dims=(1,)),
    dict(c=[1.0], G=[[1.0], [0.0]], h=[0.0], cone_dims=(2,)),
    dict(c=[1.0], G=[[1.0], [0.0]], h=[0.0, 0.0], cone_dims=(3,)),
    dict(c=[math.nan], G=[[1.0], [0.0]], h=[0.0, 0.0], cone_dims=(2,)),
    dict(c=[1.0], G=[[1.0], [0.0]], h=[0.0, 0.0], cone_dims=(2,), A=[[1.0]], b=[1.0, 2.0]),
])
def test_ill_formed(kwargs):
    with pytest.raises(IllFormedProgram):
        ConicProgram(**kwargs)


def test_repeated_index_in_cone():
    with pytest.raises(IllFormedProgram):
        ConicProgram.with_variable_cones([1.0, 0.0], [(0, 0)])
    with pytest.raises(IllFormedProgram):
        ConicProgram.with_variable_cones([1.0, 0.0], [(0, 5)])


def test_dump_lists_nonzeros():
    prog = ConicProgram.with_variable_cones([1.0, 0.0, 0.0], [(0, 1, 2)], A=[[0, 1, 0]], b=[1])
    text = prog.dump()
    assert text.splitlines()[0] == "n 3 m 3 p 1"
    assert "cones 3" in text and "c 0 1.0" in text and "b 0 1.0" in text
    assert sum(line.startswith("G ") for line in text.splitlines()) == 3


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_matches_cvxopt(seed):
    prog = random_socp(np.random.default_rng(seed))
    sol = solve(prog)
    assert sol.status == OPTIMAL
    ref = cvxopt_optimum(prog)
    assert abs(sol.primal_objective - ref) < 1e-6 * (1 + abs(ref))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_matches_grid_search(seed):
    rng = np.random.default_rng(seed)
    prog = random_socp(rng, n=2, k=3, radius=0.5)
    sol = solve(prog)
    assert sol.status == OPTIMAL
    lim = np.linalg.norm(sol.x) + 1.0
    ref = grid_optimum(prog, -lim, lim)
    assert abs(sol.primal_objective - ref) < 1e-4


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_optimality_invariants(seed):
    prog = random_socp(np.random.default_rng(seed), n=4, k=5, d=4)
    tol = 1e-8
    sol = solve(prog, tol=tol)
    assert sol.status == OPTIMAL
    assert cone_violation(prog, sol.x) < tol
    assert sol.primal_objective >= sol.dual_objective - tol
    assert sol.primal_residual < tol and sol.dual_residual < tol
    again = solve(prog, tol=tol)
    np.testing.assert_array_equal(again.x, sol.x)
    assert again.iterations == sol.iterations
