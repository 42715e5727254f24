import numpy as np
import pytest
from scipy.optimize import linprog

from tbdoa.conic import RADIUS_T, BlockSocp
from tbdoa.design import DesignInfeasible, _Problem, design_minimax_sidelobe

# Optimal values of the small problem with every 7th out-of-sector direction,
# computed once with an independent general-purpose cone solver.
REFERENCE = {
    "soc": (0.33809503, 0.07154906, 0.26223186),
    "poly": (0.35548004, 0.08831298, 0.32850102),
}


def _matrices(small_problem):
    tx, v, grid = small_problem
    a_in = tx.steering(grid.in_theta, grid.in_phi)
    at_in = v.steering(grid.in_theta, grid.in_phi)
    a_out = tx.steering(grid.out_theta, grid.out_phi)[:, ::7]
    return tx, v, a_in, at_in, a_out


def _build(small_problem, modulus, case):
    tx, v, a_in, at_in, a_out = _matrices(small_problem)
    p = _Problem(tx.size, v.size, modulus, 8)
    if case == 0:
        p.norm_block(a_in, at_in, "l1", 0.5)
        p.norm_block(a_out, None, "linf", "t")
    elif case == 1:
        p.norm_block(a_in, at_in, "linf", "t")
        p.norm_block(a_out, None, "l1", 1.5)
    else:
        p.norm_block(a_in, at_in, "l1", "t")
        p.norm_block(a_out, None, "l1", 1.5)
    return p


@pytest.mark.parametrize("modulus", ["soc", "poly"])
@pytest.mark.parametrize("case", [0, 1, 2])
def test_block_solver_matches_reference(small_problem, modulus, case):
    e, t, status = _build(small_problem, modulus, case).solve()
    assert status == "optimal"
    assert t == pytest.approx(REFERENCE[modulus][case], rel=1e-6)


def test_block_solver_solution_satisfies_constraints(small_problem):
    tx, v, a_in, at_in, a_out = _matrices(small_problem)
    e, t, _ = _build(small_problem, "soc", 0).solve()
    err = np.abs(e.conj().T @ a_in - at_in).sum(0)
    assert err.max() <= 0.5 + 1e-6
    assert np.abs(e.conj().T @ a_out).max() <= t + 1e-6


def _poly_case0_linprog(small_problem, facets=8):
    """Dense LP for case 0 with an inscribed polygon, solved by HiGHS."""
    tx, v, a_in, at_in, a_out = _matrices(small_problem)
    m, mt = tx.size, v.size
    n_in, n_out = a_in.shape[1], a_out.shape[1]
    # variables: [Re E (m×mt, column-major by output), Im E, s (n_in×mt), t]
    nx = 2 * m * mt
    ns = n_in * mt
    nv = nx + ns + 1
    ang = 2 * np.pi * np.arange(facets) / facets
    shrink = np.cos(np.pi / facets)
    rows, rhs = [], []

    def modulus_rows(a, k, target, rvar, rconst):
        # w = e_kᴴa − target = (er·ar + ei·ai) + j(er·ai − ei·ar) − target
        for c, s in zip(np.cos(ang), np.sin(ang)):
            r = np.zeros(nv)
            r[k * m:(k + 1) * m] = c * a.real + s * a.imag
            r[nx // 2 + k * m:nx // 2 + (k + 1) * m] = c * a.imag - s * a.real
            if rvar is not None:
                r[rvar] = -shrink
            rows.append(r)
            rhs.append(c * target.real + s * target.imag + shrink * rconst)

    for g in range(n_in):
        for k in range(mt):
            modulus_rows(a_in[:, g], k, at_in[k, g], nx + g * mt + k, 0.0)
        r = np.zeros(nv)
        r[nx + g * mt:nx + (g + 1) * mt] = 1.0
        rows.append(r)
        rhs.append(0.5)
    for h in range(n_out):
        for k in range(mt):
            modulus_rows(a_out[:, h], k, 0j, nv - 1, 0.0)
    c = np.zeros(nv)
    c[-1] = 1.0
    bounds = [(None, None)] * nx + [(0, None)] * (ns + 1)
    res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds, method="highs")
    assert res.status == 0
    return res.fun


def test_polygon_modulus_matches_independent_lp(small_problem):
    _, t, _ = _build(small_problem, "poly", 0).solve()
    assert t == pytest.approx(_poly_case0_linprog(small_problem), rel=1e-6)


def test_polygon_is_conservative_relative_to_cone():
    # the inscribed polygon shrinks the feasible set, so its optimum is higher
    for soc, poly in zip(REFERENCE["soc"], REFERENCE["poly"]):
        assert poly >= soc


def test_block_socp_hand_problem():
    # min t s.t. |x − 3| ≤ t and |x − 4j| ≤ t: midpoint 1.5 + 2j, t = 2.5
    p = BlockSocp(1, 2)
    eye = np.eye(2)
    p.add_modulus([0, 0], np.array([eye[0], eye[0]]), np.array([eye[1], eye[1]]),
                  np.array([3.0, 4j]), RADIUS_T, [0, 0])
    x, t, status, _ = p.solve()
    assert status == "optimal"
    assert t == pytest.approx(2.5, abs=1e-7)
    np.testing.assert_allclose(x[:2], [1.5, 2.0], atol=1e-6)


def test_infeasible_design_is_reported(small_problem):
    tx, v, grid = small_problem
    with pytest.raises(DesignInfeasible) as info:
        design_minimax_sidelobe(tx, v, grid, 1e-4)
    th, ph = info.value.direction
    assert 30 <= th <= 40 and 65 <= ph <= 75


def test_kkt_breakdown_returns_best_iterate(small_problem, monkeypatch):
    socp = _build(small_problem, "soc", 0).socp
    _, _, status, info = socp.solve()
    assert status == "optimal"
    n_iter = info["iterations"]
    # fail the factorization on the final step, after the iterate is already close
    real_kkt, calls = BlockSocp._kkt, []

    def failing_kkt(self, *args):
        calls.append(1)
        if len(calls) == n_iter + 1:
            raise np.linalg.LinAlgError("not positive definite")
        return real_kkt(self, *args)

    monkeypatch.setattr(BlockSocp, "_kkt", failing_kkt)
    socp = _build(small_problem, "soc", 0).socp
    _, t, status, info = socp.solve()
    assert status == "inaccurate" and info["iterations"] == n_iter - 1
    assert t == pytest.approx(REFERENCE["soc"][0], rel=1e-4)
