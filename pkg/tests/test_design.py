import numpy as np
import pytest

from tbdoa.design import (DesignError, ScaledErrorModel, audit, beampattern, design_ls,
                          design_minimax_error, design_minimax_sidelobe, exact_design,
                          interpolation_error_map, sigma_app, transmit_power, with_grid)
from tbdoa.geometry import ArrayGeometry, VirtualStructure, build_sector_grid, irregular_array

WIDE = dict(theta_bounds=(0, 60), phi_bounds=(0, 90), transition=(5, 5), in_step=5.0, out_step=10.0)


def test_ls_self_interpolation_is_identity():
    v = VirtualStructure("ura", 4, 4)
    tx = exact_design(v).tx
    d = design_ls(tx, v, build_sector_grid(**WIDE))
    np.testing.assert_allclose(d.e_matrix, np.eye(16), atol=1e-9)
    assert d.achieved_objective < 1e-9


def test_ls_matches_pseudoinverse_oracle(small_problem):
    tx, v, grid = small_problem
    d = design_ls(tx, v, grid)
    a = tx.steering(grid.in_theta, grid.in_phi)
    at = v.steering(grid.in_theta, grid.in_phi)
    e_ref = np.linalg.pinv(a.conj().T) @ at.conj().T
    np.testing.assert_allclose(d.e_matrix, e_ref, atol=1e-8)


def test_ls_rank_deficiency_is_an_error(small_problem):
    _, v, grid = small_problem
    with pytest.raises(DesignError, match="at least as many points"):
        design_ls(irregular_array(), v, build_sector_grid(in_step=5.0))
    doubled = ArrayGeometry([[0.0, 0.0], [0.0, 0.0], [0.5, 0.0]])
    with pytest.raises(DesignError, match="rank deficient"):
        design_ls(doubled, v, grid)


def test_minimax_sidelobe_respects_bound_and_loosening_helps(small_problem):
    tx, v, grid = small_problem
    levels = []
    for delta in (0.3, 0.5, 1.0):
        d = design_minimax_sidelobe(tx, v, grid, delta)
        rep = audit(d)
        assert rep["feasible"]
        assert rep["worst_constraint"] <= delta + 1e-6
        # achieved objective is measured on the full out-of-sector grid
        assert rep["worst_sidelobe"] == pytest.approx(d.achieved_objective)
        levels.append(d.achieved_objective)
    assert levels[0] >= levels[1] >= levels[2]


def test_minimax_error_gamma_monotonicity(small_problem):
    tx, v, grid = small_problem
    errs = []
    for gamma in (0.6, 1.0, 1.5, 3.0):
        d = design_minimax_error(tx, v, grid, gamma)
        rep = audit(d)
        assert rep["feasible"]
        errs.append(d.achieved_objective)
    assert all(a >= b - 1e-7 for a, b in zip(errs, errs[1:]))


def test_polygon_modulus_design_audits_against_true_modulus(small_problem):
    tx, v, grid = small_problem
    d = design_minimax_sidelobe(tx, v, grid, 0.5, modulus="poly")
    rep = audit(d)
    # the inscribed polygon is conservative, so the true modulus is feasible
    assert rep["feasible"] and rep["worst_constraint"] <= 0.5
    soc = design_minimax_sidelobe(tx, v, grid, 0.5)
    assert d.achieved_objective >= soc.achieved_objective * (1 - 1e-3)


def test_design_argument_validation(small_problem):
    tx, v, grid = small_problem
    with pytest.raises(ValueError):
        design_minimax_sidelobe(tx, v, grid, 0.0)
    with pytest.raises(ValueError):
        design_minimax_sidelobe(tx, v, grid, 0.5, norms=("l2", "l1"))
    with pytest.raises(ValueError):
        design_minimax_error(tx, v, grid, 0.5, modulus="poly", facets=2)


def test_beampattern_and_error_metrics(small_problem):
    tx, v, grid = small_problem
    d = design_ls(tx, v, grid)
    bp = beampattern(d, grid.out_theta, grid.out_phi)
    assert bp.max() == pytest.approx(0.0)
    eps = interpolation_error_map(d, grid.in_theta, grid.in_phi)
    err = d.error(grid.in_theta, grid.in_phi)
    np.testing.assert_allclose(eps ** 2 * v.size, np.sum(np.abs(err) ** 2, 0), rtol=1e-12)
    np.testing.assert_allclose(sigma_app(d, grid.in_theta, grid.in_phi) * v.size,
                               np.sum(np.abs(err) ** 2, 0), rtol=1e-12)
    np.testing.assert_allclose(transmit_power(d, grid.in_theta, grid.in_phi),
                               np.sum(np.abs(d.mapped_steering(grid.in_theta, grid.in_phi)) ** 2, 0))


def test_scaled_error_model_interpolates_between_ideal_and_design(small_problem):
    tx, v, grid = small_problem
    d = design_ls(tx, v, grid)
    th, ph = grid.in_theta[:5], grid.in_phi[:5]
    np.testing.assert_allclose(ScaledErrorModel(d, 0.0).mapped_steering(th, ph), v.steering(th, ph))
    np.testing.assert_allclose(ScaledErrorModel(d, 1.0).mapped_steering(th, ph), d.mapped_steering(th, ph))
    np.testing.assert_allclose(ScaledErrorModel(d, 3.0).error(th, ph), 3 * d.error(th, ph))
    h = 1e-6
    dt, _ = ScaledErrorModel(d, 2.0).mapped_steering_derivatives(th[:1], ph[:1])
    m = ScaledErrorModel(d, 2.0)
    fd = (m.mapped_steering(th[:1] + h, ph[:1]) - m.mapped_steering(th[:1] - h, ph[:1])) / (2 * np.radians(h))
    assert np.abs(dt - fd).max() < 1e-6


def test_exact_design_has_zero_error():
    v = VirtualStructure("l_shaped", 4, 4)
    d = exact_design(v)
    assert np.abs(d.error([20, 33], [10, 66])).max() < 1e-13
    with pytest.raises(ValueError):
        exact_design(VirtualStructure("cross_ula", 4, 4))
    assert with_grid(d, build_sector_grid()).grid is not None


def test_l1_constraint_bounds_sigma_app(design_01, default_grid):
    # ‖·‖₂ ≤ ‖·‖₁ ≤ Δ, so σ²_app ≤ Δ²/M̃ on every in-sector point
    d, _ = design_01
    s = sigma_app(d, default_grid.in_theta, default_grid.in_phi)
    assert s.max() <= 0.1 ** 2 / 16 * (1 + 1e-6)
