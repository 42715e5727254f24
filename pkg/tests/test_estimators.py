from dataclasses import dataclass, replace

import numpy as np
import pytest

from tbdoa.design import exact_design
from tbdoa.estimators import (EstimationError, MusicSearch, estimate, hosvd_esprit, matrix_esprit,
                              pair_eigensystems, separating_combination, tensor_subspace_matrix, tev,
                              with_correction)
from tbdoa.geometry import VirtualStructure
from tbdoa.sim import RadarScene, noiseless_snapshots, simulate

from conftest import SCENE_PHIS, SCENE_THETAS

SUBSPACE_ESTIMATORS = ("matrix_esprit", "hosvd_esprit", "tev")


@dataclass(frozen=True)
class IdealModel:
    """Transmit model whose mapped steering is exactly the virtual steering."""
    virtual: VirtualStructure

    def mapped_steering(self, theta, phi):
        return self.virtual.steering(theta, phi)

    def mapped_steering_derivatives(self, theta, phi):
        return self.virtual.steering_derivatives(theta, phi)


RCS = np.array([[1.0, 1j, -1, 0.5 - 0.5j, 2, 1j, 1, -1j],
                [0.3j, 1, 1 + 1j, -1, 0.7, -0.2j, 1j, 1]])


def _clean(kind, thetas=SCENE_THETAS, phis=SCENE_PHIS, rx=None):
    v = VirtualStructure(kind, 4, 4)
    model = IdealModel(v) if kind == "cross_ula" else exact_design(v)
    return noiseless_snapshots(model, rx, thetas, phis, RCS[:len(thetas)]), model


@pytest.mark.parametrize("kind", ["ura", "l_shaped", "cross_ula"])
@pytest.mark.parametrize("name", SUBSPACE_ESTIMATORS)
def test_exact_recovery_noiseless(default_rx, kind, name):
    thetas, phis = (SCENE_THETAS, SCENE_PHIS) if kind != "cross_ula" else (np.array([20.0, 35.0]),
                                                                          np.array([40.0, 10.0]))
    snap, _ = _clean(kind, thetas, phis, default_rx)
    est = estimate(snap, 2, name)
    order = np.lexsort((phis, thetas))
    np.testing.assert_allclose(est.theta, thetas[order], atol=1e-8)
    np.testing.assert_allclose(est.phi, phis[order], atol=1e-8)
    assert est.estimator == name and est.k == 2


def test_music_exact_recovery_on_grid_and_off_grid(default_rx):
    snap, model = _clean("ura", rx=default_rx)
    search = MusicSearch(model, default_rx, (30, 40), (65, 75), step=0.5)
    est = estimate(snap, 2, "music", search)
    np.testing.assert_allclose(est.theta, SCENE_THETAS, atol=1e-4)
    np.testing.assert_allclose(est.phi, SCENE_PHIS, atol=1e-4)
    off, _ = _clean("ura", np.array([33.23, 38.71]), np.array([66.37, 70.88]), default_rx)
    est = estimate(off, 2, "music", search)
    np.testing.assert_allclose(est.theta, [33.23, 38.71], atol=1e-3)
    assert not est.notes


def test_music_reports_resolution_failure(default_rx):
    # two targets 0.2° apart cannot produce two separated peaks on a 0.5° grid
    snap, model = _clean("ura", np.array([35.0, 35.2]), np.array([70.0, 70.0]), default_rx)
    est = estimate(snap, 2, "music", MusicSearch(model, default_rx, (30, 40), (65, 75), step=0.5))
    assert any("resolution failure" in n for n in est.notes)
    assert est.k == 2 and np.all(np.isfinite(est.theta))


def test_pulse_permutation_and_common_phase_invariance(default_rx, rng):
    v = VirtualStructure("ura", 4, 4)
    model = exact_design(v)
    snap = simulate(RadarScene(tuple(zip(SCENE_THETAS, SCENE_PHIS)), noise_variance=0.05, rng_seed=2),
                    model, default_rx)
    perm = rng.permutation(snap.matrix.shape[1])
    variants = [replace(snap, matrix=snap.matrix[:, perm]),
                replace(snap, matrix=snap.matrix * np.exp(0.7j))]
    for name in SUBSPACE_ESTIMATORS:
        ref = estimate(snap, 2, name)
        for other in variants:
            est = estimate(other, 2, name)
            np.testing.assert_allclose(est.theta, ref.theta, atol=1e-9)
            np.testing.assert_allclose(est.phi, ref.phi, atol=1e-9)


def test_tev_equals_hosvd_esprit_for_one_target(default_rx):
    model = exact_design(VirtualStructure("ura", 4, 4))
    for seed in range(5):
        snap = simulate(RadarScene(((34, 66),), noise_variance=0.5, rng_seed=seed), model, default_rx)
        a, b = hosvd_esprit(snap, 1), tev(snap, 1)
        np.testing.assert_allclose(a.theta, b.theta, atol=1e-9)
        np.testing.assert_allclose(a.phi, b.phi, atol=1e-9)


def test_tensor_subspace_equals_matrix_subspace_noiseless(default_rx):
    snap, _ = _clean("ura", rx=default_rx)
    ut = tensor_subspace_matrix(snap, 2)
    um = np.linalg.svd(snap.matrix, full_matrices=False)[0][:, :2]
    qt, _ = np.linalg.qr(ut)
    assert np.linalg.norm(qt - um @ (um.conj().T @ qt), 2) < 1e-10


def test_pairing_recovers_permutation(rng):
    t = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    perm = np.array([2, 0, 1])
    noisy = t[:, perm] * np.array([1j, -1, 2]) + 1e-3 * rng.standard_normal((3, 3))
    got, ambiguous = pair_eigensystems(t, noisy)
    np.testing.assert_array_equal(perm[got], np.arange(3))
    assert not ambiguous
    _, ambiguous = pair_eigensystems(t, t, np.array([1.0, 1.0, 2.0]), None)
    assert ambiguous


def test_separating_combination_prefers_split_eigenvalues():
    psi_mu = np.diag([1.0, 1.0])  # degenerate on its own
    psi_nu = np.diag([1.0, -1.0])
    lam = np.linalg.eigvals(separating_combination(psi_mu, psi_nu))
    assert abs(lam[0] - lam[1]) > 0.5


def test_bad_k_and_unknown_estimator(default_rx):
    snap, model = _clean("ura", rx=default_rx)
    with pytest.raises(EstimationError):
        matrix_esprit(snap, 9)
    with pytest.raises(EstimationError, match="numerical rank"):
        matrix_esprit(snap, 3)
    with pytest.raises(ValueError):
        estimate(snap, 2, "root_music")
    with pytest.raises(ValueError):
        estimate(snap, 2, "music")


def test_with_correction_and_best_angles(default_rx):
    snap, _ = _clean("ura", rx=default_rx)
    est = matrix_esprit(snap, 2)
    assert not est.corrected
    fixed = with_correction(est, [1.0, 2.0], [3.0, 4.0])
    assert fixed.corrected
    np.testing.assert_array_equal(fixed.best_angles()[0], [1.0, 2.0])
    np.testing.assert_array_equal(est.best_angles()[1], est.phi)
