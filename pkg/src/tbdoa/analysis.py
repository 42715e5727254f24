"""Performance analysis: CRB, interpolation-error bias, look-up tables, metrics.

Conventions
-----------
* Angles are degrees at the interface; CRBs and predicted MSEs are deg².
* The bias model treats the designed error ΔA = Eᴴa − ã as a deterministic
  first-order perturbation of the ideal noiseless signal subspace. The
  matrix-ESPRIT eigenvalue shift for target k is
  Δλ_k = p_kᴴ (Ω1 U_s)† (Ω2 − λ_k Ω1) U_n U_nᴴ Δf_k,
  with Δf_k = Δã_k ⊗ b_k and (p_k, q_k) normalized so that F₀†U_s q_k = e_k.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import linear_sum_assignment

from .estimators import EstimationError, estimate, with_correction
from .geometry import ArrayGeometry, cosine_jacobian, cosines_to_angles, direction_cosines
from .sim import (SnapshotSet, noiseless_snapshots, steering_matrix_f,
                  steering_matrix_f_derivatives)


class SingularSceneError(ValueError):
    pass


# ------------------------------------------------------------------- CRB

@dataclass(frozen=True)
class CrbReport:
    theta_var: np.ndarray  # deg², per target
    phi_var: np.ndarray
    noise_variance: float
    fisher: np.ndarray  # 2K × 2K, per rad² (θ block then φ block)

    @property
    def mean_theta(self) -> float:
        return float(np.mean(self.theta_var))

    @property
    def mean_phi(self) -> float:
        return float(np.mean(self.phi_var))


def crb(model, rx: ArrayGeometry, theta, phi, rcs: np.ndarray, noise_variance: float) -> CrbReport:
    """Deterministic (conditional) CRB for the given RCS realization P (K×Q).

    J = (2/σ²) Σ_q Re{C_qᴴ Dᴴ P⊥_F D C_q} with D = [∂F/∂θ, ∂F/∂φ] and
    C_q = I₂ ⊗ diag(β(q)); the bound is diag(J⁻¹) in deg².
    """
    theta, phi = np.atleast_1d(theta).astype(float), np.atleast_1d(phi).astype(float)
    if noise_variance <= 0:
        raise ValueError("noise_variance must be positive for a finite bound")
    f = steering_matrix_f(model, rx, theta, phi)
    k = f.shape[1]
    s = np.linalg.svd(f, compute_uv=False)
    if s[-1] <= 1e-10 * s[0]:
        raise SingularSceneError("steering matrix F is rank deficient (coincident targets?)")
    d = np.hstack(steering_matrix_f_derivatives(model, rx, theta, phi))
    q_f, _ = np.linalg.qr(f)
    pd = d - q_f @ (q_f.conj().T @ d)
    h = d.conj().T @ pd  # Dᴴ P⊥ D
    p = np.asarray(rcs, complex).reshape(k, -1)
    c = np.vstack([p, p])  # diagonal entries of C_q stacked over q
    # Σ_q C_qᴴ H C_q = H ∘ (Σ_q c_q* c_qᵀ)
    fim = 2.0 / noise_variance * np.real(h * (c.conj() @ c.T))
    try:
        cov = np.linalg.inv(fim)
    except np.linalg.LinAlgError as exc:
        raise SingularSceneError("Fisher information is singular") from exc
    var = np.degrees(np.degrees(np.diag(cov)))
    return CrbReport(var[:k], var[k:], float(noise_variance), fim)


def derivative_fd_error(model, rx: ArrayGeometry, theta, phi, step: float = 1e-6) -> float:
    """Largest relative error between analytic ∂F and central differences (step in rad)."""
    theta, phi = np.atleast_1d(theta).astype(float), np.atleast_1d(phi).astype(float)
    dth, dph = steering_matrix_f_derivatives(model, rx, theta, phi)
    h = np.degrees(step)
    fd_th = (steering_matrix_f(model, rx, theta + h, phi) - steering_matrix_f(model, rx, theta - h, phi)) / (2 * step)
    fd_ph = (steering_matrix_f(model, rx, theta, phi + h) - steering_matrix_f(model, rx, theta, phi - h)) / (2 * step)
    return float(max(np.linalg.norm(fd_th - dth) / np.linalg.norm(dth),
                     np.linalg.norm(fd_ph - dph) / np.linalg.norm(dph)))


# ------------------------------------------------------------------ bias

@dataclass(frozen=True)
class BiasPrediction:
    """Per-target first-order bias and i.i.d.-error MSE prediction."""
    dmu: np.ndarray
    dnu: np.ndarray
    dtheta: np.ndarray  # deg
    dphi: np.ndarray  # deg
    mse_mu: np.ndarray
    mse_nu: np.ndarray
    mse_theta: np.ndarray  # deg²
    mse_phi: np.ndarray  # deg²
    sigma_app: np.ndarray
    alpha_norms: np.ndarray  # (K, 2)
    beta_norms: np.ndarray  # (K, 2)

    @property
    def rms_theta(self) -> np.ndarray:
        return np.sqrt(self.mse_theta)

    @property
    def rms_phi(self) -> np.ndarray:
        return np.sqrt(self.mse_phi)


def _ideal_subspace(virtual, rx, theta, phi):
    at = virtual.steering(theta, phi)
    b = rx.steering(theta, phi)
    f0 = (at[:, None, :] * b[None]).reshape(-1, at.shape[1])
    u, s, _ = np.linalg.svd(f0, full_matrices=True)
    k = f0.shape[1]
    if s[-1] <= 1e-10 * s[0]:
        raise SingularSceneError("ideal steering matrix is rank deficient")
    return f0, u[:, :k], u[:, k:]


def bias_predict(model, rx: ArrayGeometry, theta, phi) -> BiasPrediction:
    """First-order interpolation bias of noiseless matrix ESPRIT.

    ``model`` supplies the designed ``error(θ, φ)``; its ``virtual`` the
    ideal structure. MSE predictions follow the i.i.d.-error model
    E|Δμ_k|² = σ²_app ‖α_k‖² ‖β_k‖² / (2 (2π d)²), d the virtual spacing.
    """
    theta, phi = np.atleast_1d(theta).astype(float), np.atleast_1d(phi).astype(float)
    v = model.virtual
    n_rx = rx.size
    f0, us, un = _ideal_subspace(v, rx, theta, phi)
    k = f0.shape[1]
    r = np.linalg.lstsq(f0, us, rcond=None)[0]  # U_s = F₀ R
    q = np.linalg.inv(r)  # right eigenvectors, column k ↔ target k
    ph_rows = r  # left eigenvectors pᴴ = rows of R
    b = rx.steering(theta, phi)
    dat = model.error(theta, phi)
    df = (dat[:, None, :] * b[None]).reshape(-1, k)
    proj_n = un @ un.conj().T
    scale = 2 * np.pi * v.spacing
    sig = np.sum(np.abs(dat) ** 2, axis=0) / v.size
    dcos = np.zeros((k, 2))
    mse = np.zeros((k, 2))
    an = np.zeros((k, 2))
    bn = np.zeros((k, 2))
    cosines = v.cosines(theta, phi)
    for axis in range(2):
        i1, i2 = v.full_shift_indices(axis, n_rx)
        w = np.linalg.pinv(us[i1])
        lam = np.exp(-1j * scale * np.asarray(cosines[axis]))
        for j in range(k):
            shift = np.zeros((len(i1), us.shape[0]), complex)
            shift[np.arange(len(i1)), i2] = 1.0 / lam[j]
            shift[np.arange(len(i1)), i1] -= 1.0
            alpha_h = ph_rows[j] @ w @ shift @ proj_n  # αᴴ (row)
            beta = np.linalg.lstsq(f0, us @ q[:, j], rcond=None)[0]
            an[j, axis] = np.linalg.norm(alpha_h)
            bn[j, axis] = np.linalg.norm(beta)
            dlam_over_lam = alpha_h @ df[:, j]
            dcos[j, axis] = -np.imag(dlam_over_lam) / scale
            mse[j, axis] = sig[j] * an[j, axis] ** 2 * bn[j, axis] ** 2 / (2 * scale ** 2)
    jac = cosine_jacobian(theta, phi, v.kind)  # (K, 2, 2), rad per cosine
    dang = np.degrees(np.einsum("kij,kj->ki", jac, dcos))
    mse_ang = np.degrees(np.degrees(np.einsum("kij,kj->ki", jac ** 2, mse)))
    return BiasPrediction(dcos[:, 0], dcos[:, 1], dang[:, 0], dang[:, 1], mse[:, 0], mse[:, 1],
                          mse_ang[:, 0], mse_ang[:, 1], sig, an, bn)


def empirical_bias(model, rx: ArrayGeometry, theta, phi, estimator: str = "matrix_esprit",
                   pulses: int = 4, seed: int = 0):
    """Noiseless estimate minus truth in cosine and angle space, per target.

    Returns ``(dmu, dnu, dtheta, dphi)`` matched to the truth ordering.
    """
    theta, phi = np.atleast_1d(theta).astype(float), np.atleast_1d(phi).astype(float)
    k = theta.size
    rng = np.random.default_rng(seed)
    p = (rng.standard_normal((k, max(pulses, k))) + 1j * rng.standard_normal((k, max(pulses, k)))) / np.sqrt(2)
    snap = noiseless_snapshots(model, rx, theta, phi, p)
    est = estimate(snap, k, estimator)
    perm = match_to_truth(est.theta, est.phi, theta, phi)
    mu, nu = direction_cosines(theta, phi, model.virtual.kind)
    return (est.mu[perm] - mu, est.nu[perm] - nu, est.theta[perm] - theta, est.phi[perm] - phi)


# ------------------------------------------------------------------- LUT

@dataclass(frozen=True)
class LookUpTable:
    """Noise-free estimator images of a regular (θ, φ) lattice.

    ``mu_est[i, j]`` is the estimate for truth (theta_axis[i], phi_axis[j]).
    Corrections are interpolated in cosine space over the true lattice and
    inverted by fixed-point iteration.
    """
    theta_axis: np.ndarray
    phi_axis: np.ndarray
    mu_true: np.ndarray
    nu_true: np.ndarray
    mu_est: np.ndarray
    nu_est: np.ndarray
    kind: str
    estimator: str
    flagged: np.ndarray

    @property
    def step(self) -> float:
        return float(self.theta_axis[1] - self.theta_axis[0]) if self.theta_axis.size > 1 else float("nan")

    @property
    def shape(self) -> tuple:
        return self.mu_true.shape

    def _interpolators(self):
        if not hasattr(self, "_interp"):
            axes = (self.theta_axis, self.phi_axis)
            cm = RegularGridInterpolator(axes, self.mu_est - self.mu_true, method="linear")
            cn = RegularGridInterpolator(axes, self.nu_est - self.nu_true, method="linear")
            object.__setattr__(self, "_interp", (cm, cn))
        return self._interp

    def correct(self, mu_hat, nu_hat, tol: float = 1e-13, max_iter: int = 100):
        """Invert the estimator map: find (μ, ν) whose image is (μ̂, ν̂)."""
        mu_hat, nu_hat = np.atleast_1d(mu_hat).astype(float), np.atleast_1d(nu_hat).astype(float)
        cm, cn = self._interpolators()
        lo = (self.theta_axis[0], self.phi_axis[0])
        hi = (self.theta_axis[-1], self.phi_axis[-1])
        mu, nu = mu_hat.copy(), nu_hat.copy()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for _ in range(max_iter):
                th, ph = cosines_to_angles(mu, nu, self.kind)
                pts = np.c_[np.clip(th, lo[0], hi[0]), np.clip(ph, lo[1], hi[1])]
                mu_new, nu_new = mu_hat - cm(pts), nu_hat - cn(pts)
                done = np.max(np.abs(np.r_[mu_new - mu, nu_new - nu])) <= tol
                mu, nu = mu_new, nu_new
                if done:
                    break
            th, ph = cosines_to_angles(mu, nu, self.kind)
        # judged on the converged point; round-off at the edge does not count
        outside = bool(np.any((th < lo[0] - 1e-9) | (th > hi[0] + 1e-9)
                              | (ph < lo[1] - 1e-9) | (ph > hi[1] + 1e-9)))
        if outside:
            warnings.warn("estimate outside the look-up table; nearest-edge correction used",
                          RuntimeWarning, stacklevel=2)
        return mu, nu


def _fill_flagged(values: np.ndarray, flagged: np.ndarray) -> np.ndarray:
    """Replace flagged lattice entries by the mean of valid 4-neighbours (repeated)."""
    out = values.copy()
    bad = flagged.copy()
    while bad.any():
        if bad.all():
            raise EstimationError("estimator failed on every lattice point")
        new = out.copy()
        for i, j in np.argwhere(bad):
            nb = [(i + di, j + dj) for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))
                  if 0 <= i + di < out.shape[0] and 0 <= j + dj < out.shape[1] and not bad[i + di, j + dj]]
            if nb:
                new[i, j] = np.mean([out[p] for p in nb])
        progressed = ~np.isnan(new) & bad & (new != out)
        bad = bad & ~progressed
        out = new
        if not progressed.any():
            break
    return out


def build_lut(model, rx: ArrayGeometry, estimator: str = "hosvd_esprit",
              theta_bounds=(30.0, 40.0), phi_bounds=(65.0, 75.0), step: float = 0.1) -> LookUpTable:
    """Run the estimator on a noise-free single-target snapshot per lattice point."""
    if estimator not in ("matrix_esprit", "hosvd_esprit", "tev"):
        raise ValueError("look-up tables are built for the ESPRIT-family estimators")
    n_th = int(round((theta_bounds[1] - theta_bounds[0]) / step)) + 1
    n_ph = int(round((phi_bounds[1] - phi_bounds[0]) / step)) + 1
    th_axis = theta_bounds[0] + step * np.arange(n_th)
    ph_axis = phi_bounds[0] + step * np.arange(n_ph)
    th, ph = np.meshgrid(th_axis, ph_axis, indexing="ij")
    mu_t, nu_t = direction_cosines(th, ph, model.virtual.kind)
    mu_e = np.full(th.shape, np.nan)
    nu_e = np.full(th.shape, np.nan)
    f = steering_matrix_f(model, rx, th.ravel(), ph.ravel())
    dims = model.virtual.tensor_dims
    for idx in range(f.shape[1]):
        i, j = divmod(idx, n_ph)
        snap = SnapshotSet(f[:, idx:idx + 1], dims, rx.size, None, None, model.virtual)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                est = estimate(snap, 1, estimator)
            mu_e[i, j], nu_e[i, j] = est.mu[0], est.nu[0]
        except (EstimationError, np.linalg.LinAlgError):
            pass
    flagged = ~np.isfinite(mu_e) | ~np.isfinite(nu_e)
    if flagged.any():
        warnings.warn(f"{int(flagged.sum())} lattice points failed; filled from neighbours",
                      RuntimeWarning, stacklevel=2)
        mu_e = _fill_flagged(mu_e, flagged)
        nu_e = _fill_flagged(nu_e, flagged)
    return LookUpTable(th_axis, ph_axis, mu_t, nu_t, mu_e, nu_e, model.virtual.kind, estimator, flagged)


def apply_lut(lut: LookUpTable, est):
    """Fill the corrected angles of ``est`` from the look-up table."""
    mu, nu = lut.correct(est.mu, est.nu)
    th, ph = cosines_to_angles(mu, nu, lut.kind)
    return with_correction(est, th, ph)


# --------------------------------------------------------------- metrics

def match_to_truth(theta_est, phi_est, theta_true, phi_true) -> np.ndarray:
    """Permutation ``perm`` so estimate ``perm[k]`` is assigned to truth k.

    Minimizes the total angular distance; NaN estimates cost a large penalty.
    """
    te, pe = np.asarray(theta_est, float), np.asarray(phi_est, float)
    tt, pt = np.asarray(theta_true, float), np.asarray(phi_true, float)
    cost = np.hypot(tt[:, None] - te[None, :], pt[:, None] - pe[None, :])
    cost = np.where(np.isfinite(cost), cost, 1e6)
    _, cols = linear_sum_assignment(cost)
    return cols


def _as_trials(est, truth):
    est = np.asarray(est, float)
    truth = np.asarray(truth, float).ravel()
    if est.ndim == 1:
        est = est.reshape(-1, truth.size)
    if est.shape[0] == 0:
        raise ValueError("no trials")
    return est, truth


def rmse(estimates, truth) -> float:
    """√(mean over trials of (1/K) Σ_k (x̂_k − x_k)²); estimates are (trials, K)."""
    est, truth = _as_trials(estimates, truth)
    return float(np.sqrt(np.mean(np.mean((est - truth) ** 2, axis=1))))


def resolution_probability(theta_est, phi_est, theta_true, phi_true):
    """Fraction of trials resolving both targets, per axis (θ, φ).

    A trial resolves an axis when |x̂_p − x_p| < |x₁ − x₂|/2 for p = 1, 2.
    """
    out = []
    for est, truth in ((theta_est, theta_true), (phi_est, phi_true)):
        est, truth = _as_trials(est, truth)
        if truth.size != 2:
            raise ValueError("resolution needs exactly two targets")
        half = abs(truth[0] - truth[1]) / 2
        ok = np.all(np.abs(est - truth) < half, axis=1)
        out.append(float(np.mean(ok)))
    return tuple(out)


def variance_floor(crb_value: float, trials: int) -> float:
    """Lower 3σ confidence limit for a sample variance whose mean is ``crb_value``."""
    if trials < 2:
        return 0.0
    return crb_value * max(0.0, 1 - 3 * np.sqrt(2.0 / (trials - 1)))
