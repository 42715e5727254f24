"""Direction finding from transmit-beamspace MIMO snapshots.

ESPRIT-family estimators use the shift invariance of the virtual transmit
structure: for axis r the rows ``Ω1``/``Ω2`` of the stacked vector satisfy
Ω2 f = exp(−j2π·d·cosine_r)·Ω1 f, so the eigenvalues of the least-squares
shift operator Ψ_r = (Ω1 U)† Ω2 U carry the direction cosines.

* ``matrix_esprit``: U = leading left singular vectors of Ỹ.
* ``hosvd_esprit``: U = last-mode unfolding of the truncated HOSVD subspace.
* ``tev``: the HOSVD subspace split into per-target slices, each reduced to
  rank one; cosines from scalar shift equations, paired by construction.
* ``spectral_music_2d``: grid search of the MUSIC pseudo-spectrum using the
  mapped steering Eᴴa, followed by local refinement.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.optimize import minimize

from .geometry import VirtualStructure, cosines_to_angles, direction_cosines
from .sim import SnapshotSet, steering_matrix_f
from .tensor import truncated_signal_subspace, unfold

ESTIMATORS = ("matrix_esprit", "hosvd_esprit", "tev", "music")
PINV_RCOND = 1e-12
DEGENERATE_TOL = 1e-8


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DoaEstimate:
    theta: np.ndarray
    phi: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    estimator: str
    eigenvalues: np.ndarray | None = None  # (K, 2): shift eigenvalues per axis
    corrected_theta: np.ndarray | None = None
    corrected_phi: np.ndarray | None = None
    notes: tuple = field(default=(), compare=False)

    @property
    def k(self) -> int:
        return self.theta.size

    @property
    def corrected(self) -> bool:
        return self.corrected_theta is not None

    def best_angles(self):
        """LUT-corrected angles when available, raw angles otherwise."""
        if self.corrected:
            return self.corrected_theta, self.corrected_phi
        return self.theta, self.phi


@dataclass(frozen=True)
class SignalSubspace:
    matrix_basis: np.ndarray  # (M̃N, K), orthonormal columns
    tensor_basis: np.ndarray  # dims (..., K)
    singular_values: np.ndarray
    k: int


def _check_k(snap: SnapshotSet, k: int) -> None:
    rows, q = snap.matrix.shape
    if not 1 <= k <= min(rows, q):
        raise EstimationError(f"k={k} must be between 1 and min(M̃N, Q) = {min(rows, q)}")


def matrix_subspace(snap: SnapshotSet, k: int):
    """Leading k left singular vectors of Ỹ and all singular values."""
    _check_k(snap, k)
    u, s, _ = np.linalg.svd(snap.matrix, full_matrices=False)
    if s[k - 1] <= 1e-13 * s[0]:
        raise EstimationError(f"k={k} exceeds the numerical rank of the snapshots")
    return u[:, :k], s


def signal_subspace(snap: SnapshotSet, k: int) -> SignalSubspace:
    us, s = matrix_subspace(snap, k)
    return SignalSubspace(us, truncated_signal_subspace(snap.tensor, k), s, k)


def tensor_subspace_matrix(snap: SnapshotSet, k: int) -> np.ndarray:
    """Last-mode unfolding (transposed) of the truncated HOSVD subspace."""
    _check_k(snap, k)
    t = truncated_signal_subspace(snap.tensor, k)
    return unfold(t, t.ndim - 1).T


def shift_operator(u: np.ndarray, virtual: VirtualStructure, n_rx: int, axis: int) -> np.ndarray:
    """Ψ = (Ω1 U)† Ω2 U for the given axis (0: μ, 1: ν)."""
    i1, i2 = virtual.full_shift_indices(axis, n_rx)
    return np.linalg.pinv(u[i1], rcond=PINV_RCOND) @ u[i2]


def cosine_from_eigenvalue(lam, spacing: float):
    return -np.angle(lam) / (2 * np.pi * spacing)


def pair_eigensystems(t_theta: np.ndarray, t_phi: np.ndarray, lam_theta=None, lam_phi=None):
    """Greedy pairing on the eigenvector coherence |t_θ,iᴴ t_φ,j|.

    Returns ``(perm, ambiguous)`` where column i of ``t_theta`` pairs with
    column ``perm[i]`` of ``t_phi``. Ties go to the lowest indices.
    ``ambiguous`` flags eigenvalues closer than 1e-8 within either system.
    """
    a = t_theta / np.linalg.norm(t_theta, axis=0, keepdims=True)
    b = t_phi / np.linalg.norm(t_phi, axis=0, keepdims=True)
    coh = np.abs(a.conj().T @ b)
    k = coh.shape[0]
    perm = -np.ones(k, int)
    work = coh.copy()
    for _ in range(k):
        # argmax returns the first (lowest flat index) maximum
        i, j = np.unravel_index(np.argmax(work), work.shape)
        perm[i] = j
        work[i, :] = -1.0
        work[:, j] = -1.0
    ambiguous = False
    for lam in (lam_theta, lam_phi):
        if lam is not None and len(lam) > 1:
            d = np.abs(np.subtract.outer(lam, lam))[np.triu_indices(len(lam), 1)]
            ambiguous |= bool(np.any(d < DEGENERATE_TOL))
    return perm, ambiguous


def _esprit_from_basis(u: np.ndarray, virtual: VirtualStructure, n_rx: int, name: str) -> DoaEstimate:
    psi_mu = shift_operator(u, virtual, n_rx, 0)
    psi_nu = shift_operator(u, virtual, n_rx, 1)
    lam_mu, t_mu = np.linalg.eig(psi_mu)
    lam_nu, t_nu = np.linalg.eig(psi_nu)
    perm, ambiguous = pair_eigensystems(t_mu, t_nu, lam_mu, lam_nu)
    lam_nu = lam_nu[perm]
    return _finish(lam_mu, lam_nu, virtual, name, ("degenerate eigenvalues",) if ambiguous else ())


def _finish(lam_mu, lam_nu, virtual, name, notes=()) -> DoaEstimate:
    mu = cosine_from_eigenvalue(lam_mu, virtual.spacing)
    nu = cosine_from_eigenvalue(lam_nu, virtual.spacing)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        th, ph = cosines_to_angles(mu, nu, virtual.kind)
    notes = tuple(notes) + tuple(str(w.message) for w in caught)
    order = np.lexsort((ph, th))
    return DoaEstimate(np.atleast_1d(th)[order], np.atleast_1d(ph)[order], np.atleast_1d(mu)[order],
                       np.atleast_1d(nu)[order], name, np.c_[lam_mu, lam_nu][order], notes=notes)


def _virtual(snap: SnapshotSet) -> VirtualStructure:
    if snap.virtual is None:
        raise EstimationError("snapshot set carries no virtual structure")
    return snap.virtual


def matrix_esprit(snap: SnapshotSet, k: int) -> DoaEstimate:
    u, _ = matrix_subspace(snap, k)
    return _esprit_from_basis(u, _virtual(snap), snap.n_rx, "matrix_esprit")


def hosvd_esprit(snap: SnapshotSet, k: int) -> DoaEstimate:
    u = tensor_subspace_matrix(snap, k)
    return _esprit_from_basis(u, _virtual(snap), snap.n_rx, "hosvd_esprit")


def _scalar_shift(q: np.ndarray, virtual: VirtualStructure, axis: int) -> complex:
    s1, s2 = virtual.shift_indices(axis)
    a, b = q[s1], q[s2]
    return complex(np.vdot(a, b) / np.vdot(a, a).real)


_MIX_WEIGHTS = np.linspace(0.0, 1.0, 9)[1:-1]
_MIX_PHASES = np.exp(1j * np.pi * np.arange(8) / 8)


def separating_combination(psi_mu: np.ndarray, psi_nu: np.ndarray) -> np.ndarray:
    """(1−w)Ψ_μ + w·e^{jα}Ψ_ν with the largest minimum eigenvalue gap.

    Well-separated eigenvalues make the common eigenvectors, and hence the
    per-target split, better conditioned. The search is over a fixed small
    set of weights and phases.
    """
    k = psi_mu.shape[0]
    if k == 1:
        return psi_mu + psi_nu
    iu = np.triu_indices(k, 1)
    best, best_gap = None, -1.0
    for w in _MIX_WEIGHTS:
        for ph in _MIX_PHASES:
            c = (1 - w) * psi_mu + w * ph * psi_nu
            lam = np.linalg.eigvals(c)
            gap = np.abs(np.subtract.outer(lam, lam))[iu].min()
            if gap > best_gap:
                best, best_gap = c, gap
    return best


def tev(snap: SnapshotSet, k: int) -> DoaEstimate:
    """Per-target rank-one reduction of the tensor subspace.

    The eigenvectors G of a combination of the two shift operators (see
    :func:`separating_combination`) separate the targets: 𝒰^[s] ×_last Gᵀ has one slice per target, each
    close to a rank-one tensor whose transmit factors give the cosines.
    """
    virtual = _virtual(snap)
    _check_k(snap, k)
    t = truncated_signal_subspace(snap.tensor, k)
    u = unfold(t, t.ndim - 1).T
    psi = separating_combination(shift_operator(u, virtual, snap.n_rx, 0),
                                 shift_operator(u, virtual, snap.n_rx, 1))
    _, g = np.linalg.eig(psi)
    n_tx_modes = len(virtual.tensor_dims)
    lam_mu, lam_nu = np.empty(k, complex), np.empty(k, complex)
    for j in range(k):
        slice_j = np.tensordot(t, g[:, j], axes=([t.ndim - 1], [0]))
        factors = []
        for mode in range(n_tx_modes):
            uu, _, _ = np.linalg.svd(unfold(slice_j, mode), full_matrices=False)
            factors.append(uu[:, 0])
        q = factors[0] if n_tx_modes == 1 else np.kron(factors[0], factors[1])
        lam_mu[j] = _scalar_shift(q, virtual, 0)
        lam_nu[j] = _scalar_shift(q, virtual, 1)
    return _finish(lam_mu / np.abs(lam_mu), lam_nu / np.abs(lam_nu), virtual, "tev")


class MusicSearch:
    """Pseudo-spectrum search grid for one transmit model and receive array.

    The steering vectors f(θ, φ) = (Eᴴa) ⊗ b are precomputed on the grid and
    normalized, so each trial costs one (K × M̃N)·(M̃N × G) product.
    """

    def __init__(self, model, rx, theta_bounds, phi_bounds, step: float = 0.1,
                 nms_radius: float = 1.0, refine: bool = True):
        if step <= 0:
            raise ValueError("step must be positive")
        self.model, self.rx = model, rx
        self.theta_axis = np.arange(theta_bounds[0], theta_bounds[1] + step / 2, step)
        self.phi_axis = np.arange(phi_bounds[0], phi_bounds[1] + step / 2, step)
        th, ph = np.meshgrid(self.theta_axis, self.phi_axis, indexing="ij")
        f = steering_matrix_f(model, rx, th.ravel(), ph.ravel())
        self.f = f / np.linalg.norm(f, axis=0, keepdims=True)
        self.step, self.nms_radius, self.refine = step, nms_radius, refine
        self.last_separable = 0

    def _spectrum_at(self, us, theta, phi):
        f = steering_matrix_f(self.model, self.rx, np.atleast_1d(theta), np.atleast_1d(phi))
        f = f / np.linalg.norm(f, axis=0, keepdims=True)
        resid = 1.0 - np.sum(np.abs(us.conj().T @ f) ** 2, axis=0)
        return 1.0 / np.maximum(resid, 1e-300)

    def spectrum(self, us: np.ndarray) -> np.ndarray:
        """1/‖U_nᴴf‖² on the grid, shape (n_theta, n_phi)."""
        resid = 1.0 - np.sum(np.abs(us.conj().T @ self.f) ** 2, axis=0)
        return (1.0 / np.maximum(resid, 1e-300)).reshape(self.theta_axis.size, self.phi_axis.size)

    def peaks(self, spec: np.ndarray, k: int):
        """Up to k grid maxima separated by more than the NMS radius."""
        loc = spec >= maximum_filter(spec, size=3, mode="nearest")
        idx = np.argwhere(loc)
        idx = idx[np.argsort(-spec[loc], kind="stable")]
        chosen = self._suppress(idx, [], k)
        self.last_separable = len(chosen)
        if len(chosen) < k:
            # unresolved: fall back to the strongest remaining grid points
            rest = np.argwhere(~loc)
            rest = rest[np.argsort(-spec[~loc], kind="stable")]
            chosen = self._suppress(rest, chosen, k)
        return chosen

    def _suppress(self, idx, chosen, k):
        chosen = list(chosen)
        for i, j in idx:
            if len(chosen) == k:
                break
            th, ph = self.theta_axis[i], self.phi_axis[j]
            if all(abs(th - t) > self.nms_radius or abs(ph - p) > self.nms_radius for t, p in chosen):
                chosen.append((th, ph))
        return chosen

    def search(self, us: np.ndarray, k: int):
        chosen = self.peaks(self.spectrum(us), k)
        if self.refine:
            out = []
            for th, ph in chosen:
                def neg(x):
                    return -np.log(self._spectrum_at(us, x[0], x[1])[0])
                res = minimize(neg, [th, ph], method="Nelder-Mead",
                               options={"xatol": 1e-6, "fatol": 1e-12,
                                        "initial_simplex": [[th, ph], [th + self.step, ph], [th, ph + self.step]]})
                x = res.x
                # stay within the grid cell neighbourhood of the peak
                if abs(x[0] - th) <= 2 * self.step and abs(x[1] - ph) <= 2 * self.step:
                    out.append((x[0], x[1]))
                else:
                    out.append((th, ph))
            chosen = out
        return chosen


def spectral_music_2d(snap: SnapshotSet, k: int, search: MusicSearch) -> DoaEstimate:
    """MUSIC with steering (Eᴴa) ⊗ b over ``search``'s grid."""
    us, _ = matrix_subspace(snap, k)
    chosen = search.search(us, k)
    notes = ()
    if search.last_separable < k:
        notes = (f"resolution failure: {search.last_separable} separable peaks for k={k}",)
    if len(chosen) < k:
        chosen = chosen + [(np.nan, np.nan)] * (k - len(chosen))
    th = np.array([c[0] for c in chosen])
    ph = np.array([c[1] for c in chosen])
    mu, nu = direction_cosines(th, ph, _virtual(snap).kind)
    order = np.lexsort((ph, th))
    return DoaEstimate(th[order], ph[order], np.asarray(mu)[order], np.asarray(nu)[order],
                       "music", None, notes=notes)


def estimate(snap: SnapshotSet, k: int, estimator: str, music: MusicSearch | None = None) -> DoaEstimate:
    """Dispatch by name (see ``ESTIMATORS``)."""
    if estimator == "matrix_esprit":
        return matrix_esprit(snap, k)
    if estimator == "hosvd_esprit":
        return hosvd_esprit(snap, k)
    if estimator == "tev":
        return tev(snap, k)
    if estimator == "music":
        if music is None:
            raise ValueError("MUSIC needs a MusicSearch grid")
        return spectral_music_2d(snap, k, music)
    raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")


def with_correction(est: DoaEstimate, theta, phi) -> DoaEstimate:
    return replace(est, corrected_theta=np.asarray(theta, float), corrected_phi=np.asarray(phi, float))
