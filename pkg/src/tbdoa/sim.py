"""Post-matched-filter snapshots of a transmit-beamspace MIMO radar.

The stacked snapshot for pulse q is ỹ(q) = Σ_k β_k(q) f_k + z(q) with
f_k = (Eᴴa_k) ⊗ b_k: virtual transmit index outer, receive index inner.
Reshaping the M̃N × Q matrix in C order gives the radar tensor of dims
(m1, m2, N, Q) for the URA / cross layouts or (M̃, N, Q) for the L shape.

A "transmit model" is anything exposing ``virtual``, ``mapped_steering``
and ``mapped_steering_derivatives`` (an interpolation design, an exact
design, or a scaled error model).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import ArrayGeometry


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator (Philox) for a seed or SeedSequence."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(ss))


def trial_seeds(seed: int, n: int, *key) -> list:
    """``n`` independent child seeds of ``seed``; ``key`` selects a sub-stream."""
    return np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)).spawn(n)


def complex_gaussian(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    """Circular complex Gaussian samples with E|x|² = variance."""
    s = np.sqrt(variance / 2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass(frozen=True)
class RadarScene:
    """K point targets observed over Q pulses (Swerling II reflectivities)."""
    targets: tuple
    pulses: int = 8
    rcs_variance: float = 1.0
    noise_variance: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        t = np.asarray(self.targets, float).reshape(-1, 2)
        if t.shape[0] < 1:
            raise ValueError("a scene needs at least one target")
        if not np.all(np.isfinite(t)):
            raise ValueError("target directions must be finite")
        object.__setattr__(self, "targets", tuple(map(tuple, t)))
        if int(self.pulses) < 1:
            raise ValueError("pulses must be >= 1")
        if self.rcs_variance < 0 or self.noise_variance < 0:
            raise ValueError("variances must be nonnegative")

    @property
    def k(self) -> int:
        return len(self.targets)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([t[0] for t in self.targets])

    @property
    def phis(self) -> np.ndarray:
        return np.array([t[1] for t in self.targets])

    def with_snr(self, snr_db: float, f: np.ndarray) -> "RadarScene":
        return replace(self, noise_variance=noise_variance_for_snr(f, snr_db, self.rcs_variance))


@dataclass(frozen=True)
class SnapshotSet:
    """Snapshots in matrix form plus what is needed to read them as a tensor."""
    matrix: np.ndarray  # (M̃N, Q)
    tx_dims: tuple
    n_rx: int
    rcs: np.ndarray | None = None  # P, (K, Q)
    noise: np.ndarray | None = field(default=None, repr=False)
    virtual: object = None

    @property
    def dims(self) -> tuple:
        return tuple(self.tx_dims) + (self.n_rx, self.matrix.shape[1])

    @property
    def tensor(self) -> np.ndarray:
        """Radar tensor; its last-mode unfolding transposed is ``matrix``."""
        return self.matrix.reshape(self.dims)

    @property
    def signal(self) -> np.ndarray:
        return self.matrix if self.noise is None else self.matrix - self.noise

    def snr_db(self) -> float:
        if self.noise is None:
            return float("inf")
        return snr_db(self.signal, self.noise)


def steering_matrix_f(model, rx: ArrayGeometry, theta, phi) -> np.ndarray:
    """F with columns (Eᴴa_k) ⊗ b_k, shape (M̃N, K)."""
    at = model.mapped_steering(theta, phi)  # (M̃, K)
    b = rx.steering(theta, phi)  # (N, K)
    return (at[:, None, :] * b[None, :, :]).reshape(-1, at.shape[1])


def steering_matrix_f_derivatives(model, rx: ArrayGeometry, theta, phi):
    """∂F/∂θ and ∂F/∂φ (per radian), columnwise."""
    at = model.mapped_steering(theta, phi)
    dat = model.mapped_steering_derivatives(theta, phi)
    b = rx.steering(theta, phi)
    db = rx.steering_derivatives(theta, phi)
    out = []
    for j in range(2):
        d = dat[j][:, None, :] * b[None] + at[:, None, :] * db[j][None]
        out.append(d.reshape(-1, at.shape[1]))
    return tuple(out)


def noise_variance_for_snr(f: np.ndarray, snr_db: float, rcs_variance: float = 1.0) -> float:
    """σ²_n giving E‖FP‖²_F / E‖Z‖²_F = 10^(snr/10)."""
    return float(rcs_variance * np.sum(np.abs(f) ** 2) / (f.shape[0] * 10 ** (snr_db / 10)))


def snr_db(signal: np.ndarray, noise: np.ndarray) -> float:
    """Realized SNR 10 log10(‖signal‖²/‖noise‖²); +inf for zero noise."""
    pn = float(np.sum(np.abs(noise) ** 2))
    if pn == 0:
        return float("inf")
    return float(10 * np.log10(np.sum(np.abs(signal) ** 2) / pn))


def _check_sector(scene: RadarScene, model) -> None:
    grid = getattr(model, "grid", None) or getattr(getattr(model, "base", None), "grid", None)
    if grid is None:
        return
    (t0, t1), (p0, p1) = grid.theta_bounds, grid.phi_bounds
    th, ph = scene.thetas, scene.phis
    if np.any((th < t0) | (th > t1) | (ph < p0) | (ph > p1)):
        warnings.warn("some targets lie outside the design sector", stacklevel=3)


def simulate(scene: RadarScene, model, rx: ArrayGeometry, rng=None) -> SnapshotSet:
    """Draw Ỹ = F·P + Z for the scene.

    ``rng`` defaults to a generator seeded by ``scene.rng_seed``; the RCS
    matrix is drawn before the noise so noiseless and noisy runs with the
    same seed share P.
    """
    _check_sector(scene, model)
    rng = make_rng(scene.rng_seed) if rng is None else rng
    f = steering_matrix_f(model, rx, scene.thetas, scene.phis)
    q = int(scene.pulses)
    p = complex_gaussian(rng, (scene.k, q), scene.rcs_variance)
    z = complex_gaussian(rng, (f.shape[0], q), scene.noise_variance)
    if scene.noise_variance == 0:
        z = np.zeros_like(z)
    return SnapshotSet(f @ p + z, model.virtual.tensor_dims, rx.size, p, z, model.virtual)


def noiseless_snapshots(model, rx: ArrayGeometry, theta, phi, rcs: np.ndarray) -> SnapshotSet:
    """Snapshots F·P for a given RCS matrix P (K×Q)."""
    f = steering_matrix_f(model, rx, np.atleast_1d(theta), np.atleast_1d(phi))
    rcs = np.asarray(rcs, complex).reshape(f.shape[1], -1)
    return SnapshotSet(f @ rcs, model.virtual.tensor_dims, rx.size, rcs, None, model.virtual)
