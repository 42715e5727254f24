"""Planar arrays, steering vectors, virtual array structures and sector grids.

Angles are in degrees at every public boundary. Positions are in wavelengths.
A direction (θ, φ) has propagation vector u = [sinθ cosφ, sinθ sinφ] and the
steering entry for an element at p is exp(-j 2π uᵀp).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("ura", "cross_ula", "l_shaped")


def propagation(theta, phi):
    """u(θ, φ) as an array of shape (2, n)."""
    th, ph = np.radians(np.atleast_1d(theta).astype(float)), np.radians(np.atleast_1d(phi).astype(float))
    return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph)])


def propagation_derivatives(theta, phi):
    """(∂u/∂θ, ∂u/∂φ) per radian, each of shape (2, n)."""
    th, ph = np.radians(np.atleast_1d(theta).astype(float)), np.radians(np.atleast_1d(phi).astype(float))
    du_th = np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph)])
    du_ph = np.stack([-np.sin(th) * np.sin(ph), np.sin(th) * np.cos(ph)])
    return du_th, du_ph


@dataclass(frozen=True)
class ArrayGeometry:
    positions: np.ndarray  # (M, 2) in wavelengths

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2:
            raise ValueError(f"positions must have shape (M, 2), got {p.shape}")
        if p.shape[0] < 1:
            raise ValueError("array needs at least one element")
        if not np.all(np.isfinite(p)):
            raise ValueError("positions must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "positions", p)

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    def steering(self, theta, phi) -> np.ndarray:
        """Steering matrix, one column per direction, shape (M, n)."""
        return np.exp(-2j * np.pi * self.positions @ propagation(theta, phi))

    def steering_derivatives(self, theta, phi):
        """Derivatives of :meth:`steering` with respect to θ and φ in radians."""
        a = self.steering(theta, phi)
        du_th, du_ph = propagation_derivatives(theta, phi)
        k = -2j * np.pi
        return k * (self.positions @ du_th) * a, k * (self.positions @ du_ph) * a

    def save(self, path) -> None:
        lines = ["# index x y (wavelengths)"]
        lines += [f"{i} {x:.17g} {y:.17g}" for i, (x, y) in enumerate(self.positions)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "ArrayGeometry":
        rows = [ln.split() for ln in Path(path).read_text().splitlines()
                if ln.strip() and not ln.lstrip().startswith("#")]
        data = np.array([[float(r[1]), float(r[2])] for r in rows])
        return cls(data)


def steering_vector(g: ArrayGeometry, theta: float, phi: float) -> np.ndarray:
    return g.steering(theta, phi)[:, 0]


def irregular_array(seed: int = 0, n_side: int = 8, aperture: float = 4.0,
                    jitter: float = 0.25) -> ArrayGeometry:
    """Square grid of ``n_side``² elements spanning ``aperture`` wavelengths,
    centered at the origin, with i.i.d. U[-jitter, jitter] displacements."""
    rng = np.random.default_rng(seed)
    pitch = aperture / (n_side - 1)
    g = (np.arange(n_side) - (n_side - 1) / 2) * pitch
    x, y = np.meshgrid(g, g, indexing="ij")
    pos = np.c_[x.ravel(), y.ravel()] + rng.uniform(-jitter, jitter, (n_side * n_side, 2))
    return ArrayGeometry(pos)


def receive_subset(tx: ArrayGeometry, n: int = 8, seed: int = 1) -> ArrayGeometry:
    """Pick ``n`` distinct transmit elements at random as the receive array."""
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(tx.size, size=n, replace=False))
    return ArrayGeometry(tx.positions[idx])


def ula_response(n: int, spacing: float, cosine) -> np.ndarray:
    """Uniform linear response, entries exp(-j2π i·spacing·cosine), shape (n, len)."""
    return np.exp(-2j * np.pi * spacing * np.arange(n)[:, None] * np.atleast_1d(cosine)[None, :])


def direction_cosines(theta, phi, kind: str = "ura"):
    """(μ, ν) for the given virtual structure kind."""
    th, ph = np.radians(np.asarray(theta, float)), np.radians(np.asarray(phi, float))
    if kind == "cross_ula":
        return np.sin(th), np.sin(ph)
    if kind in ("ura", "l_shaped"):
        return np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph)
    raise ValueError(f"unknown virtual kind {kind!r}")


def cosines_to_angles(mu, nu, kind: str = "ura"):
    """Inverse of :func:`direction_cosines`, degrees.

    Points off the visible region are clipped with a warning; θ = 0 leaves φ
    undefined and is reported as φ = 0 with a warning.
    """
    mu, nu = np.asarray(mu, float), np.asarray(nu, float)
    if kind == "cross_ula":
        if np.any(np.abs(mu) > 1) or np.any(np.abs(nu) > 1):
            warnings.warn("direction cosine outside [-1, 1]; clipped", RuntimeWarning, stacklevel=2)
        return (np.degrees(np.arcsin(np.clip(mu, -1, 1))),
                np.degrees(np.arcsin(np.clip(nu, -1, 1))))
    if kind not in ("ura", "l_shaped"):
        raise ValueError(f"unknown virtual kind {kind!r}")
    r = np.hypot(mu, nu)
    if np.any(r > 1):
        warnings.warn("cosine pair outside the unit disk; clipped", RuntimeWarning, stacklevel=2)
    if np.any(r == 0):
        warnings.warn("θ = 0: azimuth undefined", RuntimeWarning, stacklevel=2)
    theta = np.degrees(np.arcsin(np.clip(r, 0, 1)))
    phi = np.mod(np.degrees(np.arctan2(nu, mu)), 360.0)
    return theta, phi


def cosine_jacobian(theta, phi, kind: str = "ura"):
    """d(θ, φ)/d(μ, ν) in radians per unit cosine, shape (..., 2, 2)."""
    th, ph = np.radians(np.asarray(theta, float)), np.radians(np.asarray(phi, float))
    if kind == "cross_ula":
        z = np.zeros_like(th)
        j = np.array([[1 / np.cos(th), z], [z, 1 / np.cos(ph)]])
    else:
        j = np.array([[np.cos(ph) / np.cos(th), np.sin(ph) / np.cos(th)],
                      [-np.sin(ph) / np.sin(th), np.cos(ph) / np.sin(th)]])
    return np.moveaxis(j, (0, 1), (-2, -1))


def selection_matrices(m: int):
    """Standard shift selectors (J1, J2) of shape (m-1, m)."""
    if m < 2:
        raise ValueError("shift selectors need at least 2 elements")
    eye = np.eye(m)
    return eye[:-1], eye[1:]


@dataclass(frozen=True)
class VirtualStructure:
    kind: str = "ura"
    m1: int = 4
    m2: int = 4
    spacing: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.m1 < 2 or self.m2 < 2:
            raise ValueError("m1 and m2 must be at least 2")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")

    @property
    def size(self) -> int:
        if self.kind == "l_shaped":
            return self.m1 + self.m2 - 1
        return self.m1 * self.m2

    @property
    def tensor_dims(self) -> tuple:
        """Shape of the virtual transmit modes in the radar tensor."""
        if self.kind == "l_shaped":
            return (self.size,)
        return (self.m1, self.m2)

    def cosines(self, theta, phi):
        return direction_cosines(theta, phi, self.kind)

    def angles(self, mu, nu):
        return cosines_to_angles(mu, nu, self.kind)

    def steering_from_cosines(self, mu, nu) -> np.ndarray:
        c = ula_response(self.m1, self.spacing, mu)
        d = ula_response(self.m2, self.spacing, nu)
        if self.kind == "l_shaped":
            return np.concatenate([c, d[1:]], axis=0)
        return (c[:, None, :] * d[None, :, :]).reshape(self.size, -1)

    def steering(self, theta, phi) -> np.ndarray:
        """Ideal virtual steering matrix, shape (M̃, n)."""
        return self.steering_from_cosines(*self.cosines(theta, phi))

    def steering_derivatives(self, theta, phi):
        """Derivatives of :meth:`steering` with respect to θ and φ in radians."""
        th, ph = np.radians(np.atleast_1d(theta).astype(float)), np.radians(np.atleast_1d(phi).astype(float))
        if self.kind == "cross_ula":
            dmu = (np.cos(th), np.zeros_like(th))
            dnu = (np.zeros_like(th), np.cos(ph))
        else:
            du_th, du_ph = propagation_derivatives(theta, phi)
            dmu = (du_th[0], du_ph[0])
            dnu = (du_th[1], du_ph[1])
        a = self.steering(theta, phi)
        k = -2j * np.pi * self.spacing
        ix, iy = self.axis_indices()
        out = []
        for j in range(2):
            w = k * (ix[:, None] * dmu[j][None, :] + iy[:, None] * dnu[j][None, :])
            out.append(w * a)
        return tuple(out)

    def axis_indices(self):
        """Integer (x, y) index of every virtual element."""
        if self.kind == "l_shaped":
            ix = np.r_[np.arange(self.m1), np.zeros(self.m2 - 1, int)]
            iy = np.r_[np.zeros(self.m1, int), np.arange(1, self.m2)]
            return ix, iy
        ix, iy = np.meshgrid(np.arange(self.m1), np.arange(self.m2), indexing="ij")
        return ix.ravel(), iy.ravel()

    def shift_indices(self, axis: int):
        """Row indices (s1, s2) into the virtual vector such that
        v[s2] = exp(-j2π·spacing·cosine_axis) · v[s1]."""
        if axis not in (0, 1):
            raise ValueError("axis must be 0 (μ) or 1 (ν)")
        ix, iy = self.axis_indices()
        key = np.c_[ix, iy]
        lookup = {tuple(k): i for i, k in enumerate(key)}
        step = (1, 0) if axis == 0 else (0, 1)
        s1, s2 = [], []
        for i, (x, y) in enumerate(key):
            j = lookup.get((x + step[0], y + step[1]))
            if j is not None:
                s1.append(i)
                s2.append(j)
        return np.array(s1), np.array(s2)

    def full_shift_indices(self, axis: int, n_rx: int):
        """Shift indices lifted to the stacked (virtual-tx, rx) vector."""
        s1, s2 = self.shift_indices(axis)
        r = np.arange(n_rx)
        return (s1[:, None] * n_rx + r).ravel(), (s2[:, None] * n_rx + r).ravel()

    def selector_matrices(self, axis: int, n_rx: int = 1):
        """Dense selection matrices (Ω1, Ω2) acting on the stacked vector."""
        i1, i2 = self.full_shift_indices(axis, n_rx)
        eye = np.eye(self.size * n_rx)
        return eye[i1], eye[i2]


def virtual_steering(vs: VirtualStructure, theta: float, phi: float) -> np.ndarray:
    return vs.steering(theta, phi)[:, 0]


@dataclass(frozen=True)
class SectorGrid:
    in_theta: np.ndarray
    in_phi: np.ndarray
    out_theta: np.ndarray
    out_phi: np.ndarray
    theta_bounds: tuple = (30.0, 40.0)
    phi_bounds: tuple = (65.0, 75.0)
    transition: tuple = (20.0, 15.0)
    out_shape: tuple = field(default=None)
    out_mask: np.ndarray = field(default=None, repr=False)
    in_step: float = 1.0
    out_step: float = 2.0

    @property
    def n_in(self) -> int:
        return self.in_theta.size

    @property
    def n_out(self) -> int:
        return self.out_theta.size


def build_sector_grid(theta_bounds=(30.0, 40.0), phi_bounds=(65.0, 75.0),
                      transition=(20.0, 15.0), in_step=1.0, out_step=2.0,
                      min_points: int = 0) -> SectorGrid:
    """In-sector lattice plus the out-of-sector hemisphere lattice minus the
    sector widened by the transition zones. The out-sector lattice is kept as
    a masked (θ, φ) image (``out_shape``, ``out_mask``) for peak searches."""
    t0, t1 = map(float, theta_bounds)
    p0, p1 = map(float, phi_bounds)
    if not (t0 <= t1 and p0 <= p1):
        raise ValueError("sector bounds must be ordered")
    if in_step <= 0 or out_step <= 0:
        raise ValueError("grid steps must be positive")
    nt = int(np.floor((t1 - t0) / in_step + 1e-9)) + 1
    npp = int(np.floor((p1 - p0) / in_step + 1e-9)) + 1
    ti, pi = np.meshgrid(t0 + in_step * np.arange(nt), p0 + in_step * np.arange(npp), indexing="ij")
    if ti.size == 0:
        raise ValueError("empty sector")
    if ti.size < min_points:
        raise ValueError(f"in-sector grid has {ti.size} points, need at least {min_points}")
    to_axis = np.arange(0.0, 90.0 - 1e-9, out_step)
    po_axis = np.arange(0.0, 360.0 - 1e-9, out_step)
    to, po = np.meshgrid(to_axis, po_axis, indexing="ij")
    tw, pw = transition
    excl = (to >= t0 - tw) & (to <= t1 + tw)
    dphi = np.mod(po - p0 + pw, 360.0)
    excl &= dphi <= (p1 - p0) + 2 * pw
    keep = ~excl
    return SectorGrid(ti.ravel(), pi.ravel(), to[keep], po[keep],
                      (t0, t1), (p0, p1), tuple(transition), to.shape, keep,
                      float(in_step), float(out_step))
