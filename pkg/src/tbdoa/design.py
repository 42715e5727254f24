"""Transmit interpolation matrix design.

Three designs of the M×M̃ matrix E mapping the actual transmit array onto a
virtual structure:

* ``design_ls``: closed-form least squares over the in-sector grid.
* ``design_minimax_error``: minimize the worst in-sector interpolation error
  subject to a sidelobe bound γ at every out-of-sector direction.
* ``design_minimax_sidelobe``: minimize the worst out-of-sector level subject
  to an interpolation error tolerance Δ at every in-sector direction.

Per-direction norms are l1 or l∞ over the M̃ virtual outputs. The complex
modulus is either handled exactly (second-order cones) or by an inscribed
F-gon (pure LP); both go through the block-structured interior-point
solver in :mod:`tbdoa.conic`. The out-of-sector side is
generated lazily: each round adds the local maxima of the current pattern
that violate (or nearly reach) the bound.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import maximum_filter

from .conic import RADIUS_AUX, RADIUS_CONST, RADIUS_T, BlockSocp
from .geometry import ArrayGeometry, SectorGrid, VirtualStructure

log = logging.getLogger(__name__)

NORMS = ("l1", "linf")
METHODS = ("ls", "minimax_error", "minimax_sidelobe")
MODULI = ("soc", "poly")
SOLVER_TOL = 1e-6


class DesignError(RuntimeError):
    pass


class DesignInfeasible(DesignError):
    def __init__(self, msg, direction=None):
        super().__init__(msg)
        self.direction = direction


@dataclass(frozen=True)
class InterpolationDesign:
    e_matrix: np.ndarray
    tx: ArrayGeometry
    virtual: VirtualStructure
    grid: SectorGrid | None = None
    method: str = "ls"
    norms: tuple = ("linf", "l1")  # (objective, constraint)
    bound: float = float("nan")  # γ or Δ
    achieved_objective: float = float("nan")
    modulus: str = "soc"
    facets: int = 8
    info: dict = field(default_factory=dict, compare=False)

    def mapped_steering(self, theta, phi) -> np.ndarray:
        """Eᴴa(θ, φ), shape (M̃, n)."""
        return self.e_matrix.conj().T @ self.tx.steering(theta, phi)

    def mapped_steering_derivatives(self, theta, phi):
        da_th, da_ph = self.tx.steering_derivatives(theta, phi)
        eh = self.e_matrix.conj().T
        return eh @ da_th, eh @ da_ph

    def error(self, theta, phi) -> np.ndarray:
        """ΔA = Eᴴa − ã per direction, shape (M̃, n)."""
        return self.mapped_steering(theta, phi) - self.virtual.steering(theta, phi)


def _pnorm(z: np.ndarray, p: str) -> np.ndarray:
    """Column-wise l1 / l∞ norm of complex moduli."""
    a = np.abs(z)
    return a.sum(0) if p == "l1" else a.max(0)


# --------------------------------------------------------------------- LS

def design_ls(tx: ArrayGeometry, virtual: VirtualStructure, grid: SectorGrid,
              rcond: float = 1e-10) -> InterpolationDesign:
    """E = (AAᴴ)⁻¹AÃᴴ over the in-sector grid.

    Raises ``DesignError`` when A(Θ,Φ) is not numerically full row rank
    (smallest/largest singular value below ``rcond``).
    """
    a = tx.steering(grid.in_theta, grid.in_phi)
    at = virtual.steering(grid.in_theta, grid.in_phi)
    m, g = a.shape
    if g < m:
        raise DesignError(f"in-sector grid has {g} points but the array has {m} elements; "
                          "least squares needs at least as many points as elements")
    s = np.linalg.svd(a, compute_uv=False)
    rank = int(np.sum(s > rcond * s[0]))
    if rank < m:
        raise DesignError(f"A(Θ,Φ) is rank deficient: numerical rank {rank} < {m} "
                          f"(σ_min/σ_max = {s[-1] / s[0]:.2e})")
    e = np.linalg.solve(a @ a.conj().T, a @ at.conj().T)
    resid = np.linalg.norm(e.conj().T @ a - at)
    return InterpolationDesign(e, tx, virtual, grid, "ls", ("l2", "l2"), float("nan"),
                               float(resid), info={"rank": rank})


# ----------------------------------------------------------- conic builder

class _Problem:
    """Design problem with one variable block per virtual output.

    Block m holds ``[Re e_m, Im e_m]`` where e_m is column m of E, plus the
    auxiliaries of the l1 norms touching that column.
    """

    def __init__(self, m, mt, modulus, facets):
        self.m, self.mt = m, mt
        self.modulus, self.facets = modulus, facets
        self.socp = BlockSocp(mt, 2 * m)

    def _modulus(self, a, mts, target, rkind, radius):
        """|e_mᴴa_i − target_i| ≤ radius_i for rows i (a is (n, M))."""
        ar, ai = a.real, a.imag
        c_re = np.concatenate([ar, ai], axis=1)
        c_im = np.concatenate([ai, -ar], axis=1)
        if self.modulus == "soc":
            self.socp.add_modulus(mts, c_re, c_im, target, rkind, radius)
            return
        f = self.facets
        ang = 2 * np.pi * np.arange(f) / f
        cf, sf = np.cos(ang), np.sin(ang)
        n = len(mts)
        # Re(w e^{-jα}) ≤ cos(π/F)·r for every facet angle α
        coef = cf[None, :, None] * c_re[:, None, :] + sf[None, :, None] * c_im[:, None, :]
        h = cf[None, :] * target.real[:, None] + sf[None, :] * target.imag[:, None]
        shrink = np.cos(np.pi / f)
        radius = np.broadcast_to(np.asarray(radius, float), (n,))
        if rkind == RADIUS_CONST:
            h = h + shrink * radius[:, None]
            rcoef, ridx = np.zeros((n, f)), np.zeros(n, int)
        else:
            rcoef, ridx = np.full((n, f), -shrink), radius.astype(int)
        rep = lambda v: np.repeat(np.asarray(v), f, axis=0)
        self.socp.add_linear(rep(mts), coef.reshape(n * f, -1), rcoef.reshape(-1, 1),
                             rep(np.broadcast_to(rkind, (n,))), rep(ridx), h.reshape(-1, 1))

    def _radius(self, bound, n):
        if bound == "t":
            return RADIUS_T, np.zeros(n)
        return RADIUS_CONST, np.full(n, float(bound))

    def norm_block(self, a, target, norm, bound):
        """‖Eᴴa_g − target_g‖_norm ≤ bound for every column g of ``a``.

        ``bound`` is "t" (the epigraph variable) or a float constant.
        ``a`` is (M, n); ``target`` is (M̃, n) or None.
        """
        n, mt = a.shape[1], self.mt
        g = np.repeat(np.arange(n), mt)
        mm = np.tile(np.arange(mt), n)
        tg = np.zeros(n * mt, complex) if target is None else target.T.ravel()
        if norm == "linf":
            self._modulus(a.T[g], mm, tg, *self._radius(bound, n * mt))
            return
        s = self.socp.add_aux(mm)
        self._modulus(a.T[g], mm, tg, RADIUS_AUX, s)
        rows = s.reshape(n, mt)
        if bound == "t":
            self.socp.add_coupling(rows, 1.0, 0.0)
        else:
            self.socp.add_coupling(rows, 0.0, float(bound))

    def pair_block(self, a_cols, mts, bound):
        """|e_mᴴa_h| ≤ bound for individual (direction, virtual output) pairs."""
        n = len(mts)
        self._modulus(a_cols.T, np.asarray(mts), np.zeros(n, complex), *self._radius(bound, n))

    def solve(self, settings=None):
        x, t, status, _ = self.socp.solve(**(settings or {}))
        m, mt = self.m, self.mt
        blocks = x[:2 * m * mt].reshape(mt, 2 * m)
        e = (blocks[:, :m] + 1j * blocks[:, m:]).T
        return e, t, status


def _local_peaks(values: np.ndarray, grid: SectorGrid, thresh: float) -> np.ndarray:
    """Indices of out-sector points that are 3×3 local maxima above ``thresh``."""
    if grid.out_mask is None:
        idx = np.nonzero(values > thresh)[0]
        return idx[np.argsort(-values[idx])][:200]
    img = np.full(grid.out_shape, -np.inf)
    img[grid.out_mask] = values
    mx = maximum_filter(img, size=3, mode=("nearest", "wrap"))
    lut = -np.ones(grid.out_shape, int)
    lut[grid.out_mask] = np.arange(values.size)
    return lut[(img >= mx) & (img > thresh) & grid.out_mask]


def _solve_lazy(tx, virtual, grid, method, norms, bound, modulus, facets,
                max_rounds, rtol, init_stride, lookahead, solver_settings):
    """Constraint generation over the out-of-sector grid.

    Returns ``(E, t, history, seconds, pattern)`` where ``pattern`` holds the
    out-of-sector moduli |Eᴴa| of the final iterate, shape (M̃, H).
    """
    a_in = tx.steering(grid.in_theta, grid.in_phi)
    at_in = virtual.steering(grid.in_theta, grid.in_phi)
    a_out = tx.steering(grid.out_theta, grid.out_phi)
    m, mt = tx.size, virtual.size
    obj_norm, con_norm = norms
    out_norm = obj_norm if method == "minimax_sidelobe" else con_norm
    per_pair = out_norm == "linf"
    hcount = a_out.shape[1]

    # keys are (h, m) pairs for an l∞ out-of-sector norm, directions h for l1
    active = set()
    for h in np.arange(0, hcount, max(1, init_stride)):
        active.update([(int(h), k) for k in range(mt)] if per_pair else [int(h)])

    t0 = time.perf_counter()
    history = []
    for rnd in range(1, max_rounds + 1):
        prob = _Problem(m, mt, modulus, facets)
        if method == "minimax_sidelobe":
            prob.norm_block(a_in, at_in, con_norm, float(bound))
            out_bound = "t"
        else:
            prob.norm_block(a_in, at_in, obj_norm, "t")
            out_bound = float(bound)
        keys = sorted(active)
        if per_pair:
            arr = np.array(keys)
            prob.pair_block(a_out[:, arr[:, 0]], arr[:, 1], out_bound)
        else:
            prob.norm_block(a_out[:, keys], None, out_norm, out_bound)
        e, t, status = prob.solve(solver_settings)
        if status == "infeasible":
            raise DesignInfeasible("design problem is infeasible",
                                   direction=_worst_in_sector(tx, virtual, grid, con_norm))
        if status not in ("optimal", "inaccurate") or not np.isfinite(t):
            raise DesignError(f"conic solver returned {status}")
        z = np.abs(e.conj().T @ a_out)  # (M̃, H)
        level = t if method == "minimax_sidelobe" else float(bound)
        thresh = level * (1 + rtol) if method == "minimax_sidelobe" else level + SOLVER_TOL / 10
        pn = z if per_pair else z.sum(0)[None, :]
        worst = float(pn.max())
        history.append((rnd, t, worst, len(active)))
        if worst <= thresh:
            log.info("round %d: t=%.6g worst=%.6g active=%d converged (%.1fs)",
                     rnd, t, worst, len(active), time.perf_counter() - t0)
            break
        # also take peaks somewhat below the level so lobes about to pop up
        # are constrained in the same round
        near = min(thresh, level * (1 - lookahead))
        new = {(int(h), k) if per_pair else int(h)
               for k in range(pn.shape[0]) for h in _local_peaks(pn[k], grid, near)}
        new -= active
        log.info("round %d: t=%.6g worst=%.6g active=%d new=%d (%.1fs)",
                 rnd, t, worst, len(active), len(new), time.perf_counter() - t0)
        active |= new
    else:
        log.warning("constraint generation stopped after %d rounds", max_rounds)
    return e, t, history, time.perf_counter() - t0, z


def _worst_in_sector(tx, virtual, grid, norm):
    a = tx.steering(grid.in_theta, grid.in_phi)
    at = virtual.steering(grid.in_theta, grid.in_phi)
    e, *_ = np.linalg.lstsq(a.conj().T, at.conj().T, rcond=None)
    err = _pnorm(e.conj().T @ a - at, norm)
    i = int(np.argmax(err))
    return float(grid.in_theta[i]), float(grid.in_phi[i])


def _check_norms(norms):
    if len(norms) != 2 or any(p not in NORMS for p in norms):
        raise ValueError(f"norms must be a pair from {NORMS}, got {norms}")


def _check_modulus(modulus, facets):
    if modulus not in MODULI:
        raise ValueError(f"modulus must be one of {MODULI}, got {modulus!r}")
    if modulus == "poly" and facets < 3:
        raise ValueError("a polygonal modulus needs at least 3 facets")


def design_minimax_sidelobe(tx: ArrayGeometry, virtual: VirtualStructure, grid: SectorGrid,
                            delta: float, norms=("linf", "l1"), modulus: str = "soc",
                            facets: int = 8, max_rounds: int = 60, rtol: float = 5e-3,
                            init_stride: int = 37, lookahead: float = 0.3,
                            solver_settings: dict | None = None) -> InterpolationDesign:
    """Minimize the worst out-of-sector level subject to in-sector error ≤ Δ.

    Parameters
    ----------
    delta : float
        In-sector error bound, measured with ``norms[1]`` over the M̃ outputs.
    norms : (str, str)
        (objective norm, constraint norm), each "l1" or "linf".
    modulus : {"soc", "poly"}
        Exact complex modulus or an inscribed ``facets``-gon.
    rtol : float
        Constraint generation stops when no out-of-sector level exceeds the
        epigraph value by more than this relative amount.
    init_stride, lookahead : int, float
        Initial out-of-sector subsample stride, and the fraction below the
        current level at which new peaks are already added.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    _check_norms(norms)
    _check_modulus(modulus, facets)
    e, t, hist, secs, _ = _solve_lazy(tx, virtual, grid, "minimax_sidelobe", tuple(norms), delta,
                                      modulus, facets, max_rounds, rtol, init_stride, lookahead,
                                      solver_settings)
    z = e.conj().T @ tx.steering(grid.out_theta, grid.out_phi)
    achieved = float(_pnorm(z, norms[0]).max())
    return InterpolationDesign(e, tx, virtual, grid, "minimax_sidelobe", tuple(norms), float(delta),
                               achieved, modulus, facets,
                               info={"rounds": len(hist), "seconds": secs, "epigraph": t,
                                     "history": hist})


def design_minimax_error(tx: ArrayGeometry, virtual: VirtualStructure, grid: SectorGrid,
                         gamma: float, norms=("linf", "l1"), modulus: str = "soc",
                         facets: int = 8, max_rounds: int = 60, init_stride: int = 37,
                         lookahead: float = 0.3, solver_settings: dict | None = None) -> InterpolationDesign:
    """Minimize the worst in-sector error subject to out-of-sector level ≤ γ.

    Arguments mirror :func:`design_minimax_sidelobe` with ``gamma`` bounding
    the out-of-sector level (measured with ``norms[1]``).
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    _check_norms(norms)
    _check_modulus(modulus, facets)
    e, t, hist, secs, _ = _solve_lazy(tx, virtual, grid, "minimax_error", tuple(norms), gamma,
                                      modulus, facets, max_rounds, 0.0, init_stride, lookahead,
                                      solver_settings)
    achieved = float(_pnorm(e.conj().T @ tx.steering(grid.in_theta, grid.in_phi)
                            - virtual.steering(grid.in_theta, grid.in_phi), norms[0]).max())
    return InterpolationDesign(e, tx, virtual, grid, "minimax_error", tuple(norms), float(gamma),
                               achieved, modulus, facets,
                               info={"rounds": len(hist), "seconds": secs, "epigraph": t,
                                     "history": hist})


# ----------------------------------------------------------------- audits

def audit(design: InterpolationDesign, tol: float = SOLVER_TOL) -> dict:
    """Check the design's constraint with the true complex modulus."""
    g = design.grid
    out = {"method": design.method, "achieved_objective": design.achieved_objective}
    if design.method == "minimax_sidelobe":
        v = _pnorm(design.error(g.in_theta, g.in_phi), design.norms[1])
        out.update(worst_constraint=float(v.max()), feasible=bool(v.max() <= design.bound + tol))
    elif design.method == "minimax_error":
        v = _pnorm(design.mapped_steering(g.out_theta, g.out_phi), design.norms[1])
        out.update(worst_constraint=float(v.max()), feasible=bool(v.max() <= design.bound + tol))
    else:
        out.update(worst_constraint=float("nan"), feasible=True)
    eps = interpolation_error_map(design, g.in_theta, g.in_phi)
    out["max_in_sector_eps"] = float(eps.max())
    p_in = np.mean(transmit_power(design, g.in_theta, g.in_phi))
    p_out = np.mean(transmit_power(design, g.out_theta, g.out_phi))
    out["in_out_power_db"] = float(10 * np.log10(p_in / p_out))
    out["worst_sidelobe"] = float(np.abs(design.mapped_steering(g.out_theta, g.out_phi)).max())
    return out


def transmit_power(design: InterpolationDesign, theta, phi) -> np.ndarray:
    return np.sum(np.abs(design.mapped_steering(theta, phi)) ** 2, axis=0)


def beampattern(design: InterpolationDesign, theta, phi) -> np.ndarray:
    """Transmit power ‖Eᴴa‖² in dB, normalized to a 0 dB peak."""
    p = transmit_power(design, theta, phi)
    return 10 * np.log10(np.maximum(p, np.finfo(float).tiny) / p.max())


def interpolation_error_map(design: InterpolationDesign, theta, phi) -> np.ndarray:
    """ε = ‖Eᴴa − ã‖₂ / ‖ã‖₂ per direction."""
    at = design.virtual.steering(theta, phi)
    return np.linalg.norm(design.error(theta, phi), axis=0) / np.linalg.norm(at, axis=0)


def sigma_app(design: InterpolationDesign, theta, phi) -> np.ndarray:
    """σ²_app = ‖Eᴴa − ã‖₂² / M̃."""
    return np.sum(np.abs(design.error(theta, phi)) ** 2, axis=0) / design.virtual.size


@dataclass(frozen=True)
class ScaledErrorModel:
    """Transmit model with mapped steering ã + s·(Eᴴa − ã).

    Behaves like :class:`InterpolationDesign` for simulation and estimation;
    used to sweep the interpolation error magnitude continuously.
    """
    base: InterpolationDesign
    scale: float

    @property
    def virtual(self):
        return self.base.virtual

    @property
    def tx(self):
        return self.base.tx

    def mapped_steering(self, theta, phi):
        at = self.base.virtual.steering(theta, phi)
        return at + self.scale * (self.base.mapped_steering(theta, phi) - at)

    def mapped_steering_derivatives(self, theta, phi):
        bt, bp = self.base.mapped_steering_derivatives(theta, phi)
        vt, vp = self.base.virtual.steering_derivatives(theta, phi)
        return vt + self.scale * (bt - vt), vp + self.scale * (bp - vp)

    def error(self, theta, phi):
        return self.scale * self.base.error(theta, phi)


def exact_design(virtual: VirtualStructure) -> InterpolationDesign:
    """Identity design on an actual array equal to the virtual structure."""
    if virtual.kind == "cross_ula":
        raise ValueError("cross-ULA cosines (sinθ, sinφ) have no planar array realization")
    ix, iy = virtual.axis_indices()
    tx = ArrayGeometry(np.c_[ix, iy] * virtual.spacing)
    return InterpolationDesign(np.eye(virtual.size, dtype=complex), tx, virtual, None, "exact",
                               ("l2", "l2"), 0.0, 0.0)


def with_grid(design: InterpolationDesign, grid: SectorGrid) -> InterpolationDesign:
    return replace(design, grid=grid)
