"""Turn a :class:`~tbdoa.config.Config` into arrays, grids, designs and scenes."""
from __future__ import annotations

import logging

from .config import Config
from .design import (InterpolationDesign, design_ls, design_minimax_error,
                     design_minimax_sidelobe)
from .formats import read_design
from .geometry import ArrayGeometry, VirtualStructure, build_sector_grid, irregular_array, receive_subset
from .sim import RadarScene

log = logging.getLogger(__name__)


def arrays(cfg: Config):
    """(transmit, receive) geometries."""
    a = cfg.array
    if a.positions_file:
        tx = ArrayGeometry.load(a.positions_file)
    else:
        tx = irregular_array(seed=a.seed, n_side=a.n_side, aperture=a.aperture, jitter=a.jitter)
    rx = ArrayGeometry.load(a.rx_file) if a.rx_file else receive_subset(tx, n=a.rx_count, seed=a.rx_seed)
    return tx, rx


def virtual(cfg: Config) -> VirtualStructure:
    v = cfg.virtual
    return VirtualStructure(v.kind, v.m1, v.m2, v.spacing)


def grid(cfg: Config):
    s = cfg.sector
    return build_sector_grid((s.theta_min, s.theta_max), (s.phi_min, s.phi_max),
                             (s.transition_theta, s.transition_phi), s.in_step, s.out_step)


def solve_design(cfg: Config, tx: ArrayGeometry | None = None) -> InterpolationDesign:
    d = cfg.design
    if tx is None:
        tx, _ = arrays(cfg)
    v, g = virtual(cfg), grid(cfg)
    norms = (d.objective_norm, d.constraint_norm)
    log.info("solving %s design (%s/%s, %s modulus)", d.method, *norms, d.modulus)
    if d.method == "minimax_sidelobe":
        return design_minimax_sidelobe(tx, v, g, d.delta, norms, d.modulus, d.facets, d.max_rounds)
    if d.method == "minimax_error":
        return design_minimax_error(tx, v, g, d.gamma, norms, d.modulus, d.facets, d.max_rounds)
    if d.method == "ls":
        return design_ls(tx, v, g)
    raise ValueError(f"unknown design method {d.method!r}")


def load_or_solve_design(cfg: Config, path: str | None = None) -> InterpolationDesign:
    """Read ``path`` (or ``design.file``) when given, otherwise solve."""
    path = path or cfg.design.file
    if path:
        return read_design(path)
    return solve_design(cfg)


def scene(cfg: Config, seed: int | None = None) -> RadarScene:
    s = cfg.scene
    return RadarScene(tuple(zip(s.thetas, s.phis)), s.pulses, s.rcs_variance, 0.0,
                      cfg.experiment.seed if seed is None else seed)
