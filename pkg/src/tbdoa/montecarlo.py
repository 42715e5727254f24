"""Monte Carlo RMSE / resolution / CRB sweeps over SNR.

All estimators see the same snapshots in a given trial (common random
numbers), and trial t at SNR index i always uses the child seed
``SeedSequence(seed, spawn_key=(i,)).spawn(trials)[t]``, so results do not
depend on the number of worker processes.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import apply_lut, crb, match_to_truth, resolution_probability, rmse, variance_floor
from .estimators import EstimationError, MusicSearch, estimate
from .sim import RadarScene, make_rng, noise_variance_for_snr, simulate, steering_matrix_f, trial_seeds

log = logging.getLogger(__name__)

ROW_FIELDS = ("estimator", "snr_db", "trials", "failures", "rmse_theta", "rmse_phi",
              "bias_theta", "bias_phi", "var_theta", "var_phi", "crb_theta", "crb_phi",
              "var_floor_theta", "var_floor_phi", "p_res_theta", "p_res_phi", "flagged")


@dataclass
class MonteCarloSetup:
    model: object
    rx: object
    scene: RadarScene
    snr_db: tuple = (0, 5, 10, 15, 20, 25, 30)
    trials: int = 100
    estimators: tuple = ("matrix_esprit", "hosvd_esprit", "tev", "music")
    seed: int = 0
    luts: dict = field(default_factory=dict)  # estimator -> LookUpTable
    music_step: float = 0.1
    music_bounds: tuple | None = None  # ((θ0, θ1), (φ0, φ1)); sector by default
    with_crb: bool = True

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        unknown = set(self.estimators) - {"matrix_esprit", "hosvd_esprit", "tev", "music"}
        if unknown:
            raise ValueError(f"unknown estimators: {sorted(unknown)}")

    def search_bounds(self):
        if self.music_bounds is not None:
            return self.music_bounds
        grid = getattr(self.model, "grid", None) or getattr(getattr(self.model, "base", None), "grid", None)
        if grid is not None:
            return grid.theta_bounds, grid.phi_bounds
        th, ph = self.scene.thetas, self.scene.phis
        return (th.min() - 5, th.max() + 5), (ph.min() - 5, ph.max() + 5)

    def labels(self) -> list:
        out = []
        for e in self.estimators:
            out.append(e)
            if e in self.luts:
                out.append(e + "+lut")
        return out


_CTX: dict = {}


def _init_worker(setup: MonteCarloSetup):
    _CTX.clear()
    _CTX["setup"] = setup
    if "music" in setup.estimators:
        tb, pb = setup.search_bounds()
        _CTX["music"] = MusicSearch(setup.model, setup.rx, tb, pb, step=setup.music_step)
    else:
        _CTX["music"] = None


def _one_trial(args):
    """Estimates (matched to truth) for every estimator, plus the trial CRB."""
    seed_seq, noise_var = args
    setup: MonteCarloSetup = _CTX["setup"]
    scene = setup.scene
    snap = simulate(replace(scene, noise_variance=noise_var), setup.model, setup.rx, make_rng(seed_seq))
    th_true, ph_true = scene.thetas, scene.phis
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name in setup.estimators:
            try:
                est = estimate(snap, scene.k, name, _CTX["music"])
            except (EstimationError, np.linalg.LinAlgError):
                out[name] = None
                if name in setup.luts:
                    out[name + "+lut"] = None
                continue
            perm = match_to_truth(est.theta, est.phi, th_true, ph_true)
            out[name] = (est.theta[perm], est.phi[perm])
            if name in setup.luts:
                c = apply_lut(setup.luts[name], est)
                out[name + "+lut"] = (c.corrected_theta[perm], c.corrected_phi[perm])
    bound = None
    if setup.with_crb and noise_var > 0:
        r = crb(setup.model, setup.rx, th_true, ph_true, snap.rcs, noise_var)
        bound = (r.theta_var, r.phi_var)
    return out, bound


def _summarize(label, snr, results, truth_th, truth_ph, crb_mean):
    ests = [r[0][label] for r in results]
    ok = [e for e in ests if e is not None and np.all(np.isfinite(e[0])) and np.all(np.isfinite(e[1]))]
    n, fails = len(ests), len(ests) - len(ok)
    row = dict.fromkeys(ROW_FIELDS, float("nan"))
    row.update(estimator=label, snr_db=float(snr), trials=n, failures=fails, flagged=int(fails > n / 2))
    if crb_mean is not None:
        row.update(crb_theta=float(np.mean(crb_mean[0])), crb_phi=float(np.mean(crb_mean[1])))
    if not ok:
        return row
    th = np.array([e[0] for e in ok])
    ph = np.array([e[1] for e in ok])
    row.update(rmse_theta=rmse(th, truth_th), rmse_phi=rmse(ph, truth_ph),
               bias_theta=float(np.mean(np.abs(th.mean(0) - truth_th))),
               bias_phi=float(np.mean(np.abs(ph.mean(0) - truth_ph))))
    if len(ok) > 1:
        row.update(var_theta=float(np.mean(th.var(0, ddof=1))), var_phi=float(np.mean(ph.var(0, ddof=1))))
    if crb_mean is not None:
        row.update(var_floor_theta=variance_floor(row["crb_theta"], len(ok)),
                   var_floor_phi=variance_floor(row["crb_phi"], len(ok)))
    if truth_th.size == 2:
        # failed trials count as unresolved
        pt, pp = resolution_probability(th, ph, truth_th, truth_ph)
        row.update(p_res_theta=pt * len(ok) / n, p_res_phi=pp * len(ok) / n)
    return row


def run_montecarlo(setup: MonteCarloSetup, jobs: int = 1, progress=None) -> list:
    """One summary row (dict with ``ROW_FIELDS``) per (estimator, SNR).

    Rows are ordered by estimator label, then SNR.
    """
    f = steering_matrix_f(setup.model, setup.rx, setup.scene.thetas, setup.scene.phis)
    truth_th, truth_ph = setup.scene.thetas, setup.scene.phis
    per_snr = []
    pool = None
    if jobs > 1:
        pool = ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(setup,))
    else:
        _init_worker(setup)
    try:
        for i, snr in enumerate(setup.snr_db):
            nv = noise_variance_for_snr(f, snr, setup.scene.rcs_variance)
            tasks = [(s, nv) for s in trial_seeds(setup.seed, setup.trials, i)]
            if pool is None:
                results = [_one_trial(t) for t in tasks]
            else:
                chunk = max(1, math.ceil(len(tasks) / (4 * jobs)))
                results = list(pool.map(_one_trial, tasks, chunksize=chunk))
            bounds = [r[1] for r in results if r[1] is not None]
            crb_mean = None
            if bounds:
                crb_mean = (np.mean([b[0] for b in bounds], axis=0), np.mean([b[1] for b in bounds], axis=0))
            per_snr.append((snr, results, crb_mean))
            log.info("SNR %g dB done (%d trials)", snr, setup.trials)
            if progress is not None:
                progress(i, snr)
    finally:
        if pool is not None:
            pool.shutdown()
    rows = []
    for label in setup.labels():
        for snr, results, crb_mean in per_snr:
            rows.append(_summarize(label, snr, results, truth_th, truth_ph, crb_mean))
    return rows
