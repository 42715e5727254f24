"""Command-line front end.

Every subcommand reads an INI config (optionally on top of a ``--preset``),
writes CSV/text artifacts to ``--out`` together with the effective config,
and exits 0 only when its audits pass.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, formats, pipeline
from .config import PRESETS, ConfigError, dump_config, load_config
from .design import DesignError, DesignInfeasible, ScaledErrorModel, audit, beampattern, interpolation_error_map
from .estimators import ESTIMATORS, EstimationError, MusicSearch, estimate
from .montecarlo import ROW_FIELDS, MonteCarloSetup, run_montecarlo
from .sim import complex_gaussian, make_rng, noise_variance_for_snr, simulate, steering_matrix_f, trial_seeds

log = logging.getLogger("tbdoa")

ESPRIT_FAMILY = ("matrix_esprit", "hosvd_esprit", "tev")
EXIT_AUDIT = 1
EXIT_INFEASIBLE = 2
EXIT_FLAGGED = 3
EXIT_USAGE = 64


def _setup(args):
    cfg = load_config(args.config, args.preset)
    if args.seed is not None:
        cfg = cfg.with_overrides("experiment", seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_config(cfg))
    return cfg, out


def _design(cfg, args):
    return pipeline.load_or_solve_design(cfg, getattr(args, "design", None))


def _write_maps(design, out: Path, step_bp: float = 1.0, step_err: float = 0.1):
    th, ph = np.meshgrid(np.arange(0.0, 90.0 + 1e-9, step_bp), np.arange(0.0, 360.0, step_bp), indexing="ij")
    formats.write_map_csv(out / "beampattern.csv", th, ph, beampattern(design, th.ravel(), ph.ravel()), "power_db")
    g = design.grid
    (t0, t1), (p0, p1) = g.theta_bounds, g.phi_bounds
    th, ph = np.meshgrid(np.arange(t0, t1 + 1e-9, step_err), np.arange(p0, p1 + 1e-9, step_err), indexing="ij")
    formats.write_map_csv(out / "error_map.csv", th, ph, interpolation_error_map(design, th.ravel(), ph.ravel()),
                          "epsilon")


def _audit_line(rep: dict) -> str:
    keys = ("feasible", "worst_constraint", "max_in_sector_eps", "in_out_power_db", "worst_sidelobe")
    return "audit " + " ".join(f"{k}={rep[k]:.6g}" if isinstance(rep[k], float) else f"{k}={rep[k]}" for k in keys)


def cmd_design(args) -> int:
    cfg, out = _setup(args)
    t0 = time.perf_counter()
    try:
        design = pipeline.solve_design(cfg)
    except DesignInfeasible as exc:
        print(f"design infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    formats.write_design(out / "design.txt", design)
    _write_maps(design, out)
    rep = audit(design)
    print(f"design {design.method} solved in {time.perf_counter() - t0:.1f} s; "
          f"achieved objective {design.achieved_objective:.6g}")
    print(_audit_line(rep))
    return 0 if rep["feasible"] else EXIT_AUDIT


def cmd_beampattern(args) -> int:
    cfg, out = _setup(args)
    design = _design(cfg, args)
    _write_maps(design, out)
    rep = audit(design)
    print(_audit_line(rep))
    return 0 if rep["feasible"] else EXIT_AUDIT


def cmd_simulate(args) -> int:
    cfg, out = _setup(args)
    design = _design(cfg, args)
    _, rx = pipeline.arrays(cfg)
    scene = pipeline.scene(cfg)
    f = steering_matrix_f(design, rx, scene.thetas, scene.phis)
    if args.snr is not None:
        scene = scene.with_snr(args.snr, f)
    snap = simulate(scene, design, rx)
    formats.write_snapshots(out / "snapshots.txt", snap)
    rows = [{"target": k, "theta_deg": t, "phi_deg": p} for k, (t, p) in enumerate(scene.targets)]
    formats.write_csv(out / "truth.csv", rows, ("target", "theta_deg", "phi_deg"))
    print(f"wrote {snap.dims} snapshot tensor, realized SNR {snap.snr_db():.2f} dB")
    return 0


def _estimator_list(cfg, args):
    names = tuple(args.estimator) if getattr(args, "estimator", None) else cfg.experiment.estimators
    bad = set(names) - set(ESTIMATORS)
    if bad:
        raise ConfigError(f"unknown estimators {sorted(bad)}")
    return names


def cmd_estimate(args) -> int:
    cfg, out = _setup(args)
    snap = formats.read_snapshots(args.snapshots)
    if snap.virtual is None:
        snap = type(snap)(snap.matrix, snap.tx_dims, snap.n_rx, None, None, pipeline.virtual(cfg))
    names = _estimator_list(cfg, args)
    k = args.k or len(cfg.scene.thetas)
    music = None
    if "music" in names:
        design = _design(cfg, args)
        _, rx = pipeline.arrays(cfg)
        g = design.grid
        music = MusicSearch(design, rx, g.theta_bounds, g.phi_bounds, cfg.experiment.music_step)
    lut = formats.read_lut(args.lut) if args.lut else None
    rows, status = [], 0
    for name in names:
        try:
            est = estimate(snap, k, name, music)
        except EstimationError as exc:
            print(f"{name}: {exc}", file=sys.stderr)
            status = EXIT_AUDIT
            continue
        if lut is not None and name == lut.estimator:
            est = analysis.apply_lut(lut, est)
        rows += formats.estimate_rows(est)
    formats.write_csv(out / "estimates.csv", rows, formats.ESTIMATE_FIELDS)
    print(f"wrote {len(rows)} estimate rows")
    return status


def cmd_crb(args) -> int:
    cfg, out = _setup(args)
    design = _design(cfg, args)
    _, rx = pipeline.arrays(cfg)
    scene = pipeline.scene(cfg)
    f = steering_matrix_f(design, rx, scene.thetas, scene.phis)
    draws = [complex_gaussian(make_rng(s), (scene.k, scene.pulses), scene.rcs_variance)
             for s in trial_seeds(cfg.experiment.seed, cfg.experiment.crb_draws)]
    rows = []
    for snr in cfg.experiment.snr_db:
        nv = noise_variance_for_snr(f, snr, scene.rcs_variance)
        reps = [analysis.crb(design, rx, scene.thetas, scene.phis, p, nv) for p in draws]
        th = np.mean([r.theta_var for r in reps], axis=0)
        ph = np.mean([r.phi_var for r in reps], axis=0)
        for k in range(scene.k):
            rows.append({"snr_db": snr, "target": k, "theta_deg": scene.thetas[k], "phi_deg": scene.phis[k],
                         "virtual_kind": design.virtual.kind, "crb_theta": th[k], "crb_phi": ph[k]})
    formats.write_csv(out / "crb.csv", rows, ("snr_db", "target", "theta_deg", "phi_deg", "virtual_kind",
                                             "crb_theta", "crb_phi"))
    print(f"wrote CRB for {len(cfg.experiment.snr_db)} SNR points ({cfg.experiment.crb_draws} RCS draws)")
    return 0


BIAS_FIELDS = ("scale", "estimator", "target", "sigma_app", "pred_dtheta", "pred_dphi",
               "emp_dtheta", "emp_dphi", "pred_rms_theta", "pred_rms_phi")


def cmd_bias(args) -> int:
    cfg, out = _setup(args)
    design = _design(cfg, args)
    _, rx = pipeline.arrays(cfg)
    th, ph = np.array(cfg.scene.thetas), np.array(cfg.scene.phis)
    names = [n for n in _estimator_list(cfg, args) if n in ESPRIT_FAMILY]
    rows = []
    for s in cfg.experiment.error_scales:
        model = ScaledErrorModel(design, s)
        pred = analysis.bias_predict(model, rx, th, ph)
        for name in names:
            _, _, dth, dph = analysis.empirical_bias(model, rx, th, ph, name, cfg.scene.pulses,
                                                     cfg.experiment.seed)
            for k in range(th.size):
                rows.append({"scale": s, "estimator": name, "target": k, "sigma_app": pred.sigma_app[k],
                             "pred_dtheta": pred.dtheta[k], "pred_dphi": pred.dphi[k],
                             "emp_dtheta": dth[k], "emp_dphi": dph[k],
                             "pred_rms_theta": pred.rms_theta[k], "pred_rms_phi": pred.rms_phi[k]})
    formats.write_csv(out / "bias.csv", rows, BIAS_FIELDS)
    print(f"wrote {len(rows)} bias rows")
    return 0


def _build_luts(cfg, design, rx, names):
    g = design.grid
    luts = {}
    for name in names:
        t0 = time.perf_counter()
        luts[name] = analysis.build_lut(design, rx, name, g.theta_bounds, g.phi_bounds, cfg.experiment.lut_step)
        log.info("LUT for %s built in %.1f s", name, time.perf_counter() - t0)
    return luts


def cmd_lut(args) -> int:
    cfg, out = _setup(args)
    design = _design(cfg, args)
    _, rx = pipeline.arrays(cfg)
    names = [n for n in _estimator_list(cfg, args) if n in ESPRIT_FAMILY]
    for name, lut in _build_luts(cfg, design, rx, names).items():
        formats.write_lut(out / f"lut_{name}.csv", lut)
        print(f"lut {name}: {lut.shape[0]}x{lut.shape[1]} entries, {int(lut.flagged.sum())} flagged")
    return 0


def cmd_montecarlo(args) -> int:
    cfg, out = _setup(args)
    design = _design(cfg, args)
    _, rx = pipeline.arrays(cfg)
    names = _estimator_list(cfg, args)
    luts = _build_luts(cfg, design, rx, [n for n in names if n in ESPRIT_FAMILY]) if cfg.experiment.lut else {}
    setup = MonteCarloSetup(design, rx, pipeline.scene(cfg), tuple(cfg.experiment.snr_db), cfg.experiment.trials,
                            names, cfg.experiment.seed, luts, cfg.experiment.music_step)
    t0 = time.perf_counter()
    rows = run_montecarlo(setup, jobs=args.jobs)
    formats.write_csv(out / "montecarlo.csv", rows, ROW_FIELDS)
    print(f"{len(rows)} rows in {time.perf_counter() - t0:.1f} s")
    flagged = [r for r in rows if r["flagged"]]
    for r in flagged:
        print(f"flagged: {r['estimator']} at {r['snr_db']} dB ({r['failures']}/{r['trials']} failures)")
    return EXIT_FLAGGED if flagged else 0


COMMANDS = {
    "design": (cmd_design, "solve the interpolation design; write design, beampattern and error map"),
    "beampattern": (cmd_beampattern, "beampattern and error-map CSVs for a design"),
    "simulate": (cmd_simulate, "draw one snapshot set and dump it as text"),
    "estimate": (cmd_estimate, "run estimators on a snapshot dump"),
    "crb": (cmd_crb, "CRB versus SNR averaged over RCS draws"),
    "bias": (cmd_bias, "predicted versus empirical interpolation bias"),
    "lut": (cmd_lut, "build bias-correction look-up tables"),
    "montecarlo": (cmd_montecarlo, "RMSE, resolution and CRB sweep over SNR"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--preset", choices=sorted(PRESETS), help="figure preset applied before --config")
    common.add_argument("--seed", type=int, help="override experiment.seed")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for Monte Carlo trials")
    common.add_argument("--design", help="design file to load instead of solving")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="tbdoa", description="2D transmit-beamspace MIMO radar DOA toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_, description=help_)
        if name == "simulate":
            sp.add_argument("--snr", type=float, help="SNR in dB (noiseless when omitted)")
        if name == "estimate":
            sp.add_argument("--snapshots", required=True, help="snapshot dump from 'simulate'")
            sp.add_argument("--lut", help="look-up table CSV; corrects the estimator it was built for")
            sp.add_argument("--k", type=int, help="number of targets (default: scene size)")
        if name in ("estimate", "bias", "lut", "montecarlo"):
            sp.add_argument("--estimator", action="append", choices=ESTIMATORS,
                            help="restrict to this estimator (repeatable)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return COMMANDS[args.command][0](args)
    except (ConfigError, formats.FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DesignError as exc:
        print(f"design error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
