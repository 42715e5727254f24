#!/usr/bin/env python3
"""Regenerate the CSV artifacts behind each figure preset.

Each preset maps to a short chain of ``tbdoa`` subcommands. Designs are solved
once per preset and reused by the later steps through ``--design``.

    python scripts/reproduce.py fig1 fig4 --out results
    python scripts/reproduce.py all --trials 200 --jobs 4
"""
import argparse
import sys
import time
from pathlib import Path

from tbdoa.cli import main as tbdoa
from tbdoa.config import PRESETS

# (subcommand, extra args); "{design}" is replaced by the solved design path
STEPS = {
    "fig1": [("design", [])],
    "fig2": [("design", [])],
    "fig3": [("design", [])],
    "fig4": [("design", []), ("crb", ["--design", "{design}"])],
    "fig5": [("design", []), ("bias", ["--design", "{design}", "--estimator", "matrix_esprit"])],
    "fig6": [("design", []), ("montecarlo", ["--design", "{design}"])],
    "fig7": [("design", []), ("montecarlo", ["--design", "{design}"])],
    "fig8": [("design", []), ("montecarlo", ["--design", "{design}"])],
}

# fig4 also compares against the L-shaped virtual array
L_SHAPED = "[virtual]\nkind = l_shaped\n"


def run_preset(name, out, extra_ini, jobs, seed):
    variants = [("ura", "")]
    if name == "fig4":
        variants.append(("l_shaped", L_SHAPED))
    for tag, ini in variants:
        dest = out / name / tag if len(variants) > 1 else out / name
        dest.mkdir(parents=True, exist_ok=True)
        cfg = dest / "override.ini"
        cfg.write_text(ini + extra_ini)
        common = ["--preset", name, "--config", str(cfg), "--out", str(dest), "--jobs", str(jobs)]
        if seed is not None:
            common += ["--seed", str(seed)]
        for cmd, args in STEPS[name]:
            args = [a.replace("{design}", str(dest / "design.txt")) for a in args]
            t0 = time.perf_counter()
            code = tbdoa([cmd] + common + args)
            print(f"[{name}/{tag}] {cmd}: exit {code} in {time.perf_counter() - t0:.1f}s", flush=True)
            if code != 0:
                return code
    return 0


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("presets", nargs="+", help="preset names or 'all'")
    p.add_argument("--out", default="results", help="root output directory")
    p.add_argument("--trials", type=int, help="override experiment.trials")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int)
    args = p.parse_args(argv)
    names = sorted(PRESETS) if "all" in args.presets else args.presets
    unknown = [n for n in names if n not in STEPS]
    if unknown:
        p.error(f"unknown preset(s): {', '.join(unknown)}")
    extra = f"[experiment]\ntrials = {args.trials}\n" if args.trials else ""
    worst = 0
    for name in names:
        worst = max(worst, run_preset(name, Path(args.out), extra, args.jobs, args.seed))
    return worst


if __name__ == "__main__":
    sys.exit(main())
