"""Plain-text file formats: designs, snapshot dumps, look-up tables, CSV.

Design files are self-describing: a ``key = value`` header, the transmit
array positions, and E as ``row col re im`` records, so a design can be
reloaded without the config that produced it.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .analysis import LookUpTable
from .design import InterpolationDesign
from .geometry import ArrayGeometry, VirtualStructure, build_sector_grid
from .sim import SnapshotSet

DESIGN_MAGIC = "# tbdoa interpolation design v1"
SNAPSHOT_MAGIC = "# tbdoa snapshot dump v1"


class FormatError(ValueError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (tuple, list)):
        return " ".join(_fmt(v) for v in x)
    if isinstance(x, float):
        return repr(x)
    return str(x)


# ----------------------------------------------------------------- design

def write_design(path, design: InterpolationDesign) -> None:
    v, g = design.virtual, design.grid
    head = {
        "method": design.method,
        "objective_norm": design.norms[0],
        "constraint_norm": design.norms[1],
        "bound": float(design.bound),
        "achieved_objective": float(design.achieved_objective),
        "modulus": design.modulus,
        "facets": design.facets,
        "virtual_kind": v.kind,
        "m1": v.m1,
        "m2": v.m2,
        "spacing": float(v.spacing),
        "n_tx": design.tx.size,
        "n_virtual": v.size,
    }
    if g is not None:
        head.update(theta_bounds=tuple(map(float, g.theta_bounds)), phi_bounds=tuple(map(float, g.phi_bounds)),
                    transition=tuple(map(float, g.transition)), in_step=g.in_step, out_step=g.out_step)
    lines = [DESIGN_MAGIC] + [f"{k} = {_fmt(val)}" for k, val in head.items()]
    lines.append("[tx]  # index x y (wavelengths)")
    lines += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(design.tx.positions.tolist())]
    lines.append("[E]  # row col re im")
    e = design.e_matrix
    for i in range(e.shape[0]):
        for j in range(e.shape[1]):
            lines.append(f"{i} {j} {float(e[i, j].real)!r} {float(e[i, j].imag)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_design(path) -> InterpolationDesign:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != DESIGN_MAGIC:
        raise FormatError(f"{path}: not a design file")
    head, tx_rows, e_rows, section = {}, [], [], None
    for ln in text[1:]:
        s = ln.split("#", 1)[0].strip()
        if not s:
            continue
        if s.startswith("["):
            section = s.strip("[]")
            continue
        if section is None:
            key, _, val = s.partition("=")
            head[key.strip()] = val.strip()
        elif section == "tx":
            tx_rows.append(s.split())
        elif section == "E":
            e_rows.append(s.split())
    try:
        n_tx, n_v = int(head["n_tx"]), int(head["n_virtual"])
        tx = ArrayGeometry(np.array([[float(r[1]), float(r[2])] for r in tx_rows]))
        e = np.zeros((n_tx, n_v), complex)
        for r in e_rows:
            e[int(r[0]), int(r[1])] = complex(float(r[2]), float(r[3]))
        virtual = VirtualStructure(head["virtual_kind"], int(head["m1"]), int(head["m2"]), float(head["spacing"]))
        grid = None
        if "theta_bounds" in head:
            pair = lambda k: tuple(float(x) for x in head[k].split())  # noqa: E731
            grid = build_sector_grid(pair("theta_bounds"), pair("phi_bounds"), pair("transition"),
                                     float(head["in_step"]), float(head["out_step"]))
    except (KeyError, ValueError, IndexError) as exc:
        raise FormatError(f"{path}: malformed design file ({exc})") from exc
    if tx.size != n_tx or len(e_rows) != n_tx * n_v:
        raise FormatError(f"{path}: expected {n_tx} elements and {n_tx * n_v} E entries")
    return InterpolationDesign(e, tx, virtual, grid, head["method"],
                               (head["objective_norm"], head["constraint_norm"]),
                               float(head["bound"]), float(head["achieved_objective"]),
                               head.get("modulus", "soc"), int(head.get("facets", 8)))


# -------------------------------------------------------------- snapshots

def write_snapshots(path, snap: SnapshotSet) -> None:
    """Dims header then one ``re im`` line per tensor entry (C order)."""
    t = snap.tensor
    v = snap.virtual
    lines = [SNAPSHOT_MAGIC, "dims = " + " ".join(map(str, t.shape)), f"n_rx = {snap.n_rx}"]
    if v is not None:
        lines += [f"virtual_kind = {v.kind}", f"m1 = {v.m1}", f"m2 = {v.m2}", f"spacing = {float(v.spacing)!r}"]
    lines.append("[data]  # re im")
    lines += [f"{z.real!r} {z.imag!r}" for z in t.ravel().tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_snapshots(path) -> SnapshotSet:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != SNAPSHOT_MAGIC:
        raise FormatError(f"{path}: not a snapshot dump")
    head, data, in_data = {}, [], False
    for ln in text[1:]:
        s = ln.split("#", 1)[0].strip()
        if not s:
            continue
        if s.startswith("["):
            in_data = True
            continue
        if in_data:
            re_, im_ = s.split()
            data.append(complex(float(re_), float(im_)))
        else:
            key, _, val = s.partition("=")
            head[key.strip()] = val.strip()
    dims = tuple(int(x) for x in head["dims"].split())
    if len(data) != math.prod(dims):
        raise FormatError(f"{path}: {len(data)} entries for dims {dims}")
    t = np.array(data).reshape(dims)
    virtual = None
    if "virtual_kind" in head:
        virtual = VirtualStructure(head["virtual_kind"], int(head["m1"]), int(head["m2"]), float(head["spacing"]))
    n_rx = int(head["n_rx"])
    return SnapshotSet(t.reshape(-1, dims[-1]), dims[:-2], n_rx, None, None, virtual)


# -------------------------------------------------------------------- CSV

def write_csv(path, rows, fields, comments=()) -> None:
    """Rows (dicts) to CSV with a fixed header; ``comments`` become ``#`` lines."""
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.DictWriter(fh, fieldnames=list(fields), extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_map_csv(path, theta, phi, value, name: str = "value") -> None:
    rows = ({"theta_deg": t, "phi_deg": p, name: v}
            for t, p, v in zip(np.ravel(theta), np.ravel(phi), np.ravel(value)))
    write_csv(path, rows, ("theta_deg", "phi_deg", name))


LUT_FIELDS = ("mu_true", "nu_true", "mu_est", "nu_est")


def write_lut(path, lut: LookUpTable) -> None:
    comments = [f"kind = {lut.kind}", f"estimator = {lut.estimator}",
                f"theta_axis = {float(lut.theta_axis[0])!r} {float(lut.theta_axis[-1])!r} {lut.theta_axis.size}",
                f"phi_axis = {float(lut.phi_axis[0])!r} {float(lut.phi_axis[-1])!r} {lut.phi_axis.size}",
                "rows are theta-major over the lattice"]
    rows = ({"mu_true": a, "nu_true": b, "mu_est": c, "nu_est": d}
            for a, b, c, d in zip(lut.mu_true.ravel(), lut.nu_true.ravel(), lut.mu_est.ravel(), lut.nu_est.ravel()))
    write_csv(path, rows, LUT_FIELDS, comments)


def read_lut(path) -> LookUpTable:
    meta = {}
    with open(path) as fh:
        for ln in fh:
            if not ln.startswith("#"):
                break
            key, _, val = ln[1:].partition("=")
            if val:
                meta[key.strip()] = val.strip()
    rows = read_csv(path)
    try:
        t0, t1, nt = meta["theta_axis"].split()
        p0, p1, npp = meta["phi_axis"].split()
    except KeyError as exc:
        raise FormatError(f"{path}: missing lattice metadata") from exc
    th_axis = np.linspace(float(t0), float(t1), int(nt))
    ph_axis = np.linspace(float(p0), float(p1), int(npp))
    shape = (th_axis.size, ph_axis.size)
    if len(rows) != th_axis.size * ph_axis.size:
        raise FormatError(f"{path}: {len(rows)} rows for a {shape} lattice")
    cols = {k: np.array([float(r[k]) for r in rows]).reshape(shape) for k in LUT_FIELDS}
    return LookUpTable(th_axis, ph_axis, cols["mu_true"], cols["nu_true"], cols["mu_est"], cols["nu_est"],
                       meta.get("kind", "ura"), meta.get("estimator", "hosvd_esprit"),
                       np.zeros(shape, bool))


ESTIMATE_FIELDS = ("estimator", "target", "theta_deg", "phi_deg", "mu", "nu",
                   "corrected", "theta_corrected_deg", "phi_corrected_deg")


def estimate_rows(est) -> list:
    rows = []
    for k in range(est.k):
        rows.append({"estimator": est.estimator, "target": k, "theta_deg": est.theta[k], "phi_deg": est.phi[k],
                     "mu": est.mu[k], "nu": est.nu[k], "corrected": int(est.corrected),
                     "theta_corrected_deg": est.corrected_theta[k] if est.corrected else float("nan"),
                     "phi_corrected_deg": est.corrected_phi[k] if est.corrected else float("nan")})
    return rows
