import numpy as np
import pytest

from tbdoa.analysis import build_lut
from tbdoa.config import PRESETS, Config, ConfigError, dump_config, load_config, parse_config
from tbdoa.design import ScaledErrorModel, design_ls, design_minimax_sidelobe, exact_design
from tbdoa.estimators import matrix_esprit, with_correction
from tbdoa.formats import (ESTIMATE_FIELDS, FormatError, estimate_rows, read_csv, read_design, read_lut,
                           read_snapshots, write_csv, write_design, write_lut, write_map_csv,
                           write_snapshots)
from tbdoa.geometry import VirtualStructure, receive_subset
from tbdoa.sim import RadarScene, simulate


def test_design_round_trip_is_exact(tmp_path, small_problem):
    tx, v, grid = small_problem
    d = design_minimax_sidelobe(tx, v, grid, 0.5)
    write_design(tmp_path / "d.txt", d)
    back = read_design(tmp_path / "d.txt")
    np.testing.assert_array_equal(back.e_matrix, d.e_matrix)
    np.testing.assert_array_equal(back.tx.positions, tx.positions)
    assert back.virtual == v
    assert (back.method, back.norms, back.bound, back.modulus) == (d.method, d.norms, d.bound, d.modulus)
    np.testing.assert_array_equal(back.grid.in_theta, grid.in_theta)
    np.testing.assert_array_equal(back.grid.out_phi, grid.out_phi)


def test_read_design_rejects_foreign_files(tmp_path):
    p = tmp_path / "x.txt"
    p.write_text("hello\n")
    with pytest.raises(FormatError):
        read_design(p)


def test_snapshot_round_trip(tmp_path, default_rx):
    model = exact_design(VirtualStructure("l_shaped", 4, 4))
    snap = simulate(RadarScene(((33, 66),), noise_variance=0.1), model, default_rx)
    write_snapshots(tmp_path / "s.txt", snap)
    back = read_snapshots(tmp_path / "s.txt")
    np.testing.assert_array_equal(back.matrix, snap.matrix)
    assert back.dims == snap.dims and back.virtual == snap.virtual


def test_csv_helpers(tmp_path):
    write_csv(tmp_path / "a.csv", [{"x": 1, "y": 2.5, "z": "ignored"}], ("x", "y"), comments=["note"])
    assert (tmp_path / "a.csv").read_text().splitlines()[:2] == ["# note", "x,y"]
    assert read_csv(tmp_path / "a.csv") == [{"x": "1", "y": "2.5"}]
    write_map_csv(tmp_path / "m.csv", [30, 31], [65, 66], [0.1, 0.2], "epsilon")
    rows = read_csv(tmp_path / "m.csv")
    assert list(rows[1]) == ["theta_deg", "phi_deg", "epsilon"] and float(rows[1]["epsilon"]) == 0.2


def test_lut_round_trip(tmp_path, small_problem):
    tx, v, grid = small_problem
    model = ScaledErrorModel(design_ls(tx, v, grid), 1.0)
    lut = build_lut(model, receive_subset(tx, n=4), "matrix_esprit", step=2.0)
    write_lut(tmp_path / "l.csv", lut)
    back = read_lut(tmp_path / "l.csv")
    for name in ("theta_axis", "phi_axis", "mu_true", "nu_true", "mu_est", "nu_est"):
        np.testing.assert_array_equal(getattr(back, name), getattr(lut, name))
    assert (back.kind, back.estimator) == (lut.kind, lut.estimator)


def test_estimate_rows_schema(default_rx):
    model = exact_design(VirtualStructure("ura", 4, 4))
    est = matrix_esprit(simulate(RadarScene(((33, 66), (39, 71))), model, default_rx), 2)
    rows = estimate_rows(est)
    assert len(rows) == 2 and set(rows[0]) == set(ESTIMATE_FIELDS)
    assert rows[0]["corrected"] == 0 and np.isnan(rows[0]["theta_corrected_deg"])
    rows = estimate_rows(with_correction(est, [1, 2], [3, 4]))
    assert rows[1]["theta_corrected_deg"] == 2


def test_config_defaults_and_round_trip():
    cfg = Config()
    assert cfg.design.delta == 0.1 and cfg.experiment.trials == 1000
    assert parse_config(dump_config(cfg)) == cfg


def test_config_parsing_and_overrides(tmp_path):
    text = "[scene]\nthetas = 34\nphis = 66\npulses = 6\n[experiment]\nlut = yes\nsnr_db = 0, 10\n"
    cfg = parse_config(text)
    assert cfg.scene.thetas == (34.0,) and cfg.scene.pulses == 6
    assert cfg.experiment.lut is True and cfg.experiment.snr_db == (0.0, 10.0)
    assert cfg.with_overrides("design", delta=0.01).design.delta == 0.01
    p = tmp_path / "c.ini"
    p.write_text("[design]\ndelta = 0.05\n")
    assert load_config(p, preset="fig2").design.delta == 0.05  # file beats preset
    assert load_config(preset="fig2").design.delta == 0.01


@pytest.mark.parametrize("text,match", [
    ("[scene]\nthetaz = 3\n", "unknown key 'scene.thetaz'"),
    ("[bogus]\nx = 1\n", "unknown section"),
    ("[experiment]\ntrials = many\n", "bad value"),
    ("[experiment]\nlut = maybe\n", "bad value"),
    ("[scene]\nthetas = 1 2\nphis = 3\n", "equal length"),
    ("[design]\nfile = /no/such/file\n", "does not exist"),
    ("no section header\n", "<string>"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text).validate()


def test_every_preset_parses():
    for name in PRESETS:
        load_config(preset=name)
    with pytest.raises(ConfigError):
        load_config(preset="fig99")
