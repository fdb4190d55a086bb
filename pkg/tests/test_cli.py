import csv
import os

import numpy as np
import pytest

from tracephase.cli import main, parse_betas, parse_levels
from tracephase.diagnostics import read_diagnostics
from tracephase.errors import ConfigError
from tracephase.vtk import read_vtk_snapshot


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_parse_levels_and_betas():
    assert parse_levels("2..4") == [2, 3, 4]
    assert parse_levels("3,5") == [3, 5]
    assert parse_betas("0,0.1,1") == [0.0, 0.1, 1.0]
    for bad in ("a..b", ""):
        with pytest.raises(ConfigError):
            parse_levels(bad)
    with pytest.raises(ConfigError):
        parse_betas("-1")


def test_run_ac_writes_outputs(tmp_path):
    cfg = write(tmp_path, "experiment = sphere_ac\nmesh.level = 2\nmodel.t_end = 20\noutput.vtk_every = 5\n")
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out), "--seed", "4"]) == 0
    d = read_diagnostics(out / "diagnostics.csv")
    assert d["t"][0] == 0 and d["t"][-1] == 20 and np.all(np.diff(d["t"]) > 0)
    assert np.all(np.isfinite(d["E_lyap"]))
    snaps = sorted(os.listdir(out))
    assert "snap_000000.vtk" in snaps and "snap_000012.vtk" in snaps
    _, fields = read_vtk_snapshot(out / "snap_000000.vtk")
    assert set(fields) == {"eta"}


def test_run_is_bit_reproducible(tmp_path):
    cfg = write(tmp_path, "experiment = sphere_ch\nmesh.level = 2\nmodel.t_end = 2\n")
    for name in ("a", "b"):
        assert main(["run", cfg, "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a/diagnostics.csv").read_bytes() == (tmp_path / "b/diagnostics.csv").read_bytes()


def test_constant_half_ch_snapshots_identical(tmp_path):
    cfg = write(tmp_path, "experiment = sphere_ch\nmesh.level = 2\nmodel.t_end = 0.05\n"
                          "initial_condition = constant(0.5)\noutput.vtk_every = 1\n")
    out = tmp_path / "o"
    assert main(["run", cfg, "--out", str(out)]) == 0
    first = read_vtk_snapshot(out / "snap_000000.vtk")[1]["c"]
    for k in range(1, 6):
        c = read_vtk_snapshot(out / f"snap_{k:06d}.vtk")[1]["c"]
        assert np.max(np.abs(c - first)) <= 1e-12
    d = read_diagnostics(out / "diagnostics.csv")
    assert np.ptp(d["mass"][1:]) <= 1e-12 * d["mass"][1]


def test_validate_writes_convergence(tmp_path):
    cfg = write(tmp_path, "experiment = ch_validation\nvalidation.t_end = 0.125\n")
    out = tmp_path / "v"
    assert main(["validate", cfg, "--levels", "2..3", "--out", str(out)]) == 0
    with open(out / "convergence.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["level"] for r in rows] == ["2", "3"]
    assert float(rows[1]["u_L2L2"]) < float(rows[0]["u_L2L2"])
    assert np.isfinite(float(rows[1]["rate_mu_L2L2"]))


def test_sweep_flags_divergence(tmp_path):
    cfg = write(tmp_path, "experiment = beta_sweep\nmesh.level = 3\nmodel.t_end = 100\n")
    out = tmp_path / "s"
    assert main(["sweep", cfg, "--beta", "0,1", "--out", str(out), "--workers", "1"]) == 0
    with open(out / "sweep_summary.csv") as fh:
        rows = {float(r["beta_s"]): r for r in csv.DictReader(fh)}
    assert rows[0.0]["status"] == "divergent"
    assert rows[1.0]["status"] == "stable"
    assert os.path.exists(out / "beta_0" / "final_state.npz")


def test_exit_codes(tmp_path):
    assert main(["run", write(tmp_path, "nonsense_key = 3\n")]) == 2
    assert main(["run", str(tmp_path / "missing.cfg")]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    cfg = write(tmp_path, "experiment = sphere_ac\nmesh.level = 1\nmodel.t_end = 1\n")
    assert main(["run", cfg, "--out", str(blocker / "sub")]) == 4


def test_non_finite_exit_and_dump(tmp_path):
    cfg = write(tmp_path, "experiment = custom\nmodel = allen_cahn\nmesh.level = 2\nmodel.epsilon = 0.01\n"
                          "model.beta_s = 0\nmodel.dt_schedule = [[20000, 100]]\nmodel.t_end = 20000\n"
                          "initial_condition = expression(10 * x3)\n")
    out = tmp_path / "f"
    assert main(["run", cfg, "--out", str(out)]) == 3
    state = np.load(out / "final_state.npz")
    assert np.all(np.isfinite(state["u"]))
