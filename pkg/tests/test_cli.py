import csv
import subprocess
import sys

import numpy as np
import pytest

from iofd import cli
from iofd.assembly import read_field


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_parse_config():
    cfg = cli.parse_config("# comment\nPPW = 6  # trailing\n\nmodel=constant\nlayer-width = 3\n")
    assert cfg == {"ppw": "6", "model": "constant", "layer_width": "3"}
    with pytest.raises(cli.UsageError):
        cli.parse_config("just words")


def test_usage_errors(capsys):
    assert cli.main([]) == 2
    assert cli.main(["dispersion", "--schemes", "IOFD,BOGUS"]) == 2
    assert "valid" in capsys.readouterr().err
    assert cli.main(["tables", "--which", "nope"]) == 2
    assert cli.main(["solve", "/nonexistent.cfg"]) == 2


def test_dispersion_files(tmp_path):
    out = tmp_path / "d.csv"
    assert cli.main(["dispersion", "--schemes", "iofd,cho6", "--invg-max", "0.25", "--invg-step", "0.05", "--angles", "16", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["scheme", "dim", "invG", "theta", "gP", "delta_ph"]
    assert len(rows) == 1 + 2 * 5 * 16
    summary = read_csv(tmp_path / "d_summary.csv")
    vals = {(r[0], r[1]): float(r[2]) for r in summary[1:]}
    for g in ("0.2", "0.25"):
        assert vals[("IOFD", g)] <= vals[("CHO6", g)] / 10


def test_dispersion_degenerate_sweep(tmp_path):
    out = tmp_path / "one.csv"
    assert cli.main(["dispersion", "--schemes", "FD2", "--invg-step", "0.4", "--invg-max", "0.4", "--angles", "16", "--out", str(out)]) == 0
    assert len(read_csv(tmp_path / "one_summary.csv")) == 2


def test_fd2_row_closed_form(tmp_path):
    out = tmp_path / "fd2.csv"
    assert cli.main(["dispersion", "--schemes", "FD2", "--invg-step", "0.1", "--invg-max", "0.1", "--angles", "16", "--out", str(out)]) == 0
    row = read_csv(out)[1]
    kh = 2 * np.pi * 0.1
    assert float(row[3]) == 0.0
    assert np.isclose(float(row[5]), 2 * np.arcsin(kh / 2) / kh - 1, rtol=1e-10)


def test_dispersion_3d(tmp_path):
    out = tmp_path / "d3.csv"
    assert cli.main(["dispersion", "--dim", "3", "--schemes", "SUT", "--invg-step", "0.2", "--angles", "30", "--out", str(out)]) == 0
    assert read_csv(out)[0][3:5] == ["theta_polar", "theta_azimuth"]


def test_tables_fitted_format(capsys):
    assert cli.main(["tables", "--which", "q2d-fitted"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "invG,beta_1,dbeta_1,beta_2,dbeta_2"
    first = lines[1].split(",")
    assert first[0] == "0.00" and all(len(v.split(".")[1]) == 6 for v in first[1:])


def test_qfit_and_table_reader(tmp_path):
    alpha = tmp_path / "a.csv"
    assert cli.main(["tables", "--which", "iofd2d", "--out", str(alpha)]) == 0
    t = cli.read_table_csv(alpha)
    assert t.param_count == 3 and t.values[0, 0] == 0.702988
    out, err = tmp_path / "q.csv", tmp_path / "e.csv"
    assert cli.main(["qfit", "--alpha-table", str(alpha), "--out", str(out), "--errors", str(err)]) == 0
    rows = read_csv(err)
    assert rows[0] == ["invG", "q_error_fitted", "q_error_embedded"]
    for r in rows[1:]:
        assert float(r[1]) <= 3 * float(r[2])


def test_optimize_short_run(tmp_path):
    out, rep = tmp_path / "o.csv", tmp_path / "o.txt"
    code = cli.main(["optimize", "--max-iter", "1", "--out", str(out), "--report", str(rep)])
    assert code in (0, 3)
    assert len(read_csv(out)) == 10
    assert "objective" in rep.read_text()


def write_cfg(tmp_path, **extra):
    body = {
        "model": "constant",
        "c0": "1500",
        "frequency": "10",
        "extent_wavelengths": "10, 10",
        "ppw": "6",
        "layer_width": "2",
        "output": str(tmp_path / "u.hfd"),
        "report": str(tmp_path / "r.txt"),
        "history": str(tmp_path / "h.csv"),
    }
    body.update(extra)
    path = tmp_path / "run.cfg"
    path.write_text("".join(f"{k} = {v}\n" for k, v in body.items()))
    return path


def test_solve_direct_and_twogrid(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert cli.main(["solve", str(cfg)]) == 0
    f = read_field(tmp_path / "u.hfd")
    assert f.grid.h == 25.0 and np.all(np.isfinite(f.data))
    report = (tmp_path / "r.txt").read_text()
    assert "config.ppw = 6" in report and "status = direct" in report
    assert float(report.split("residual = ")[1].split()[0]) <= 1e-10
    direct = f.data
    assert cli.main(["solve", str(cfg), "--set", "solver=twogrid", "--set", "tol=1e-9"]) == 0
    tg = read_field(tmp_path / "u.hfd").data
    assert tg.shape == direct.shape
    assert np.linalg.norm(tg - direct) <= 1e-5 * np.linalg.norm(direct)
    hist = read_csv(tmp_path / "h.csv")
    assert float(hist[-1][1]) <= 1e-9
    assert cli.main(["solve", str(cfg), "--set", "solver=bicgstab", "--set", "correction=q"]) == 0


def test_solve_exit_codes(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert cli.main(["solve", str(cfg), "--set", "ppw=2"]) == 3
    assert "points per wavelength" in capsys.readouterr().err
    assert cli.main(["solve", str(cfg), "--set", "dim=3"]) == 4
    assert cli.main(["solve", str(cfg), "--set", "colour=red"]) == 2
    assert cli.main(["solve", str(cfg), "--set", "solver=magic"]) == 2
    assert cli.main(["solve", str(cfg), "--set", "solver=twogrid", "--set", "max_iters=1"]) == 5


def test_solve_model_file(tmp_path):
    from iofd.assembly import Grid, builtin_model, write_velocity

    m = builtin_model("smoothed-marmousi-like", Grid(2, (61, 61), 10.0), 2 * np.pi * 5, 1000.0)
    write_velocity(tmp_path / "m.hvm", m)
    cfg = write_cfg(tmp_path, model=str(tmp_path / "m.hvm"), frequency="5", ppw="", extent_wavelengths="")
    assert cli.main(["solve", str(cfg)]) == 0
    assert "ppw_min" in (tmp_path / "r.txt").read_text()


def test_twogrid_command(tmp_path):
    out = tmp_path / "t.csv"
    assert cli.main(["twogrid", "--ppw-list", "6,8", "--n", "129", "--out", str(out), "--history", str(tmp_path / "h.csv")]) == 0
    rows = read_csv(out)
    assert rows[0] == ["ppw", "freq", "its", "status"] and len(rows) == 3
    assert (tmp_path / "h_ppw6.csv").exists()
    assert cli.main(["twogrid", "--ppw", "6", "--n", "129", "--max-iters", "1", "--out", str(out)]) == 5


def test_greens_command(tmp_path):
    out, rep = tmp_path / "g.csv", tmp_path / "g.txt"
    assert cli.main(["greens", "--ppw", "6", "--distance", "5", "--clearance", "3", "--layer-width", "2", "--transmission", "1e-3", "--out", str(out), "--report", str(rep)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["theta", "r", "phase_err", "amp_err"]
    text = rep.read_text()
    assert "phase_err_max" in text and "amp_err_median" in text


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "iofd", "tables", "--which", "q3d"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("invG,beta_1")
