import json

import numpy as np
import pytest

from wave2d import cli
from wave2d import io as wio
from wave2d.grid import GridFunction, Grid2D


def _cfg(tmp_path, **d):
    p = tmp_path / "run.json"
    p.write_text(json.dumps(d))
    return str(p)


GRID = {"n": 128, "L": 32.0}


def test_classify_regular(tmp_path):
    out = tmp_path / "rep.json"
    cfg = _cfg(tmp_path, potential={"coupling": 0.1}, grid=GRID)
    assert cli.main(["classify", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["kind"] == "Regular" and rep["rank_S1"] == 0 and rep["coupling"] == 0.1


def test_classify_tuned_first_kind(tmp_path, crossings):
    out = tmp_path / "rep.json"
    cfg = _cfg(tmp_path, potential={"coupling": crossings["FirstKind"]}, grid=GRID)
    assert cli.main(["classify", "--config", cfg, "--out", str(out), "--strict"]) == 0
    rep = json.loads(out.read_text())
    assert rep["kind"] == "FirstKind" and rep["rank_S1"] == 1
    assert len(rep["resonances"]) == 1 and rep["resonances"][0]["class"] == "SWave"


def test_missing_potential_file_is_a_config_error(tmp_path, capsys):
    cfg = _cfg(tmp_path, potential={"profile": "tabulated-file", "file": str(tmp_path / "nope.csv")})
    assert cli.main(["classify", "--config", cfg]) == 1
    assert "not found" in capsys.readouterr().err
    assert cli.main(["classify", "--config", str(tmp_path / "absent.json")]) == 1


def test_scan_output(tmp_path):
    empty = _cfg(tmp_path, grid={"n": 64, "L": 16.0}, options={"g_range": [0.5, 2.0], "n_steps": 4})
    out = tmp_path / "c.csv"
    assert cli.main(["scan", "--config", empty, "--out", str(out)]) == 0
    assert out.read_text() == "g_star,kind,rank_S1,gap\n"
    cfg = _cfg(tmp_path, potential={"coupling": 123.0}, grid={"n": 64, "L": 16.0},
               options={"g_range": [5.0, 8.0], "n_steps": 6})
    assert cli.main(["scan", "--config", cfg, "--out", str(out)]) == 0
    first = out.read_text()
    assert cli.main(["scan", "--config", cfg, "--out", str(out)]) == 0
    assert out.read_text() == first
    rows = first.splitlines()[1:]
    assert len(rows) == 1 and rows[0].split(",")[1] == "SecondKind"
    bad = _cfg(tmp_path, options={"g_range": [1.0]})
    assert cli.main(["scan", "--config", bad]) == 1


def test_waveop_free_case(tmp_path):
    cfg = _cfg(tmp_path, potential={"coupling": 0.0}, grid=GRID, band=[0.4, 1.6],
               options={"mode": "both", "t_list": [1.0, 2.0]})
    out = tmp_path / "run"
    assert cli.main(["waveop", "--config", cfg, "--out", str(out)]) == 0
    m = json.loads((out / "metrics.json").read_text())
    assert m["l2_ratio"] == pytest.approx(1.0, abs=1e-12)
    assert m["cross_ok"] and m["cross_error"] < 1e-12
    W = wio.read_grid_function(out / "W.gf2d")
    assert W.grid.n == 128


def test_waveop_input_file_and_errors(tmp_path):
    g = Grid2D(64, 16.0)
    X1, X2 = g.mesh()
    wio.write_grid_binary(GridFunction(g, np.exp(-(X1**2 + X2**2)).astype(complex)), tmp_path / "u.gf2d")
    cfg = _cfg(tmp_path, potential={"coupling": 0.3}, grid={"n": 64, "L": 16.0}, band=[0.4, 1.6],
               options={"input": {"file": str(tmp_path / "u.gf2d")}})
    assert cli.main(["waveop", "--config", cfg]) == 0
    nob = _cfg(tmp_path, grid={"n": 64, "L": 16.0})
    assert cli.main(["waveop", "--config", nob]) == 1
    mism = _cfg(tmp_path, grid=GRID, band=[0.4, 1.6], options={"input": {"file": str(tmp_path / "u.gf2d")}})
    assert cli.main(["waveop", "--config", mism]) == 1
    far = _cfg(tmp_path, grid={"n": 64, "L": 16.0}, band=[0.4, 1.6],
               options={"mode": "time", "t_list": [50.0]})
    assert cli.main(["waveop", "--config", far]) == 1


def test_verify_suites(tmp_path, capsys):
    assert cli.main(["verify", "nonsense"]) == 1
    out = tmp_path / "v.txt"
    assert cli.main(["verify", "specfun", "--out", str(out)]) == 0
    text = out.read_text()
    assert "[FAIL]" not in text and text.rstrip().endswith("checks passed")


@pytest.mark.slow
def test_verify_inversion():
    assert cli.main(["verify", "inversion"]) == 0


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        cli.main([])


def test_probe_csv(tmp_path):
    cfg = _cfg(tmp_path, potential={"coupling": 0.0}, grid=GRID,
               options={"scales": [1.0, 0.5], "p_values": [2, 4]})
    out = tmp_path / "p.csv"
    assert cli.main(["probe", "--config", cfg, "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "family_index,scale,p,ratio,quadrature_id"
    assert lines[1:] == ["0,1,2,1,q0-0", "1,0.5,2,1,q1-0", "0,1,4,1,q0-0", "1,0.5,4,1,q1-0"]
    bad = _cfg(tmp_path, options={"scales": [1.0, -1.0]})
    assert cli.main(["probe", "--config", bad]) == 1
