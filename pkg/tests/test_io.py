import json
import os
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wave2d import io as wio
from wave2d.grid import Grid2D, GridFunction
from wave2d.threshold import Crossing


def _gf(n=16, L=4.0, seed=0):
    rng = np.random.default_rng(seed)
    return GridFunction(Grid2D(n, L), rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))


def test_csv_roundtrip_is_exact(tmp_path):
    u = _gf()
    p = tmp_path / "u.csv"
    wio.write_grid_csv(u, p)
    v = wio.read_grid_function(p)
    assert v.grid.n == 16 and v.grid.L == 4.0
    np.testing.assert_array_equal(v.values, u.values)


def test_binary_layout_and_roundtrip(tmp_path):
    u = _gf(16, 2.0)
    p = tmp_path / "u.gf2d"
    wio.write_grid_binary(u, p)
    raw = p.read_bytes()
    assert raw[:8] == wio.MAGIC and len(raw) == 8 + 8 + 8 + 16 * 256
    assert int.from_bytes(raw[8:16], "little") == 16
    np.testing.assert_array_equal(wio.read_grid_function(p).values, u.values)
    (tmp_path / "cut.gf2d").write_bytes(raw[:-16])
    with pytest.raises(wio.ConfigError):
        wio.read_grid_binary(tmp_path / "cut.gf2d")


def test_csv_header_required(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,y,re,im\n0,0,1,0\n")
    with pytest.raises(wio.ConfigError):
        wio.read_grid_csv(p)


def test_plain_json_values():
    d = wio._plain({"z": 1 + 2j, "a": np.arange(2), "i": np.int64(3), "inf": float("inf")})
    assert d == {"z": [1.0, 2.0], "a": [0, 1], "i": 3, "inf": "inf"}
    json.dumps(d)


def test_crossings_csv_is_deterministic():
    cr = [Crossing(6.894776631234, "SecondKind", 2, 1e6, 2), Crossing(11.61, "FirstKind", 1, 3e5, 1)]
    text = wio.crossings_csv(cr)
    assert text == wio.crossings_csv(list(cr))
    lines = text.splitlines()
    assert lines[0] == "g_star,kind,rank_S1,gap"
    assert lines[1] == "6.89477663123,SecondKind,2,1e+06"
    assert wio.crossings_csv([]) == "g_star,kind,rank_S1,gap\n"


def test_config_roundtrip(tmp_path):
    cfg = wio.RunConfig.from_dict({"potential": {"profile": "ring", "coupling": 2.0},
                                   "grid": {"n": 64, "L": 16.0}, "band": [0.4, 1.6],
                                   "options": {"mode": "both"}})
    p = tmp_path / "c.json"
    cfg.dump(p)
    again = wio.RunConfig.load(p)
    assert again == cfg
    assert again.make_potential().grid.n == 64


@pytest.mark.parametrize("bad", [
    {"potential": {"profile": "square"}},
    {"potential": {"width": -1.0}},
    {"potential": {"coupling": float("nan")}},
    {"potential": {"profile": "tabulated-file", "file": "/nonexistent/V.csv"}},
    {"potential": {"colour": "red"}},
    {"grid": {"n": 64.5}},
    {"grid": {"n": 64, "L": -1}},
    {"a": 0},
    {"band": [1.0, 0.5]},
    {"band": [0.5, 500.0]},
    {"extra": 1},
    [],
])
def test_invalid_configs(bad):
    with pytest.raises(wio.ConfigError):
        wio.RunConfig.from_dict(bad)


def test_unreadable_config(tmp_path):
    with pytest.raises(wio.ConfigError):
        wio.RunConfig.load(tmp_path / "missing.json")
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(wio.ConfigError):
        wio.RunConfig.load(tmp_path / "broken.json")


def test_tabulated_potential_from_file(tmp_path):
    g = Grid2D(16, 8.0)
    X1, X2 = g.mesh()
    vals = -np.exp(-(X1**2 + X2**2))
    wio.write_grid_csv(GridFunction(g, vals.astype(complex)), tmp_path / "V.csv")
    cfg = wio.RunConfig.from_dict({"potential": {"profile": "tabulated-file", "coupling": 2.0,
                                                 "file": str(tmp_path / "V.csv")},
                                   "grid": {"n": 16, "L": 8.0}})
    np.testing.assert_allclose(cfg.make_potential().V, 2 * vals)
    wio.write_grid_csv(GridFunction(g, 1j * vals), tmp_path / "V.csv")
    with pytest.raises(wio.ConfigError):
        cfg.make_potential()


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([16, 32, 64]), st.floats(0.5, 100.0), st.integers(0, 2**31))
def test_binary_roundtrip_property(n, L, seed):
    u = _gf(n, L, seed)
    with tempfile.TemporaryDirectory() as d:
        p = os.path.join(d, "u.gf2d")
        wio.write_grid_binary(u, p)
        v = wio.read_grid_binary(p)
    assert v.grid.L == u.grid.L
    np.testing.assert_array_equal(v.values, u.values)
