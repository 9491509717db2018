import hashlib
import json
import math
import os
import struct
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_rc.barkley import BarkleyParams, default_initial_condition, simulate
from hybrid_rc.config import DEFAULTS, HASH_EXCLUDED, ConfigError, RunConfig
from hybrid_rc.io import (
    HEADER,
    TrajectoryFormatError,
    TrajectoryHeader,
    format_value,
    read_csv,
    read_pgm,
    read_trajectory,
    render_heatmap,
    simulate_to_file,
    write_csv,
    write_trajectory,
)

# --- configuration ---------------------------------------------------------


def test_defaults_hold_the_reference_setup():
    cfg = RunConfig()
    assert (cfg["sim.nx"], cfg["sim.ny"]) == (80, 80)
    assert (cfg["sim.d"], cfg["sim.a"], cfg["sim.b"], cfg["sim.eps"]) == (0.02, 0.75, 0.06, 0.08)
    assert (cfg["sim.dt"], cfg["sim.dx"]) == (0.01, 0.1)
    assert (cfg["reservoir.r_dim"], cfg["reservoir.kappa"], cfg["reservoir.rho"]) == (400, 3.0, 0.5)
    assert (cfg["reservoir.beta"], cfg["local.alpha"], cfg["local.sigma"]) == (1e-6, 1e-6, 3)
    assert (cfg["data.train"], cfg["data.pred"], cfg["data.transient"]) == (30000, 8000, 2000)
    assert (cfg["ensemble.n_t"], cfg["ensemble.n_p"]) == (3, 6)
    assert cfg.simulate_frames() == 40400


def test_hash_matches_canonical_json():
    cfg = RunConfig(preset="desk")
    payload = {k: v for k, v in cfg.to_dict().items() if k not in HASH_EXCLUDED}
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    assert cfg.hash == hashlib.sha256(text.encode()).hexdigest()[:32]
    assert len(cfg.hash) == 32


def test_hash_ignores_threads_and_output():
    a = RunConfig()
    b = a.with_overrides({"run.threads": 8, "run.out": "elsewhere"})
    assert a.hash == b.hash
    assert a.hash != a.with_overrides({"run.seed": 1}).hash


def test_presets_and_overrides():
    desk = RunConfig(preset="desk")
    assert desk["sim.nx"] == 40 and desk["reservoir.r_dim"] == 100
    assert desk.hash != RunConfig().hash
    with pytest.raises(ConfigError):
        RunConfig(preset="huge")


def test_unknown_and_badly_typed_keys_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig(values={"sim.nz": 3})
    with pytest.raises(ConfigError):
        RunConfig(values={"sim.nx": "ten"})
    with pytest.raises(ConfigError):
        RunConfig(values={"sim.nx": 2.5})
    with pytest.raises(ConfigError):
        RunConfig(values={"hybrid.kbm_readout": "edge"})
    with pytest.raises(ValueError):
        RunConfig(values={"hybrid.mode": "both"})


def test_load_file_preset_and_overrides(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"preset": "desk", "data.pred": 123}))
    cfg = RunConfig.load(p, overrides={"run.seed": 4})
    assert cfg.preset == "desk" and cfg["data.pred"] == 123 and cfg["run.seed"] == 4
    cfg.dump(tmp_path / "d.json")
    assert json.loads((tmp_path / "d.json").read_text())["data.pred"] == 123
    p.write_text("[1]")
    with pytest.raises(ConfigError):
        RunConfig.load(p)


def test_parse_assignment():
    assert RunConfig.parse_assignment("data.pred=100") == ("data.pred", 100)
    assert RunConfig.parse_assignment("hybrid.mode=fh") == ("hybrid.mode", "fh")
    assert RunConfig.parse_assignment("ensemble.r_dims=[50, 100]") == ("ensemble.r_dims", [50, 100])
    with pytest.raises(ConfigError):
        RunConfig.parse_assignment("novalue")


def test_every_default_key_is_settable_to_itself():
    cfg = RunConfig(values=DEFAULTS)
    assert cfg.hash == RunConfig().hash


# --- trajectory files ------------------------------------------------------


def test_header_layout():
    assert HEADER.size == 68
    raw = TrajectoryHeader(3, 4, 5, 0.01, "ab").pack()
    magic, version, nx, ny, nv, n, dt, h = struct.unpack("<4sIIIIQd32s", raw)
    assert (magic, version, nx, ny, nv, n, dt) == (b"BKRC", 1, 3, 4, 2, 5, 0.01)
    assert h == b"ab" + b"\0" * 30


def test_trajectory_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    frames = rng.standard_normal((7, 2, 3, 5))
    path = tmp_path / "t.bkrc"
    write_trajectory(path, frames, nx=3, ny=5, n_steps=7, dt=0.01, config_hash="f" * 32)
    assert path.stat().st_size == 68 + 3 * 5 * 2 * 7 * 8
    header, data = read_trajectory(path)
    assert header == TrajectoryHeader(3, 5, 7, 0.01, "f" * 32)
    assert isinstance(data, np.memmap)
    assert np.array_equal(data, frames)
    _, eager = read_trajectory(path, mmap=False)
    assert np.array_equal(eager, frames)


def test_trajectory_zero_frames(tmp_path):
    path = tmp_path / "e.bkrc"
    write_trajectory(path, [], nx=2, ny=2, n_steps=0, dt=0.01, config_hash="")
    header, data = read_trajectory(path)
    assert header.n_steps == 0 and data.shape == (0, 2, 2, 2)


def test_trajectory_rejects_wrong_frames_and_cleans_up(tmp_path):
    path = tmp_path / "bad.bkrc"
    with pytest.raises(ValueError):
        write_trajectory(path, np.zeros((2, 2, 3, 3)), nx=3, ny=3, n_steps=3, dt=0.01, config_hash="")
    assert not path.exists()
    with pytest.raises(ValueError):
        write_trajectory(path, np.zeros((2, 2, 3, 4)), nx=3, ny=3, n_steps=2, dt=0.01, config_hash="")
    assert not path.exists()


def test_trajectory_detects_corruption(tmp_path):
    path = tmp_path / "t.bkrc"
    write_trajectory(path, np.zeros((2, 2, 2, 2)), nx=2, ny=2, n_steps=2, dt=0.01, config_hash="")
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(TrajectoryFormatError):
        read_trajectory(path)
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(TrajectoryFormatError):
        read_trajectory(path)
    path.write_bytes(raw[:10])
    with pytest.raises(TrajectoryFormatError):
        read_trajectory(path)


def test_simulate_to_file_matches_in_memory(tmp_path):
    p = BarkleyParams(nx=8, ny=8)
    init = default_initial_condition(8, 8, 2)
    simulate_to_file(tmp_path / "s.bkrc", p, init, 30, "h")
    _, data = read_trajectory(tmp_path / "s.bkrc")
    assert np.array_equal(data, simulate(p, init, 29))


# --- csv -------------------------------------------------------------------


def test_format_value():
    assert format_value(True) == "true" and format_value(np.bool_(False)) == "false"
    assert format_value(3) == "3" and format_value(np.int64(4)) == "4"
    assert format_value(math.nan) == "nan" and format_value(None) == ""
    assert format_value(0.1) == "0.1"


@settings(max_examples=100, deadline=None)
@given(st.floats(allow_nan=False))
def test_float_cells_roundtrip_exactly(x):
    assert float(format_value(x)) == x


def test_csv_roundtrip(tmp_path):
    path = tmp_path / "a.csv"
    write_csv(path, ["a", "b"], [[1, 0.25], ["oh", True]], "abc")
    text = path.read_text()
    assert text.splitlines()[0] == "# config_hash=abc"
    h, header, rows = read_csv(path)
    assert (h, header, rows) == ("abc", ["a", "b"], [["1", "0.25"], ["oh", "true"]])
    with pytest.raises(ValueError):
        write_csv(path, ["a"], [[1, 2]], "abc")


# --- heatmaps --------------------------------------------------------------


def test_heatmap_two_by_two(tmp_path):
    pix = render_heatmap(np.array([[0.0, 1.0], [0.5, 0.5]]), 0.0, 1.0, tmp_path / "h.pgm")
    assert pix.tolist() == [[0, 255], [128, 128]]
    lines = (tmp_path / "h.pgm").read_text().splitlines()
    assert lines[:3] == ["P2", "2 2", "255"]
    assert np.array_equal(read_pgm(tmp_path / "h.pgm"), pix)


def test_heatmap_clamps_and_orientation(tmp_path):
    f = np.array([[-1.0, 2.0, 0.0]])
    pix = render_heatmap(f, 0.0, 1.0, tmp_path / "c.pgm", comment="x")
    assert pix.tolist() == [[0, 255, 0]]
    assert (tmp_path / "c.pgm").read_text().splitlines()[2] == "3 1"


def test_heatmap_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        render_heatmap(np.array([[np.nan]]), 0, 1, tmp_path / "x.pgm")
    with pytest.raises(ValueError):
        render_heatmap(np.zeros((2, 2)), 1, 1, tmp_path / "x.pgm")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=1, max_size=30))
def test_heatmap_monotone(values):
    f = np.sort(np.array(values))[None, :]
    with tempfile.TemporaryDirectory() as d:
        pix = render_heatmap(f, -1.0, 1.0, os.path.join(d, "m.pgm"))
    assert (np.diff(pix[0].astype(int)) >= 0).all()
