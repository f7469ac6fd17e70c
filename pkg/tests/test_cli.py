import csv
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sttrace import cli
from sttrace.cli import CSV_HEADER, ExperimentConfig, _parse_levels, _parse_number, format_table, main, run_experiment
from sttrace.exceptions import ConfigurationError

CFG = """\
# quick moving-circle check
scene = moving_circle
k = 1          # linear
beta = 0
h_init = 2^-2
dt_init = 0.25
levels = 0-1
name = quick
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "quick.cfg"
    p.write_text(CFG)
    return p


def test_parse_number_and_levels():
    assert _parse_number("2^-2") == 0.25 and _parse_number("2**-3") == 0.125 and _parse_number("0.5") == 0.5
    assert _parse_levels("0-4") == [0, 1, 2, 3, 4] and _parse_levels("0,1,3") == [0, 1, 3]


@given(st.integers(0, 6), st.integers(0, 6))
def test_parse_levels_range(a, b):
    assert _parse_levels(f"{a}-{b}") == list(range(a, b + 1))


def test_config_from_file(cfg_path):
    cfg = ExperimentConfig.from_file(cfg_path)
    assert cfg.scene == "moving_circle" and (cfg.k_s, cfg.k_q, cfg.k_gs, cfg.k_gq) == (1, 1, 1, 1)
    assert cfg.h_init == 0.25 and cfg.levels_s == [0, 1] and cfg.name == "quick"
    assert cfg.level_pairs() == [(0, 0), (1, 1)]


def test_config_defaults_follow_k():
    cfg = ExperimentConfig.from_mapping({"k_s": "2"})
    assert (cfg.k_q, cfg.k_gs, cfg.k_gq) == (2, 2, 2)
    grid = ExperimentConfig.from_mapping({"levels_s": "0-1", "levels_q": "0-2", "diagonal": "no"})
    assert len(grid.level_pairs()) == 6


@pytest.mark.parametrize(
    "items",
    [{"bogus": "1"}, {"beta": "2"}, {"k": "0"}, {"levels_s": "0-1", "levels_q": "0-2"}, {"extension": "x"}, {"diagonal": "maybe"}, {"domain": "0,1"}],
)
def test_config_errors(items):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_mapping(items)


def test_scene_kwargs():
    cfg = ExperimentConfig.from_mapping({"scene": "stationary_circle", "scene_radius": "0.4", "scene_solution": "constant"})
    sc = cfg.make_scene()
    assert sc.r == 0.4


def test_run_writes_csv(tmp_path, cfg_path):
    cfg = ExperimentConfig.from_file(cfg_path)
    rep = run_experiment(cfg, out=str(tmp_path / "out"), echo=None)
    rows = list(csv.reader(open(tmp_path / "out" / "quick.csv")))
    assert rows[0] == CSV_HEADER
    assert [r[0] for r in rows[1:]] == ["0", "1"]
    assert float(rows[1][3]) == pytest.approx(0.4235452434659497, rel=1e-8)
    assert rows[1][7:] == ["", "", ""]  # no eoc on the first level
    assert rows[2][7:9] == ["", ""] and float(rows[2][9]) == pytest.approx(math.log2(0.4235452434659497 / 0.1383804983457568), rel=1e-6)
    assert (tmp_path / "out" / "quick_mass_1_1.csv").exists()
    table = format_table(rep)
    assert "err_energy" in table and "1.61" in table


def test_failed_level_recorded(tmp_path):
    cfg = ExperimentConfig.from_mapping({"scene": "moving_line", "scene_offset": "5", "levels": "0", "h_init": "0.5", "dt_init": "0.5"})
    rep = run_experiment(cfg, out=str(tmp_path), echo=None)
    assert rep.rows[0].status.startswith("failed")
    rows = list(csv.reader(open(tmp_path / "run.csv")))
    assert rows[1][0] == "0" and rows[1][3] == ""


def test_grid_table(tmp_path):
    cfg = ExperimentConfig.from_mapping({"scene": "stationary_circle", "levels_s": "0-1", "levels_q": "0", "diagonal": "false", "T": "0.5"})
    rep = run_experiment(cfg, out=str(tmp_path), echo=None)
    rows = list(csv.reader(open(tmp_path / "run.csv")))
    assert [r[0] for r in rows[1:]] == ["0-0", "1-0"]
    assert rows[2][7] != "" and rows[2][8] == ""
    assert "l_s=1" in format_table(rep)


def test_main_run_deterministic(tmp_path, cfg_path, capsys):
    assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "b"), "--threads", "1"]) == 0
    assert (tmp_path / "a" / "quick.csv").read_bytes() == (tmp_path / "b" / "quick.csv").read_bytes()
    assert "eoc" in capsys.readouterr().out


def test_main_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 1\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_main_verify_oracles(capsys):
    assert main(["verify", "--suite", "oracles"]) == 0
    assert "checks passed" in capsys.readouterr().out


def test_thread_limit():
    from threadpoolctl import threadpool_info

    with cli.thread_limit(1):
        assert all(p["num_threads"] == 1 for p in threadpool_info())


def test_shipped_configs_parse():
    from pathlib import Path

    paths = sorted((Path(__file__).parent.parent / "configs").glob("*.cfg"))
    assert paths
    for p in paths:
        cfg = ExperimentConfig.from_file(p)
        assert cfg.name == p.stem and cfg.make_scene() is not None
