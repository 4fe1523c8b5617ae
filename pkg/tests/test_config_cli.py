import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coupled_doubling.cli import main, run
from coupled_doubling.config import (
    ConfigError,
    ExperimentConfig,
    emit_config,
    parse_config,
    parse_init,
)


def test_valid_finite_config():
    cfg = parse_config("mode = finite\nsites = 3\nepsilon = 0.42\nsteps = 1e5\n")
    assert (cfg.mode, cfg.sites, cfg.epsilon, cfg.steps) == ("finite", 3, 0.42, 100_000)


def test_epsilon_out_of_range():
    with pytest.raises(ConfigError, match="epsilon out of range"):
        parse_config(overrides={"mode": "finite", "epsilon": "1.2"})


@pytest.mark.parametrize(
    "overrides, key",
    [
        ({"mode": "finite", "epsilon": 0.3, "colour": "red"}, "colour"),
        ({"mode": "warp", "epsilon": 0.3}, "mode"),
        ({"mode": "finite", "epsilon": 0.3, "sites": 1}, "sites"),
        ({"mode": "density", "epsilon": 0.3, "grid_size": 1000, "init": "uniform"}, "grid_size"),
        ({"mode": "finite", "epsilon": 0.3, "steps": "ten"}, "steps"),
        ({"mode": "finite", "epsilon": 0.3, "init": "0.1,0.2"}, "init"),
        ({"mode": "finite", "epsilon": 0.3, "observables": "label", "sites": 2}, "observables"),
        ({"mode": "density", "epsilon": 0.3}, "init"),
        ({"mode": "renorm", "epsilon": 0.6}, "epsilon"),
        ({"mode": "scan", "epsilon_grid": "0.1,1.3"}, "epsilon_grid"),
    ],
)
def test_invalid_configs_name_the_key(overrides, key):
    with pytest.raises(ConfigError, match=key):
        parse_config(overrides=overrides)


def test_flags_override_file_and_json_accepted():
    doc = json.dumps({"mode": "finite", "epsilon": 0.2, "sites": 2, "steps": 10})
    cfg = parse_config(doc, {"epsilon": "1/3"})
    assert cfg.epsilon == pytest.approx(1 / 3) and cfg.sites == 2


def test_epsilon_grid_forms():
    cfg = parse_config(overrides={"mode": "scan", "epsilon_grid": "0.1:0.3:3"})
    assert cfg.epsilon_grid == pytest.approx((0.1, 0.2, 0.3))
    cfg = parse_config(overrides={"mode": "scan", "epsilon_grid": "0.1, 0.25"})
    assert cfg.epsilon_grid == (0.1, 0.25)


def test_init_specs():
    assert parse_init("bump(0.3, 0.4)").args == (0.3, 0.4)
    assert parse_init("sine(0.025)").kind == "sine"
    assert parse_init("0.1,0.2,1/3").args == pytest.approx((0.1, 0.2, 1 / 3))
    assert parse_init("uniform-random").kind == "uniform-random"
    with pytest.raises(ConfigError):
        parse_init("gaussian(1)")


finite_cfgs = st.builds(
    ExperimentConfig,
    mode=st.just("finite"),
    epsilon=st.floats(0.0, 1.0, exclude_max=True),
    sites=st.integers(2, 6),
    steps=st.integers(1, 10**6),
    burn_in=st.integers(0, 10**4),
    seed=st.integers(0, 2**32),
    observables=st.sampled_from([(), ("sum",), ("diameter", "x")]),
    orbits=st.integers(1, 50),
    bins=st.integers(1, 4096),
    out_dir=st.text("abc/_-", min_size=1, max_size=10).map(str.strip).filter(bool),
)
scan_cfgs = st.builds(
    ExperimentConfig,
    mode=st.just("scan"),
    epsilon_grid=st.lists(st.floats(0.0, 1.0, exclude_max=True), min_size=1, max_size=5).map(tuple),
    observables=st.sampled_from([("K",), ("labels_visited", "ks")]),
)
density_cfgs = st.builds(
    ExperimentConfig,
    mode=st.just("density"),
    epsilon=st.floats(0.0, 1.0, exclude_max=True),
    grid_size=st.sampled_from([256, 1024, 2**14]),
    init=st.sampled_from(["bump(0.3,0.4)", "sine(0.025)", "uniform"]),
)


@given(st.one_of(finite_cfgs, scan_cfgs, density_cfgs))
def test_emit_parse_round_trip(cfg):
    assert parse_config(emit_config(cfg)) == cfg


# ---------------------------------------------------------------- runs

def _manifest(d: Path) -> dict:
    return json.loads((d / "manifest.json").read_text())


def test_renorm_prints_depth(tmp_path, capsys):
    assert main(["--mode", "renorm", "--epsilon", "1/3", "--out-dir", str(tmp_path)]) == 0
    assert "n=1, K=2" in capsys.readouterr().out
    assert (tmp_path / "renorm.csv").read_text().splitlines()[1].endswith(",1,2")


def test_finite_run_label_constant_and_replay(tmp_path):
    args = ["--mode", "finite", "--sites", "3", "--epsilon", "0.42", "--steps", "20000",
            "--burn-in", "1000", "--observables", "label", "--seed", "4"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    data = np.loadtxt(tmp_path / "a" / "observables.csv", delimiter=",", skiprows=1)
    assert np.unique(data[:, 2]).size == 1
    # replay straight from the manifest
    man = _manifest(tmp_path / "a")
    man["config"]["out_dir"] = str(tmp_path / "b")
    (tmp_path / "replay.json").write_text(json.dumps(man))
    assert main(["--config", str(tmp_path / "replay.json")]) == 0
    assert _manifest(tmp_path / "b")["outputs"] == man["outputs"]


def test_manifest_digests_match_files(tmp_path):
    import hashlib

    assert main(["--mode", "finite", "--sites", "2", "--epsilon", "0.3", "--steps", "50",
                 "--init", "0.1,0.7", "--observables", "v,x", "--out-dir", str(tmp_path)]) == 0
    man = _manifest(tmp_path)
    assert man["status"] == "ok" and man["seed"] == 0
    for name, digest in man["outputs"].items():
        assert hashlib.sha256((tmp_path / name).read_bytes()).hexdigest() == digest
    assert not list(tmp_path.glob(".*tmp"))


def test_density_run_support_halves(tmp_path):
    assert main(["--mode", "density", "--epsilon", "0.75", "--init", "bump(0.3,0.4)",
                 "--steps", "4", "--grid-size", "16384", "--out-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "density_steps.csv").read_text().splitlines()
    header = lines[0].split(",")
    col = header.index("support_length")
    lengths = np.array([float(l.split(",")[col]) for l in lines[1:]])
    np.testing.assert_allclose(lengths[1:] / lengths[:-1], 0.5, atol=2 * 2 / 16384 / lengths[-1])


def test_failed_run_is_recorded_without_outputs(tmp_path, capsys):
    status = main(["--mode", "renorm", "--epsilon", "0", "--out-dir", str(tmp_path)])
    assert status != 0
    man = _manifest(tmp_path)
    assert man["status"] == "failed" and "Markov" in man["error"] and "mode=renorm" in man["error"]
    assert man["outputs"] == {}
    assert sorted(p.name for p in tmp_path.iterdir()) == ["manifest.json"]


def test_config_error_exit_status(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("mode = finite\nepsilon = 0.3\nspeed = 3\n")
    assert main(["--config", str(bad)]) == 2
    assert "speed" in capsys.readouterr().err


def test_scan_run(tmp_path):
    assert main(["--mode", "scan", "--epsilon-grid", "0.2,1/3", "--steps", "2000", "--orbits", "2",
                 "--observables", "K,labels_visited", "--out-dir", str(tmp_path)]) == 0
    rows = (tmp_path / "scan.csv").read_text().splitlines()
    assert rows[0].startswith("epsilon,") and len(rows) == 3


def test_run_returns_nonzero_on_module_error(tmp_path):
    cfg = ExperimentConfig(mode="finite", epsilon=0.3, sites=2, steps=10,
                           observables=("label",), out_dir=str(tmp_path))
    assert run(cfg, echo=lambda *_: None) == 1
    assert _manifest(tmp_path)["status"] == "failed"
