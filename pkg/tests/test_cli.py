import json

import numpy as np
import pytest
import yaml

from vpfm.cli import ConfigError, load_config, main, resolve_config
from vpfm.io import read_diagnostics

TG = {
    "scene": "taylor_green",
    "scene_params": {"resolution": 32, "nu": 0.05},
    "sim": {"cfl": 0.4},
    "run": {"max_steps": 10},
}


def write(path, cfg):
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_taylor_green_run_writes_outputs(tmp_path):
    cfg = write(tmp_path / "tg.yaml", TG)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 0
    rows = read_diagnostics(out / "diagnostics.csv")
    # frame 0 (initial state) plus one row per step
    assert [int(r["frame"]) for r in rows] == list(range(11))
    e = np.array([float(r["kinetic_energy"]) for r in rows])
    assert np.all(np.diff(e) <= 0.0)
    assert float(rows[0]["normalized_energy"]) == 1.0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "ok" and summary["steps"] == 10
    assert summary["velocity_error_l2"] < 1e-2
    assert (out / "fields" / "omega0_000010.grid").exists()


def test_effective_config_round_trip_and_determinism(tmp_path):
    cfg = write(tmp_path / "tg.yaml", TG)
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "a")]) == 0
    eff = tmp_path / "a" / "effective_config.yaml"
    loaded = yaml.safe_load(eff.read_text())
    assert loaded["sim"]["n_long"] == 20 and loaded["grid"]["cells"] == [32, 32]
    assert main(["run", str(eff), "--output-dir", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "diagnostics.csv").read_text()
    b = (tmp_path / "b" / "diagnostics.csv").read_text()
    assert a == b


@pytest.mark.parametrize("bad", [
    {"scene": "nope"},
    {"scene": "cavity", "sim": {"warp": 9}},
    {"scene": "cavity", "scene_params": {"reynolds": 10}},
    {"scene": "cavity", "colour": "red"},
    {"scene": "cavity", "sim": {"cfl": -1}},
    {"scene": "cavity", "force": {"kind": "magnetic"}},
])
def test_config_errors_exit_2(tmp_path, bad, capsys):
    cfg = write(tmp_path / "bad.yaml", bad)
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 2
    assert "config error" in capsys.readouterr().err


def test_yaml_syntax_error_reports_line(tmp_path):
    p = tmp_path / "broken.yaml"
    p.write_text("scene: cavity\nsim:\n  nu: [1, 2\n")
    with pytest.raises(ConfigError, match="line"):
        load_config(p)
    assert main(["run", str(p)]) == 2


def test_resolve_config_fills_defaults():
    cfg = resolve_config({"scene": "cavity"})
    assert cfg["scene_params"]["re"] == 100.0
    assert cfg["run"]["max_steps"] == 100
    assert cfg["output"]["diagnostics"] is True


def test_cavity_run_emits_probe_file(tmp_path):
    cfg = write(tmp_path / "cav.yaml", {"scene": "cavity", "scene_params": {"resolution": 16},
                                        "run": {"max_steps": 3}})
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 0
    probe = json.loads((tmp_path / "o" / "cavity_probe.json").read_text())
    assert set(probe["cavity_relative_errors"]) >= {"midpoint_top_vorticity", "u_min_vertical"}


def test_bench_sweep(tmp_path):
    code = main(["bench", "taylor_green", "--sweep", "nL=2,4", "--hessian", "both",
                 "--max-steps", "3", "--output-dir", str(tmp_path), "--set", "resolution=16"])
    assert code == 0
    lines = (tmp_path / "bench.csv").read_text().splitlines()
    assert lines[0].startswith("n_long,hessian,frames")
    assert len(lines) == 5
    assert main(["bench", "taylor_green", "--sweep", "x=1", "--output-dir", str(tmp_path)]) == 2


def test_scenes_listing(capsys):
    assert main(["scenes"]) == 0
    assert "hopf_link" in capsys.readouterr().out


def test_bundled_configs_resolve():
    from pathlib import Path
    for p in sorted(Path(__file__).parent.parent.joinpath("configs").glob("*.yaml")):
        resolve_config(load_config(p))
