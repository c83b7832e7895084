import json

import pytest

from run_database.config_loader_run import apply_overrides, build_run_config, load_config
from utils.errors import ConfigValidationError


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_default_config_loads():
    config = load_config()
    assert config.command == "simulate"
    assert config.simulation.mass == 0.3
    assert config.simulation.rtol == 1e-10
    assert config.bench.sizes == (1024, 4096, 16384)
    assert config.output.threads is None
    assert config.to_dict()["simulation"]["init"] == "monodisperse:1"


def test_no_file_gives_defaults():
    config = load_config(None, {"command": "equilibrium", "equilibrium.mass": 0.4})
    assert config.command == "equilibrium"
    assert config.equilibrium.mass == 0.4
    assert config.equilibrium.length == 2048


def test_json_config_is_accepted(tmp_path):
    path = write(tmp_path, "run.json", json.dumps({"command": "verify", "verify": {"suite": "lemma"}}))
    config = load_config(path)
    assert config.command == "verify"
    assert config.verify.suite == "lemma"


def test_overrides_apply_and_none_is_skipped(tmp_path):
    path = write(tmp_path, "run.yaml", "simulation:\n  mass: 0.4\n  n: 128\n")
    config = load_config(path, {"simulation.mass": None, "simulation.n": 64, "output.out_dir": str(tmp_path)})
    assert config.simulation.mass == 0.4
    assert config.simulation.n == 64
    assert config.output.out_dir == str(tmp_path)


def test_apply_overrides_leaves_input_untouched():
    data   = {"simulation": {"mass": 0.3}}
    merged = apply_overrides(data, {"simulation.mass": 0.5})
    assert data["simulation"]["mass"] == 0.3
    assert merged["simulation"]["mass"] == 0.5


def test_scalars_are_coerced():
    config = build_run_config({"simulation": {"rtol": "1e-8", "n": 64.0}, "output": {"threads": "4"}})
    assert config.simulation.rtol == 1e-8
    assert config.simulation.n == 64 and isinstance(config.simulation.n, int)
    assert config.output.threads == 4


@pytest.mark.parametrize('data', [
    {"simulaton": {}},
    {"simulation": {"masses": 0.3}},
    {"command": "run"},
    {"bench": {"repetitions": 4}},
    {"bench": {"modes": ["direct", "gpu"]}},
    {"simulation": {"init": "lognormal:1"}},
    {"simulation": {"n": 1}},
    {"simulation": {"n": 2.5}},
    {"verify": {"quick": "yes"}},
    {"hj": {"form": "y"}},
    {"hj": {"grid_dz": 0.7}},
    {"equilibrium": {"method": "spectral"}},
    {"output": {"threads": 0}},
    {"simulation": []},
])
def test_invalid_configs_rejected(data):
    with pytest.raises(ConfigValidationError):
        build_run_config(data)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / "missing.yaml"))


def test_malformed_yaml(tmp_path):
    path = write(tmp_path, "bad.yaml", "simulation: [mass: 0.3\n")
    with pytest.raises(ConfigValidationError):
        load_config(path)


def test_hj_snapshot_times():
    config = build_run_config({"hj": {"t_final": 1.0, "snapshots": 4}})
    assert config.hj.snapshot_times() == pytest.approx([0.25, 0.5, 0.75])
