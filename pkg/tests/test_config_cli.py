import json

import numpy as np
import pytest
import yaml

from shadowlab.cli import SCHEMA_VERSION, main
from shadowlab.config import ConfigError, ExperimentConfig, inhomogeneity_along

BASE_CFG = {"flow": "plane-shear", "base_point": [0.3, 0.0], "N": 2, "seed": 5,
            "t_uniform": 12, "s_uniform": 6, "ub_points_per_axis": 3}


def write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def test_round_trip(tmp_path):
    cfg = ExperimentConfig.from_dict(dict(BASE_CFG, d_ladder=[0.01, 0.005]))
    again = ExperimentConfig.from_dict(yaml.safe_load(cfg.dumps()))
    assert again == cfg
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.load(p) == cfg


@pytest.mark.parametrize("patch,field", [
    ({"flow": "nope"}, "flow"),
    ({"kappa": 3}, "kappa"),
    ({"d": 0.5}, "d"),
    ({"N_list": [10, 5]}, "N_list"),
    ({"inhomogeneity": "wild"}, "inhomogeneity"),
    ({"bogus": 1}, "bogus"),
    ({"N": 0}, "N"),
])
def test_validation_names_field(patch, field):
    with pytest.raises(ConfigError, match=f"^{field}"):
        ExperimentConfig.from_dict(dict(BASE_CFG, **patch))


def test_seed_requirements():
    cfg = ExperimentConfig.from_dict(dict(BASE_CFG, seed=None))
    with pytest.raises(ConfigError, match="^seed"):
        cfg.require_seed("defect")
    cfg.require_seed("orbit")
    with pytest.raises(ConfigError):
        inhomogeneity_along(cfg.engine(), cfg.base_point, 2, "random")


def test_inline_field(tmp_path):
    flow = {"name": "shear2", "space": "euclidean", "dim": 2,
            "expressions": ["1", "-tanh(y)"], "variables": ["x", "y"]}
    cfg = ExperimentConfig.from_dict(dict(BASE_CFG, flow=flow))
    eng = cfg.engine()
    assert np.allclose(eng.field.eval(np.array([0.0, 1.0])), [1.0, -np.tanh(1.0)])
    with pytest.raises(ConfigError, match="^base_point"):
        ExperimentConfig.from_dict(dict(BASE_CFG, flow=flow, base_point=[0.0])).engine()


def run(tmp_path, cmd, data, capsys, *extra):
    out = tmp_path / cmd
    rc = main([cmd, "--config", str(write(tmp_path, data)), "--out", str(out), *extra])
    return rc, out, capsys.readouterr()


def test_orbit_command(tmp_path, capsys):
    rc, out, _ = run(tmp_path, "orbit", BASE_CFG, capsys)
    assert rc == 0
    doc = json.loads((out / "orbit.json").read_text())
    assert doc["schema_version"] == SCHEMA_VERSION and len(doc["frames"]) == 5


def test_defect_command_is_deterministic(tmp_path, capsys):
    data = dict(BASE_CFG, d_ladder=[0.01, 0.005])
    rc, out, _ = run(tmp_path, "defect", data, capsys)
    assert rc == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert set(first) == {"defect.json", "defect_0.csv", "defect_1.csv"}
    assert first["defect_0.csv"].startswith(b"t,s,case,delta,bound\n")
    doc = json.loads(first["defect.json"])
    assert all(r["bound_violations"] == 0 for r in doc["reports"]) and "fit" in doc
    rc, out, _ = run(tmp_path, "defect", data, capsys)
    assert {p.name: p.read_bytes() for p in out.iterdir()} == first


def test_probe_command(tmp_path, capsys):
    rc, out, res = run(tmp_path, "probe", dict(BASE_CFG, N_list=[5, 10, 20]), capsys)
    assert rc == 0 and json.loads(res.out)["verdict"] == "bounded"
    assert (out / "growth.csv").read_text().startswith("N,trial,sup_norm\n")


def test_replay_command(tmp_path, capsys):
    rc, out, _ = run(tmp_path, "replay", dict(BASE_CFG, L_sweep=[4.0]), capsys)
    assert rc == 0
    doc = json.loads((out / "replay.json").read_text())
    e = doc["entries"][0]
    assert e["status"] == "found" and e["replay"]["residual"] <= 1e-9


def test_exit_codes(tmp_path, capsys):
    rc, _, res = run(tmp_path, "probe", BASE_CFG, capsys)  # no N_list
    assert rc == 2 and "N_list" in res.err
    rc, _, res = run(tmp_path, "defect", dict(BASE_CFG, seed=None), capsys)
    assert rc == 2
    rc, _, res = run(tmp_path, "defect", dict(BASE_CFG, flow="torus-ms", base_point=[0.1, 0.0], N=5), capsys)
    assert rc == 1 and "chart bound" in res.err
    rc, _, _ = run(tmp_path, "orbit", BASE_CFG, capsys, "--seed", "9")
    assert rc == 0
