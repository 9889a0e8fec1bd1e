import json
import math
import subprocess
import sys

import pytest

from ncbem.cli import RunConfig, main, seed_config
from ncbem.errors import ConfigError
from ncbem.geometry import SphereOctant, patch_to_dict


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def _sphere_cfg(density=3, **extra):
    cfg = seed_config("SingleSphere", density=density)
    cfg["outputs"] = {"report": "report.json", "vtk": "s.vtk", "csv": "s.csv"}
    cfg.update(extra)
    return cfg


def _no_timestamp(path):
    rep = json.loads(open(path).read())
    rep.pop("timestamp")
    return rep


def test_seed_scenario_prints_loadable_config(capsys):
    assert main(["--seed-scenario", "Bushing"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["mesh_variant"] == "conforming"
    assert RunConfig.from_dict(cfg).scenario["name"] == "Bushing"


def test_solve_writes_outputs(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", _sphere_cfg())
    out = tmp_path / "out"
    assert main(["solve", cfg, "--output-dir", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["capacitance"] == pytest.approx(4 * math.pi, rel=0.05)
    for name in ("report.json", "s.vtk", "s_samples.vtk", "s.csv"):
        assert (out / name).exists()
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["space"] == "p0"
    assert len(rep["samples"]) == 4


def test_solve_is_deterministic(tmp_path):
    cfg = _write(tmp_path / "c.json", _sphere_cfg())
    for d in ("a", "b"):
        assert main(["solve", cfg, "--output-dir", str(tmp_path / d)]) == 0
    assert _no_timestamp(tmp_path / "a" / "report.json") == _no_timestamp(tmp_path / "b" / "report.json")
    assert (tmp_path / "a" / "s.vtk").read_bytes() == (tmp_path / "b" / "s.vtk").read_bytes()


def test_flags_override_config(tmp_path):
    cfg = _write(tmp_path / "c.json", _sphere_cfg(density=2))
    assert main(["solve", cfg, "--output-dir", str(tmp_path), "--order", "p1",
                 "--quad-order-singular", "6"]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["config"]["space"] == "p1"
    assert rep["config"]["quadrature"]["singular"] == 6


def test_compare_against_baseline(tmp_path):
    cfg = _write(tmp_path / "c.json", _sphere_cfg(density=2))
    assert main(["solve", cfg, "--output-dir", str(tmp_path / "a")]) == 0
    assert main(["solve", cfg, "--output-dir", str(tmp_path / "b"), "--order", "p1",
                 "--compare", str(tmp_path / "a" / "report.json")]) == 0
    cmp = json.loads((tmp_path / "b" / "report.json").read_text())["comparison"]
    assert 0 <= cmp["regions"]["sphere"]["relative_difference"] < 0.05
    assert "capacitance" in cmp


def test_malformed_config_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", str(bad), "--output-dir", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config error" and err["module"] == "cli"
    assert not (tmp_path / "o").exists()
    assert main(["solve", _write(tmp_path / "c.json", {"schema": 1, "scenario": {"name": "X"}})]) == 2
    assert main(["solve", _write(tmp_path / "d.json", {"schema": 1, "bogus": 1,
                                                       "scenario": {"name": "SingleSphere"}})]) == 2
    assert main(["frobnicate"]) == 2


def test_open_geometry_exit_3(tmp_path, capsys):
    p = SphereOctant(name="lonely", group="e")
    cfg = {"schema": 1, "groups": [{"id": "e", "kind": "electrode", "voltage": 1.0}],
           "patches": [{"patch": patch_to_dict(p), "mesh": {"nu": 2, "nv": 2, "shape": "quad"}}]}
    path = _write(tmp_path / "c.json", cfg)
    assert main(["solve", path, "--output-dir", str(tmp_path / "o")]) == 3
    err = json.loads(capsys.readouterr().err)
    assert err["type"] == "NoPartner" and err["findings"]
    assert not (tmp_path / "o").exists()
    # validate reports the same problem without failing
    assert main(["validate", path]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["no_partner"] > 0


def test_validate_counts_hanging_nodes(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", seed_config("TwoSpheres", density=2))
    assert main(["validate", cfg]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["no_partner"] == 0 and out["ambiguous"] == 0
    assert out["hanging_nodes"] > 0
    assert set(out["mesh_quality"]) == {f"p{k}" for k in range(8)} | {f"m{k}" for k in range(8)}


def test_oracle_command(capsys):
    assert main(["oracle", "two_spheres", "R=1", "center_distance=3", "terms=60"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["value"] == pytest.approx(9.647017422196788, rel=1e-13)
    assert main(["oracle", "layered_capacitor"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["value"] == pytest.approx(53.85587406153932, rel=1e-13)
    assert main(["oracle", "nope"]) == 2


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"scenario": {"name": "SingleSphere"}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"schema": 1, "scenario": {"name": "SingleSphere"}, "samples": [[1, 2]]})
    cfg = RunConfig.from_dict({"schema": 1, "scenario": {"name": "SingleSphere", "density": 2},
                               "quadrature": {"singular": 0}})
    with pytest.raises(ConfigError):
        cfg.orders()
    cfg = RunConfig.from_dict({"schema": 1, "scenario": {"name": "SingleSphere"},
                               "mesh_variant": "nonconforming"})
    with pytest.raises(ConfigError):
        cfg.build_model()


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "ncbem", "oracle", "sphere", "R=2"],
                       capture_output=True, text=True, timeout=300)
    assert r.returncode == 0
    assert json.loads(r.stdout)["value"] == pytest.approx(8 * math.pi)
