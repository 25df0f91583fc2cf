import json

import pytest

from spinbroadcast.cli import main


def _run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def test_oracle_check_example(tmp_path):
    code, out = _run(tmp_path, "run", "--scenario", "oracle_check", "--seed", "7", "--check")
    assert code == 0
    report = json.loads((out / "oracle_check.json").read_text())
    assert report["K"] == 1 and report["N"] == 6
    assert report["max_error"] < 1e-10
    meta = json.loads((out / "oracle_check.meta.json").read_text())
    assert meta["config"]["seed"] == 7 and "created" in meta


def test_dfs_scan_finds_moment_pair(tmp_path):
    code, out = _run(tmp_path, "run", "--scenario", "dfs_scan", "--check")
    assert code == 0
    report = json.loads((out / "dfs_scan.json").read_text())
    assert any(p["e1"] == "+---++-" and p["e2"] == "-++---+" for p in report["pairs"])


def test_empty_config_is_usage_error(tmp_path, capsys):
    cfg = tmp_path / "empty.json"
    cfg.write_text("")
    assert main(["run", "--config", str(cfg)]) == 2
    assert main(["run"]) == 2
    assert main([]) == 2


def test_parse_error_reports_position(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"scenario":\n  "dfs_scan",, }')
    assert main(["run", "--config", str(cfg)]) == 2
    assert "bad.json:2:" in capsys.readouterr().err


def test_unknown_field_rejected(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "dfs_scan", "colour": 1}))
    assert main(["run", "--config", str(cfg)]) == 2


def test_resource_cap_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "dfs_scan", "inputs": {"geometry": "collective", "K": 25, "N": 2}}))
    code, _ = _run(tmp_path, "run", "--config", str(cfg))
    assert code == 3


def test_invariant_violation_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    # a tolerance this loose declares non-kernel pairs DFS/OFS; the check must catch it
    cfg.write_text(json.dumps({"scenario": "dfs_scan", "inputs": {"geometry": "collective", "K": 2, "N": 3, "tol": 10.0, "mac_sizes": [1]}}))
    code, _ = _run(tmp_path, "run", "--config", str(cfg), "--check")
    assert code == 1


def test_config_overrides_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "factors_sweep", "seed": 5, "inputs": {"samples": 11}}))
    code, out = _run(tmp_path, "factors_sweep", "--config", str(cfg), "--seed", "9", "--samples", "50")
    assert code == 0
    meta = json.loads((out / "factors_sweep.meta.json").read_text())
    assert meta["config"]["seed"] == 5
    assert len((out / "factors_sweep.csv").read_text().splitlines()) == 12


def test_subcommand_conflict(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "dfs_scan"}))
    assert main(["factors_sweep", "--config", str(cfg)]) == 2


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SPINBROADCAST_OUT", str(tmp_path / "env"))
    assert main(["geometry_gen", "--check"]) == 0
    assert (tmp_path / "env" / "geometry_gen.csv").exists()


@pytest.mark.parametrize(
    "scenario,extra",
    [
        ("factors_sweep", []),
        ("lln_ensemble", ["--samples", "40"]),
        ("time_average", ["--samples", "2"]),
        ("geometry_gen", []),
        ("sbs_bound_check", ["--samples", "2"]),
    ],
)
def test_scenarios_are_deterministic(tmp_path, scenario, extra):
    c1, a = _run(tmp_path, scenario, "--seed", "3", "--check", *extra, name="a")
    c2, b = _run(tmp_path, scenario, "--seed", "3", "--check", "--threads", "3", *extra, name="b")
    assert c1 == c2 == 0
    for f in a.iterdir():
        if not f.name.endswith(".meta.json"):
            assert f.read_bytes() == (b / f.name).read_bytes()
