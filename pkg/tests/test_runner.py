import csv
import dataclasses
import json
import math
from pathlib import Path

import pytest

from edgecache.coded_caching import resource_blocks
from edgecache.popularity import parse_size
from edgecache.runner import (
    SCENARIOS,
    ConfigReadError,
    ScenarioRuntimeError,
    ValidationError,
    parse_axis,
    run_scenario,
    validate_config,
)
from edgecache.runner.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("text,expected", [
    ("1:5:1", [1, 2, 3, 4, 5]),
    ("0.1:0.3:0.1", [0.1, 0.2, 0.3]),
    ("2:2:1", [2]),
    ([1, 3], [1, 3]),
    (7, [7]),
])
def test_parse_axis(text, expected):
    assert parse_axis(text) == expected


@pytest.mark.parametrize("bad", ["5:1:1", "1:5:0", "a:b:c"])
def test_parse_axis_rejects(bad):
    with pytest.raises(ValueError):
        parse_axis(bad)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    assert validate_config(path) == []


def test_every_scenario_has_a_sample_config():
    assert {p.stem for p in CONFIGS.glob("*.toml")} == set(SCENARIOS)


def test_coded_scaling_matches_formula(tmp_path):
    table = run_scenario(CONFIGS / "coded_scaling.toml", tmp_path)
    rows = read_rows(tmp_path / "coded_scaling.csv")
    assert len(rows) == len(table.rows) == 100
    assert list(rows[0]) == ["K", "m", "resource_blocks", "unicast", "scheme_load"]
    for r in rows:
        K = int(r["K"])
        assert float(r["resource_blocks"]) == resource_blocks(K, 0.3)
        assert abs(float(r["resource_blocks"]) - K * 0.7 / (1 + 0.3 * K)) <= 1e-12
        assert float(r["unicast"]) == K
    meta = json.loads((tmp_path / "coded_scaling.meta.json").read_text())
    assert meta["scenario"] == "coded_scaling" and meta["replication_seeds"] == [0]
    assert "wall_clock_seconds" in meta and "toolkit_version" in meta


def test_coded_scaling_scheme_check(tmp_path):
    cfg = write(tmp_path, 'scenario = "coded_scaling"\n[params]\nm = 0.5\nscheme_check = true\n'
                          'memory_share = false\nfile_bytes = 60\n[sweep]\nK = [2, 4, 6]\n')
    run_scenario(cfg, tmp_path)
    for r in read_rows(tmp_path / "coded_scaling.csv"):
        assert float(r["scheme_load"]) == float(r["resource_blocks"])


def test_cache_sizing_cells(tmp_path):
    run_scenario(CONFIGS / "cache_sizing.toml", tmp_path)
    rows = read_rows(tmp_path / "cache_sizing.csv")
    assert len(rows) == 9
    for r in rows:
        expected = min(1.0, parse_size(r["memory_bytes"]) / parse_size(r["catalog_bytes"]))
        assert float(r["normalized_ratio"]) == expected
        assert float(r["percent"]) == pytest.approx(100 * expected)


def test_replications_zero_writes_nothing(tmp_path):
    cfg = write(tmp_path, 'scenario = "irm_vs_snm"\nreplications = 0\n')
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == 2
    assert not out.exists()
    with pytest.raises(ValidationError) as exc:
        run_scenario(cfg, out)
    assert any(v.startswith("replications") for v in exc.value.violations)


def test_non_integer_t_violation(tmp_path, capsys):
    cfg = write(tmp_path, 'scenario = "coded_scaling"\n[params]\nm = 0.3\nmemory_share = false\n[sweep]\nK = [1, 10]\n')
    violations = validate_config(cfg)
    assert len(violations) == 1 and "t = K*m" in violations[0] and "K = [1]" in violations[0]
    assert main(["validate", str(cfg)]) == 2
    assert "t = K*m" in capsys.readouterr().err


def test_negative_alpha_violation(tmp_path):
    cfg = write(tmp_path, 'scenario = "ppp_deployment"\n[sweep]\nalpha = [0.8, -1]\n')
    (v,) = validate_config(cfg)
    assert v.startswith("sweep.alpha") and "-1" in v


@pytest.mark.parametrize("text,field", [
    ('scenario = "nope"\n', "scenario"),
    ('scenario = "coded_scaling"\n[params]\nbogus = 1\n', "params.bogus"),
    ('scenario = "coded_scaling"\n[sweep]\nZ = [1]\n', "sweep.Z"),
    ('scenario = "coded_scaling"\n[params]\nm = 1.5\n', "params.m"),
    ('scenario = "coded_scaling"\nbase_seed = -3\n', "base_seed"),
    ('scenario = "cooperative_gain"\n[sweep]\ncapacity = [2.5]\n', "sweep.capacity"),
])
def test_field_level_messages(tmp_path, text, field):
    violations = validate_config(write(tmp_path, text))
    assert violations and violations[0].startswith(field)


def test_unreadable_config(tmp_path, capsys):
    with pytest.raises(ConfigReadError):
        validate_config(tmp_path / "missing.toml")
    with pytest.raises(OSError):
        validate_config(tmp_path / "missing.toml")
    assert main(["validate", str(tmp_path / "missing.toml")]) == 2


def test_malformed_toml(tmp_path):
    assert main(["validate", str(write(tmp_path, "scenario = \n"))]) == 2


def test_validate_never_simulates(tmp_path, monkeypatch):
    def boom(*a):
        raise AssertionError("simulated during validation")

    scen = SCENARIOS["irm_vs_snm"]
    monkeypatch.setitem(SCENARIOS, "irm_vs_snm", dataclasses.replace(scen, point=boom))
    assert validate_config(CONFIGS / "irm_vs_snm.toml") == []


def test_runtime_failure_keeps_partial(tmp_path, monkeypatch, capsys):
    scen = SCENARIOS["coded_scaling"]

    def flaky(params, pt, seed):
        if pt["K"] == 4:
            raise RuntimeError("injected failure")
        return scen.point(params, pt, seed)

    monkeypatch.setitem(SCENARIOS, "coded_scaling", dataclasses.replace(scen, point=flaky))
    cfg = write(tmp_path, 'scenario = "coded_scaling"\n[sweep]\nK = "1:6:1"\n')
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == 3
    assert "injected failure" in capsys.readouterr().err
    assert not (out / "coded_scaling.csv").exists()
    partial = read_rows(out / "coded_scaling.csv.partial")
    assert [r["K"] for r in partial] == ["1", "2", "3"]
    with pytest.raises(ScenarioRuntimeError) as exc:
        run_scenario(cfg, out)
    assert exc.value.partial_path == out / "coded_scaling.csv.partial"


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("EDGECACHE_OUT", str(tmp_path / "envout"))
    assert main(["run", str(CONFIGS / "cache_sizing.toml")]) == 0
    assert (tmp_path / "envout" / "cache_sizing.csv").exists()


def test_list_and_describe(capsys):
    assert main(["list-scenarios"]) == 0
    listed = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
    assert listed == list(SCENARIOS)
    assert main(["describe", "nope"]) == 2


@pytest.mark.parametrize("name", list(SCENARIOS))
def test_describe_matches_runtime_schema(name, capsys):
    assert main(["describe", name]) == 0
    text = capsys.readouterr().out
    scen = SCENARIOS[name]
    cols = text.split("output columns (in order):\n")[1].split("stochastic:")[0].split()
    assert cols == [c for c, _ in scen.columns]
    for axis in scen.axes:
        assert f"\n  {axis} = " in text
    for param in scen.params:
        assert f"\n  {param} = " in text


def small_config(tmp_path, name):
    texts = {
        "irm_vs_snm": 'scenario = "irm_vs_snm"\nreplications = 3\n[params]\nhorizon_days = 6.0\n[sweep]\nM = [10, 40]\n',
        "global_vs_local": 'scenario = "global_vs_local"\nreplications = 3\n[params]\nhorizon_days = 8.0\n[sweep]\nL = [2, 5]\n',
        "ppp_deployment": 'scenario = "ppp_deployment"\nreplications = 3\n[params]\nnum_trials = 300\nN = 100\n'
                          '[sweep]\nlambda_b = [5e-5]\nM = [0, 10]\nalpha = [0.8]\ntheta = [1.0]\n',
        "cooperative_gain": 'scenario = "cooperative_gain"\nreplications = 3\n[params]\nnum_users = 40\nN = 50\n'
                            'num_caches = 8\n[sweep]\nradius = [0.3]\ncapacity = [2, 4]\n',
        "coded_scaling": 'scenario = "coded_scaling"\nreplications = 2\n[sweep]\nK = "1:20:1"\n',
        "cache_sizing": 'scenario = "cache_sizing"\nreplications = 2\n',
    }
    return write(tmp_path, texts[name], f"{name}.toml")


@pytest.mark.parametrize("name", list(SCENARIOS))
def test_rerun_is_byte_identical(tmp_path, name):
    cfg = small_config(tmp_path, name)
    run_scenario(cfg, tmp_path / "a")
    run_scenario(cfg, tmp_path / "b")
    a = (tmp_path / "a" / f"{name}.csv").read_bytes()
    assert a == (tmp_path / "b" / f"{name}.csv").read_bytes()
    ma = json.loads((tmp_path / "a" / f"{name}.meta.json").read_text())
    mb = json.loads((tmp_path / "b" / f"{name}.meta.json").read_text())
    ma.pop("wall_clock_seconds"), mb.pop("wall_clock_seconds")
    assert ma == mb


@pytest.mark.parametrize("name", ["ppp_deployment", "cooperative_gain", "irm_vs_snm"])
def test_parallel_equals_sequential(tmp_path, name):
    cfg = small_config(tmp_path, name)
    run_scenario(cfg, tmp_path / "seq", jobs=1)
    assert main(["run", str(cfg), "--out", str(tmp_path / "par"), "--jobs", "3"]) == 0
    assert (tmp_path / "seq" / f"{name}.csv").read_bytes() == (tmp_path / "par" / f"{name}.csv").read_bytes()


def test_seed_override_changes_results(tmp_path):
    cfg = small_config(tmp_path, "ppp_deployment")
    run_scenario(cfg, tmp_path / "a")
    run_scenario(cfg, tmp_path / "b", seed=99)
    meta = json.loads((tmp_path / "b" / "ppp_deployment.meta.json").read_text())
    assert meta["replication_seeds"] == [99, 100, 101]
    assert (tmp_path / "a" / "ppp_deployment.csv").read_bytes() != (tmp_path / "b" / "ppp_deployment.csv").read_bytes()


def test_replication_stderr_columns(tmp_path):
    cfg = small_config(tmp_path, "cooperative_gain")
    run_scenario(cfg, tmp_path)
    for r in read_rows(tmp_path / "cooperative_gain.csv"):
        assert r["replications"] == "3"
        assert math.isfinite(float(r["objective_stderr"]))
