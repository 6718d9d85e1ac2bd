import json

import numpy as np
import pytest

from percomp.cli import read_fields, run
from percomp.model import ModelError
from percomp.scenario import ScenarioError, default_scenario, load_scenario, parse_scenario

MINIMAL = """
[scenario]
L = 1.0
"""


def test_minimal_scenario_gets_defaults():
    sc = parse_scenario(MINIMAL)
    assert sc.params.d == 1.0 and sc.params.alpha == 1.0 and sc.params.k == 100.0
    assert sc.spec.mu1.const == 1.0 and sc.spec.nu2.const == 1.0
    assert sc.n == 256 and sc.seed == 0


def test_negative_nu_names_h3():
    with pytest.raises(ModelError, match=r"\(H3\)"):
        parse_scenario(MINIMAL + "[scenario.nu1]\nconst = -1.0\n")


def test_unknown_keys_rejected():
    with pytest.raises(ScenarioError, match="unknown"):
        parse_scenario(MINIMAL + "colour = 3\n")
    with pytest.raises(ScenarioError, match="unknown"):
        parse_scenario(MINIMAL + "[scenario.mu1]\nconst = 1.0\ntan = [0.1]\n")
    with pytest.raises(ScenarioError, match="unknown"):
        parse_scenario(MINIMAL + "[plot]\nx = 1\n")


def test_parse_error_has_position():
    with pytest.raises(ScenarioError) as info:
        parse_scenario("[scenario]\nL = = 1\n")
    assert info.value.line == 2 and info.value.column is not None


def test_type_errors():
    with pytest.raises(ScenarioError):
        parse_scenario("[scenario]\nL = \"one\"\n")
    with pytest.raises(ScenarioError):
        parse_scenario(MINIMAL + "[grid]\nn = 1.5\n")


def test_canonical_round_trip(tmp_path):
    sc = default_scenario()
    text = sc.dumps()
    path = tmp_path / "s.toml"
    path.write_text(text)
    again = load_scenario(path)
    assert again == sc
    assert again.dumps() == text
    assert again.digest() == sc.digest()


def test_missing_file():
    with pytest.raises(ScenarioError):
        load_scenario("/nonexistent/scenario.toml")


def _out_dir(tmp_path, command):
    sc = default_scenario()
    return tmp_path / f"{sc.name}-{sc.digest()}" / command


def test_check_command(tmp_path, capsys):
    assert run(["check", "--out", str(tmp_path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["hfreq_ok"] and report["hfreq_margin"] > 0
    d = _out_dir(tmp_path, "check")
    manifest = json.loads((d / "manifest.json").read_text())
    assert manifest["scenario_hash"] == default_scenario().digest()
    assert json.loads((d / "hypotheses.json").read_text())["manifest"] == "manifest.json"


def test_bad_scenario_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(MINIMAL + "[scenario.nu1]\nconst = -1.0\n")
    assert run(["check", "--scenario", str(bad), "--out", str(tmp_path)]) == 1
    assert "(H3)" in capsys.readouterr().err


def test_extinction_csv_has_headers_and_units(tmp_path):
    assert run(["extinction", "--out", str(tmp_path), "--grid", "64"]) == 0
    sc = default_scenario().with_overrides(n=64)
    path = tmp_path / f"{sc.name}-{sc.digest()}" / "extinction" / "extinction_u1.csv"
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# manifest=manifest.json") and "x[length]" in lines[0]
    assert lines[1] == "x,u"
    data = read_fields(path, ("x", "u"))
    assert data.shape == (64, 2) and np.all(data[:, 1] > 0)


def test_front_short_horizon_exit_two(tmp_path):
    code = run(["front", "--out", str(tmp_path), "--grid", "16", "--t-end", "1"])
    assert code == 2


def test_sweep_one_row_per_k(tmp_path):
    assert run(["sweep", "--out", str(tmp_path), "--grid", "32", "--k-values", "10", "100"]) == 0
    sc = default_scenario().with_overrides(n=32)
    d = tmp_path / f"{sc.name}-{sc.digest()}" / "sweep"
    rows = [ln for ln in (d / "sweep.csv").read_text().splitlines() if not ln.startswith("#")]
    assert rows[0].startswith("k,") and len(rows) == 3
    assert "empirical_k_star" in json.loads((d / "sweep_verdicts.json").read_text())["data"]


def test_artifacts_deterministic(tmp_path):
    args = ["coexist", "--grid", "32", "--seeds", "4"]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b")]) == 0
    sc = default_scenario().with_overrides(n=32)
    sub = f"{sc.name}-{sc.digest()}/coexist"
    files = sorted(p.name for p in (tmp_path / "a" / sub).iterdir() if p.name != "manifest.json")
    assert "coexist.json" in files and "state_0.csv" in files
    for name in files:
        assert (tmp_path / "a" / sub / name).read_bytes() == (tmp_path / "b" / sub / name).read_bytes()


def test_simulate_from_file_and_segregate(tmp_path):
    assert run(["coexist", "--grid", "32", "--seeds", "2", "--out", str(tmp_path)]) == 0
    sc = default_scenario().with_overrides(n=32)
    base = tmp_path / f"{sc.name}-{sc.digest()}"
    ic = base / "coexist" / "state_0.csv"
    assert run(["simulate", "--grid", "32", "--ic", "file", "--ic-file", str(ic),
                "--t-end", "0.01", "--out", str(tmp_path)]) == 0
    traj = read_fields(base / "simulate" / "trajectory.csv", ("t", "x", "u1", "u2"))
    assert traj.shape[1] == 4 and traj[-1, 0] == pytest.approx(0.01)
    assert run(["segregate", "--grid", "32", "--n-random", "4", "--out", str(tmp_path)]) == 0
    seg = json.loads((base / "segregate" / "segregate.json").read_text())["data"]
    assert [e["classification"] for e in seg["gamma"]] == ["trivial"]


def test_eigen_command(tmp_path, capsys):
    assert run(["eigen", "--grid", "64", "--species", "1", "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) >= {"lambda", "residual", "n", "refinement_estimate"}
    assert -1.3 < out["lambda"] < -0.7


def test_bad_usage_is_an_error_not_inconclusive(tmp_path):
    assert run(["sweep", "--out", str(tmp_path), "--k-values", "10,100"]) == 1
    assert run(["nonsense"]) == 1
    assert run(["--version"]) == 0
