import json

import pytest

from sfdetrunc import config as cfgmod
from sfdetrunc.cli import main
from sfdetrunc.errors import ConfigError

ZERO = {"model": {"id": "linear_test", "a": 0.0, "sigma": 0.0}, "grid": {"k1": 8, "k": 1, "T": 1}}


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_simulate_zero_model_constant(tmp_path):
    cfg = write(tmp_path / "c.json", dict(ZERO, initial={"kind": "constant", "value": 2.5}, samples=2))
    assert main(["simulate", cfg, "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "trajectory_00001.csv").read_text().splitlines()
    assert lines[0] == "t,x_1,regime"
    assert {l.split(",")[1] for l in lines[1:]} == {"2.5"}
    assert len(lines) == 10


def test_simulate_twice_and_replay(tmp_path):
    for name in ("a", "b"):
        assert main(["simulate", "--set", "samples=2", "--out", str(tmp_path / name)]) == 0
    for f in ("trajectory_00000.csv", "trajectory_00001.csv", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["derived"]["scheme"] == "truncated-em"
    assert [s["status"] for s in manifest["samples"]] == ["ok", "ok"]
    assert main(["simulate", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "c")]) == 0
    for f in ("trajectory_00000.csv", "trajectory_00001.csv", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "c" / f).read_bytes()


def test_sample_indices_match_batch(tmp_path):
    main(["simulate", "--set", "samples=3", "--out", str(tmp_path / "a")])
    main(["simulate", "--set", "sample_indices=[2]", "--out", str(tmp_path / "b")])
    name = "trajectory_00002.csv"
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_divergent_rate_rejected(tmp_path, capsys):
    assert main(["simulate", "--set", "r=1.0", "--out", str(tmp_path)]) == 2
    assert "moment boundary" in capsys.readouterr().err
    with pytest.raises(ConfigError) as info:
        cfgmod.checked_model(cfgmod.resolve({"r": 1.0}))
    assert info.value.path == "r"


def test_schema_errors_carry_path(capsys):
    assert main(["simulate", "--set", "grid.k1=0"]) == 2
    assert "grid/k1" in capsys.readouterr().err
    assert main(["simulate", "--set", "scheme=rk4"]) == 2


def test_all_samples_blow_up(tmp_path):
    cfg = write(tmp_path / "c.json", {"model": {"id": "linear_test", "a": 10.0, "sigma": 0.0},
                                      "grid": {"k1": 4, "k": 1, "T": 4}, "guard": 100.0})
    assert main(["simulate", cfg, "--out", str(tmp_path / "o")]) == 4
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert m["samples"][0]["status"] == "blowup" and m["samples"][0]["step"] > 0


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cfgmod.OUTPUT_ROOT_ENV, str(tmp_path))
    assert main(["simulate", "--set", "output_dir=\"run1\"", "--set", "grid.T=1"]) == 0
    assert (tmp_path / "run1" / "manifest.json").exists()


def test_validate_default_passes(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "PASS fast/naive aggregate" in out


def test_validate_bad_generator(tmp_path, capsys):
    cfg = write(tmp_path / "g.json", {"regime": {"generator": [[-1.0, 1.1], [2.0, -2.0]]}})
    assert main(["validate", cfg]) == 3
    assert "NonGenerator" in capsys.readouterr().out


def test_validate_bad_mixture(tmp_path, capsys):
    mixture = {"kind": "mixture", "parts": [[0.4, {"kind": "dirac0"}], [0.5, {"kind": "exp", "rate": 1.0}]]}
    cfg = write(tmp_path / "m.json", {"model": {"id": "volatility54", "mu": mixture}})
    assert main(["validate", cfg]) == 3
    assert "FAIL measure mass" in capsys.readouterr().out


def test_set_parses_json():
    cfg = cfgmod.resolve({}, ["grid.k1=128", "study.kind=\"k\"", "seeds.master=7", "sup_error=true"])
    assert cfg["grid"]["k1"] == 128 and cfg["study"]["kind"] == "k"
    assert cfg["seeds"]["master"] == 7 and cfg["sup_error"] is True


def test_preset_values(capsys):
    assert main(["preset", "example54-k", "--print"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["study"]["k_values"] == [4, 6, 8, 10, 12] and cfg["study"]["k_ref"] == 50
    assert cfg["grid"]["k1"] == 64 and cfg["grid"]["T"] == 10
    p = cfgmod.preset("example55-dt")
    assert p["study"]["dt_values"] == [2.0 ** -e for e in range(5, 10)]
    assert p["study"]["dt_ref"] == 2.0 ** -12 and p["grid"]["k"] == 30 and p["grid"]["T"] == 10


def test_study_outputs(tmp_path):
    out = tmp_path / "s"
    args = ["study", "--set", "study={\"kind\":\"k\",\"k_values\":[2,3,4],\"k_ref\":6}",
            "--set", "grid={\"k1\":16,\"k\":6,\"T\":1}", "--set", "samples=8", "--out", str(out)]
    assert main(args) == 0
    rows = (out / "study.csv").read_text().splitlines()
    assert rows[0] == "param,mse,rmse,stderr,samples" and len(rows) == 4
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary) == {"slope", "intercept", "residual", "config"}
    assert summary["slope"] < 0
    plot = (out / "plot.gp").read_text()
    assert "'study.csv'" in plot
    quoted = {tok for tok in plot.split("'") if tok.endswith((".csv", ".dat", ".txt"))}
    assert quoted == {"study.csv"}


def test_dt_slope_band_exit(tmp_path):
    # a noiseless model converges at order one, outside the default band
    args = ["study", "--set", "model={\"id\":\"linear_test\",\"a\":-1.0,\"sigma\":0.0}",
            "--set", "study={\"kind\":\"dt\",\"dt_values\":[0.125,0.0625,0.03125],\"dt_ref\":0.0078125}",
            "--set", "grid={\"k1\":8,\"k\":2,\"T\":1}", "--set", "samples=2", "--out", str(tmp_path)]
    assert main(args) == 3
    assert main(args + ["--set", "study.slope_band=[0.5,1.5]"]) == 0


def test_study_requires_kind():
    assert main(["study"]) == 2
