import json
from pathlib import Path

import pytest

from adaptive_mpc.cli import main
from adaptive_mpc.config import ConfigError, RunConfig, config_from_dict, load_config

TINY_PSO = """
[pso]
n_gen = 1
n_pop = 3
"""


def _files(d: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_default_config_file_matches_builtin_defaults():
    import adaptive_mpc
    path = Path(adaptive_mpc.__file__).parent / "data" / "default.toml"
    assert load_config(path) == RunConfig()


def test_unknown_keys_and_bad_values_name_the_field():
    with pytest.raises(ConfigError) as e:
        config_from_dict({"mpc": {"npp": 3}})
    assert e.value.path == "mpc.npp"
    with pytest.raises(ConfigError) as e:
        config_from_dict({"mpc": {"np": 5, "nc": 9}})
    assert e.value.path == "mpc"
    with pytest.raises(ConfigError) as e:
        config_from_dict({"bogus": {}})
    assert e.value.path == "bogus"
    with pytest.raises(ConfigError):
        config_from_dict({"pso": {"lower": "x"}})


def test_seed_propagates():
    cfg = RunConfig().with_seed(7)
    assert cfg.pso.seed == cfg.nn.seed == cfg.anfis.seed == cfg.run.seed == 7
    assert cfg.digest() != RunConfig().digest()


def test_bad_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[mpc]\nq = -1.0\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "mpc" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.toml")]) == 2


def test_simulate_regulation(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["simulate", "--scenario", "regulation-zero", "--out", str(out)]) == 0
    summary = json.loads((out / "regulation-zero-fixed-summary.json").read_text())
    assert summary["mse"] < 1e-6 and summary["adapter_latency_us"] is None
    manifest = json.loads((out / "manifest-simulate.json").read_text())
    assert manifest["seed"] == 0 and len(manifest["config_sha256"]) == 64
    assert "regulation-zero-fixed.csv" in manifest["outputs"]


def test_missing_model_file_exits_2(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    rc = main(["simulate", "--mode", "nn-adaptive", "--model", str(missing), "--out", str(tmp_path)])
    assert rc == 2
    assert str(missing) in capsys.readouterr().err


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("ADAPTIVE_MPC_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["simulate", "--scenario", "regulation-zero"]) == 0
    assert (tmp_path / "env" / "regulation-zero-fixed.csv").is_file()


def test_tune_and_dataset_are_reproducible(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(TINY_PSO)
    for run in ("a", "b"):
        assert main(["tune", "--config", str(cfg), "--vx", "15", "--y-ref", "2", "--seed", "3",
                     "--out", str(tmp_path / run)]) == 0
        assert main(["dataset", "--config", str(cfg), "--grid", "1", "1", "1", "2", "--seed", "3",
                     "--out", str(tmp_path / run)]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")
    rows = (tmp_path / "a" / "dataset.csv").read_text().splitlines()
    assert len(rows) == 3


def test_tune_rejects_out_of_range_condition(tmp_path):
    assert main(["tune", "--vx", "50", "--y-ref", "1", "--out", str(tmp_path)]) == 2


def test_train_and_evaluate(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[nn]\nepochs = 30\n[anfis]\nepochs = 3\n")
    out = str(tmp_path / "o")
    assert main(["train-nn", "--config", str(cfg), "--out", out]) == 0
    assert main(["train-anfis", "--config", str(cfg), "--out", out]) == 0
    for kind in ("nn", "anfis"):
        model = str(tmp_path / "o" / f"{kind}_model.json")
        assert main(["evaluate", "--adapter", kind, "--model", model, "--out", out]) == 0
        res = json.loads((tmp_path / "o" / f"evaluate-{kind}.json").read_text())
        assert res["points"] == 50
    assert (tmp_path / "o" / "nn_loss.csv").read_text().startswith("epoch,np,nc,q,r")


def test_runtime_failure_exits_1(tmp_path, capsys):
    bad = tmp_path / "m.json"
    bad.write_text("{not json")
    # unreadable model is a user error, a corrupt dataset is a runtime one
    assert main(["simulate", "--mode", "anfis-adaptive", "--model", str(bad), "--out", str(tmp_path)]) == 2
    ds = tmp_path / "d.csv"
    ds.write_text("vx,wind,mu,y_ref,np,nc,q,r,mse\n1,2,3\n")
    assert main(["train-nn", "--dataset", str(ds), "--out", str(tmp_path)]) == 1
