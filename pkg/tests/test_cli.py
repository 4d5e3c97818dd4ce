import json
import math
from pathlib import Path

import numpy as np
import pytest

from ufqsh.cli import execute, exit_code, main, sweep
from ufqsh.config import ConfigError, config_hash, load_config, resolve
from ufqsh.protocol import CollateralViolation, IncoherentForecast, RangeViolation

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_exit_code_mapping():
    assert exit_code(None) == 0
    assert exit_code(IncoherentForecast("x", 1)) == 2
    assert exit_code(CollateralViolation("x", 1)) == 3
    assert exit_code(RangeViolation("x", 1)) == 1


def test_zero_stakes_run(tmp_path):
    assert main(["run", "--config", str(CONFIGS / "zero_stakes.yaml"), "--out", str(tmp_path)]) == 0
    data = np.genfromtxt(tmp_path / "trace.csv", delimiter=",", names=True)
    assert len(data) == 100
    assert np.all(data["K_sign"] == 1) and np.all(data["K_logmag"] == 0.0)
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["reproducibility"]["seed"] == 0
    assert rep["reproducibility"]["config_hash"] == config_hash(load_config(str(CONFIGS / "zero_stakes.yaml"),
                                                                            **{"output.dir": str(tmp_path)}))


def test_incoherent_forecast_exit_two(tmp_path):
    code = main(["run", "--config", str(CONFIGS / "incoherent.yaml"), "--out", str(tmp_path)])
    assert code == 2
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["stop"]["round"] == 1 and rep["stop"]["code"] == "INCOHERENT_FORECAST"


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("skeptic:\n  stratgy: theorem2\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 4
    bad.write_text("skeptic:\n  strategy: nonsense\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 4
    with pytest.raises(ConfigError):
        resolve({"run": {"roundz": 3}})


def test_byte_identical_replay(tmp_path):
    args = ["run", "--config", str(CONFIGS / "zero_stakes.yaml"), "--seed", "7", "--rounds", "3000"]
    cfg_over = tmp_path / "t2.yaml"
    cfg_over.write_text("skeptic:\n  strategy: theorem2\nforecaster:\n  w: 1.59577\n"
                        "reality:\n  kind: iid\nrun:\n  rounds: 3000\n")
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}"
        assert main(["run", "--config", str(cfg_over), "--seed", "7", "--out", str(out)]) == 0
        outs.append((out / "trace.csv").read_bytes())
    assert outs[0] == outs[1] and len(outs[0]) > 100_000
    assert main(args + ["--out", str(tmp_path / "z")]) == 0


def test_sweep_single_seed_equals_run():
    cfg = resolve({"skeptic": {"strategy": "theorem2"}, "forecaster": {"w": 1.59577},
                   "run": {"rounds": 2000, "seed": 3}})
    agg = sweep(cfg, [3])
    _, rep = execute(dict(cfg, **{"output.csv": False}), write=False)
    row = agg["runs"][0]
    assert row["sup_log_capital"] == rep["capital"]["sup_log_magnitude"]
    assert row["final_log_capital"] == rep["capital"]["log_magnitude"]
    assert agg["aggregate"]["sup_log_capital"] == row["sup_log_capital"]


def test_sweep_parallel_deterministic():
    cfg = resolve({"skeptic": {"strategy": "upper"}, "forecaster": {"w": 1.59577},
                   "run": {"rounds": 1000}})
    a = sweep(cfg, [1, 2, 3], jobs=1)
    b = sweep(cfg, [1, 2, 3], jobs=2)
    assert a == b


def test_empty_seed_list():
    with pytest.raises(ConfigError):
        sweep(resolve({}), [])
    assert main(["sweep", "--seeds", ",", "--out", "/tmp/ufqsh-empty-sweep"]) == 4


def test_auxiliary_commands(capsys):
    assert main(["check-coherence", "--v", "4", "--w", "7"]) == 2
    out = json.loads(capsys.readouterr().out)
    assert out["coherent"] is False and math.isclose(out["supmin_oracle"], 1.0, rel_tol=1e-6)
    assert main(["check-coherence", "--v", "1", "--w", "1"]) == 0
    capsys.readouterr()
    assert main(["validate-hedge", "--kind", "logsquare"]) == 0
    assert main(["check-constants", "--eps", "0.1"]) == 0
