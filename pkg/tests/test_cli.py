import hashlib
import json
import subprocess
import sys
import time

import numpy as np
import pandas as pd
import pytest

from sipvol import io
from sipvol.cli import main
from sipvol.simulate import DgpParams


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def sim_dir(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--days", "30", "--ticks", "400", "--grid", "26", "--seed", "5",
                 "--out-dir", str(out)]) == 0
    return out


def test_simulate_smoke_under_five_seconds(tmp_path):
    start = time.perf_counter()
    assert main(["simulate", "--days", "5", "--ticks", "500", "--out-dir", str(tmp_path)]) == 0
    assert time.perf_counter() - start < 5
    assert sorted(p.name for p in tmp_path.iterdir()) == ["params.json", "ticks.csv", "true_vol.csv"]
    ticks = pd.read_csv(tmp_path / "ticks.csv")
    assert list(ticks.columns) == ["day", "s", "t", "y"]
    assert len(ticks) == 5 * 501
    assert io.read_volmatrix(tmp_path / "true_vol.csv")[0].shape == (5, 78)


def test_simulate_records_defaults_and_seed(tmp_path):
    main(["simulate", "--days", "2", "--ticks", "200", "--seed", "9", "--out-dir", str(tmp_path)])
    meta = json.loads((tmp_path / "params.json").read_text())
    assert meta["seed"] == 9
    defaults = DgpParams().to_dict()
    for key in ("mu", "gamma0", "gamma1", "b0", "b1", "b2", "b3", "noise_sd", "jump_intensity"):
        assert meta["dgp"][key] == defaults[key]


def test_simulate_is_deterministic(tmp_path):
    for name in ("a", "b"):
        main(["simulate", "--days", "3", "--ticks", "300", "--seed", "1", "--out-dir", str(tmp_path / name)])
    for f in ("ticks.csv", "true_vol.csv", "params.json"):
        assert sha(tmp_path / "a" / f) == sha(tmp_path / "b" / f)
    main(["simulate", "--days", "3", "--ticks", "300", "--seed", "2", "--out-dir", str(tmp_path / "c")])
    assert sha(tmp_path / "a" / "ticks.csv") != sha(tmp_path / "c" / "ticks.csv")


def test_spot_writes_matrix_and_diagnostics(sim_dir):
    assert main(["spot", "--out-dir", str(sim_dir)]) == 0
    data, grid, _ = io.read_volmatrix(sim_dir / "volmatrix.csv")
    assert data.shape == (30, 26)  # grid size taken from the simulation sidecar
    diag = json.loads((sim_dir / "spot_diagnostics.json").read_text())
    assert len(diag["days"]) == 30
    assert {"k_m", "bpv", "nu", "truncated", "negatives"} <= set(diag["days"][0])
    first = sha(sim_dir / "volmatrix.csv")
    assert main(["spot", "--out-dir", str(sim_dir), "--threads", "2"]) == 0
    assert sha(sim_dir / "volmatrix.csv") == first


def test_spot_default_grid_is_78(tmp_path):
    y = np.random.default_rng(0).normal(size=(2, 781)).cumsum(axis=1) * 1e-3
    io.write_ticks(tmp_path / "ticks.csv", y)
    assert main(["spot", "--out-dir", str(tmp_path)]) == 0
    assert io.read_volmatrix(tmp_path / "volmatrix.csv")[0].shape == (2, 78)


def test_predict_methods_and_rank_policy(sim_dir):
    main(["spot", "--out-dir", str(sim_dir)])
    assert main(["predict", "--out-dir", str(sim_dir), "--omega", "0.5"]) == 0
    out = json.loads((sim_dir / "predictions.json").read_text())
    assert [p["method"] for p in out["predictions"]] == ["sip", "ave", "ar1", "pc", "har_d"]
    assert out["rank_policy"] == {"mode": "ratio", "r": 1, "r_max": 10}
    assert out["n1"] == 13
    assert all(len(p["values"]) == 13 for p in out["predictions"])
    assert main(["predict", "--out-dir", str(sim_dir), "--methods", "sip", "--rank", "2"]) == 0
    out = json.loads((sim_dir / "predictions.json").read_text())
    assert out["predictions"][0]["rank"] == 2


def test_predict_unknown_method_is_usage_error(sim_dir):
    main(["spot", "--out-dir", str(sim_dir)])
    assert main(["predict", "--out-dir", str(sim_dir), "--methods", "sip,xgboost"]) == 2


def test_predict_numerical_error_exit_code(tmp_path):
    A = np.ones((5, 6))
    A[:-1, :3] = 0.0
    io.write_volmatrix(tmp_path / "volmatrix.csv", A)
    assert main(["predict", "--out-dir", str(tmp_path), "--methods", "sip", "--rank", "1"]) == 4


def test_data_and_usage_exit_codes(tmp_path, capsys):
    assert main(["spot", "--out-dir", str(tmp_path)]) == 3
    (tmp_path / "ticks.csv").write_text("day,s,t\n0,0,0\n")
    assert main(["spot", "--out-dir", str(tmp_path)]) == 3
    assert main(["simulate", "--days", "0", "--out-dir", str(tmp_path)]) == 2
    assert main(["simulate", "--set", "dgp.m=abc", "--out-dir", str(tmp_path)]) == 2
    assert main(["simulate", "--set", "nodot", "--out-dir", str(tmp_path)]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.ini")]) == 2
    capsys.readouterr()


def test_config_file_and_env(tmp_path, monkeypatch):
    ini = tmp_path / "run.ini"
    ini.write_text("[dgp]\nD_total = 2\nm = 150\nn = 10\n[run]\nseed = 4\n")
    monkeypatch.setenv("SIPVOL_OUT_DIR", str(tmp_path / "env_out"))
    assert main(["simulate", "--config", str(ini)]) == 0
    meta = json.loads((tmp_path / "env_out" / "params.json").read_text())
    assert (meta["dgp"]["D_total"], meta["dgp"]["m"], meta["seed"]) == (2, 150, 4)
    assert main(["simulate", "--config", str(ini), "--set", "dgp.D_total=3"]) == 0
    meta = json.loads((tmp_path / "env_out" / "params.json").read_text())
    assert meta["dgp"]["D_total"] == 3


def test_backtest_montecarlo_grid(tmp_path):
    args = ["backtest", "--out-dir", str(tmp_path), "--reps", "2", "--ticks", "300", "--grid", "26",
            "--D-grid", "30,40", "--omega-grid", "0.1,0.5", "--set", "run.plot_D=30",
            "--methods", "sip,ave,ar1,pc"]
    assert main(args) == 0
    grid = pd.read_csv(tmp_path / "mspe_grid.csv")
    assert list(grid.columns[:6]) == ["method", "metric", "omega", "D", "value", "p_adj"]
    assert len(grid) == 4 * 2 * 2
    assert not grid.duplicated(["method", "D", "omega"]).any()
    vs_d = pd.read_csv(tmp_path / "mspe_vs_D.csv")
    assert set(vs_d["omega"]) == {0.1, 0.5}
    vs_omega = pd.read_csv(tmp_path / "mspe_vs_omega.csv")
    assert set(vs_omega["D"]) == {30}
    first = sha(tmp_path / "mspe_grid.csv")
    assert main(args + ["--threads", "2"]) == 0
    assert sha(tmp_path / "mspe_grid.csv") == first


def test_backtest_rolling(sim_dir):
    main(["spot", "--out-dir", str(sim_dir)])
    assert main(["backtest", "--mode", "rolling", "--out-dir", str(sim_dir), "--window", "25",
                 "--methods", "sip,ave,ar1"]) == 0
    report = json.loads((sim_dir / "report.json").read_text())
    assert report["window"] == 25
    assert {r["method"] for r in report["dm"]} == {"ave", "ar1"}
    tables = pd.read_csv(sim_dir / "report_tables.csv")
    assert list(tables.columns) == ["method", "metric", "omega", "D", "value", "p_adj"]


def test_console_script_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "sipvol.cli", "simulate", "--days", "1", "--ticks", "100",
         "--grid", "10", "--out-dir", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr
    res = subprocess.run([sys.executable, "-m", "sipvol.cli", "predict", "--methods", "nope",
                          "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 2
