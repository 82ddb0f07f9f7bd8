import json

import pytest
import yaml

from claimsbacklog.cli import EXIT_CONFIG, EXIT_MISSING, EXIT_OK, EXIT_VALIDATION, main
from claimsbacklog.config import ExperimentConfig, load_config

SMALL = {
    "model": {"alphas": [1.2, 0.8], "beta": 0.2},
    "simulation": {"horizon": 12, "replicates": 200, "burn_in": 100, "max_lag": 5},
    "estimation": {"T": 8, "n": 300, "eta_min": 1.2, "eta_max": 1.4, "eta_step": 0.1, "b_grid": [0, 20], "m_max": 2},
    "training": {"samples": 40, "paths_per_sample": 2, "b_max": 60, "m_max": 4, "hidden": 4, "epochs": 2,
                 "warmup_epochs": 1, "warmup_T": 3},
    "cost": {"horizons": [4, 6], "R_tau": 15, "bracket": [1.1, 1.5], "grid_step": 0.1, "n": 300, "T": 30},
}


@pytest.fixture
def conf(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return str(path)


def run(conf, tmp_path, *args):
    return main([*args, "--config", conf, "--out", str(tmp_path / "out"), "--seed", "3"])


def test_defaults_and_hash():
    cfg = load_config(None)
    assert cfg.model_config().mu == pytest.approx(1000.0)
    assert cfg.hash() == ExperimentConfig().hash()
    assert list(cfg.eta_grid())[:2] == [1.05, 1.1]


def test_simulate_is_deterministic(conf, tmp_path):
    assert run(conf, tmp_path, "simulate", "--eta", "1.3") == EXIT_OK
    first = (tmp_path / "out" / "path.csv").read_text()
    diag = (tmp_path / "out" / "diagnostics.csv").read_text().splitlines()
    assert diag[0].startswith("# config_hash=") and "seed=3" in diag[0]
    assert diag[1].startswith("t,p_positive")
    assert run(conf, tmp_path, "simulate", "--eta", "1.3") == EXIT_OK
    assert (tmp_path / "out" / "path.csv").read_text() == first


@pytest.mark.parametrize("mode,pattern", [("g-uncond", "g_stationary_*.csv"), ("g", "g_b20_*.csv"),
                                          ("h", "h_b0_m2_*.csv")])
def test_estimate_modes(conf, tmp_path, mode, pattern):
    assert run(conf, tmp_path, "estimate", "--mode", mode) == EXIT_OK
    assert len(list((tmp_path / "out").glob(pattern))) == 3
    meta = json.loads((tmp_path / "out" / "estimate.json").read_text())
    assert meta["mode"] == mode and meta["seed"] == 3


def test_train_then_optimize_with_nets(conf, tmp_path):
    for target in ("g-uncond", "h0", "hm"):
        code = run(conf, tmp_path, "train", "--mode", target)
        assert code in (EXIT_OK, EXIT_VALIDATION)
        assert (tmp_path / "out" / f"net_{target}.json").exists()
        assert (tmp_path / "out" / f"loss_{target}.csv").exists()
    assert run(conf, tmp_path, "optimize", "--mode", "linear", "--source", "net") == EXIT_OK
    assert run(conf, tmp_path, "optimize", "--mode", "conditional", "--source", "net", "--horizon", "4") == EXIT_OK
    res = json.loads((tmp_path / "out" / "result_conditional_T4.json").read_text())
    assert 1.1 <= res["eta_star"] <= 1.5 and res["source"] == "net"


@pytest.mark.filterwarnings("ignore::claimsbacklog.errors.TruncationWarning")
def test_optimize_with_monte_carlo(conf, tmp_path):
    assert run(conf, tmp_path, "optimize", "--mode", "inflating") == EXIT_OK
    assert run(conf, tmp_path, "optimize", "--mode", "conditional") == EXIT_OK
    for name in ("inflating", "conditional_T4", "conditional_T6"):
        assert (tmp_path / "out" / f"curve_{name}.csv").exists()


def test_error_exit_codes(conf, tmp_path):
    assert run(conf, tmp_path, "optimize", "--source", "net") == EXIT_MISSING
    bad = tmp_path / "bad.yaml"
    bad.write_text("model:\n  alphas: [1.0]\n  gamma: 2\n")
    assert main(["simulate", "--config", str(bad)]) == EXIT_CONFIG
    bad.write_text("simulation: [1, 2]\n")
    assert main(["simulate", "--config", str(bad)]) == EXIT_CONFIG
    bad.write_text("model:\n  alphas: [1.0, -1.0]\n")
    assert main(["simulate", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG
    assert run(conf, tmp_path, "simulate", "--eta", "0.9") == EXIT_CONFIG
    assert run(conf, tmp_path, "estimate", "--mode", "z") == EXIT_CONFIG


def test_validate_subset_and_corruption(conf, tmp_path):
    assert run(conf, tmp_path, "validate", "--quick", "--criteria", "3") == EXIT_OK
    report = json.loads((tmp_path / "out" / "acceptance.json").read_text())
    assert [r["number"] for r in report["criteria"]] == [3]
    assert run(conf, tmp_path, "validate", "--quick", "--criteria", "1", "--corrupt-processing") == EXIT_VALIDATION
