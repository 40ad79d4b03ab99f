import json

import numpy as np
import pytest

from flexdome import cli, harness
from flexdome.env import ConfigError
from flexdome.harness import (AggregationError, ExperimentConfig, aggregate, aggregate_and_plot,
                              csv_header, mean_stderr, read_csv, run_experiment)
from flexdome.learner import NumericalError


def small_config(tmp_path, **kw):
    base = dict(S=4, A=2, H=3, m=1, T=10, seeds=[0], threshold_mode=["gaussian"],
                algorithms=[{"name": "FlexDOME"}, {"name": "VanillaPD"}],
                output_dir=str(tmp_path / "out"))
    base.update(kw)
    return ExperimentConfig(**base)


def test_header_exact():
    assert ",".join(csv_header(1)) == (
        "episode,inst_gap,inst_violation_0,cum_strong_regret,cum_strong_violation,"
        "cum_weak_regret,lambda_0,eta,tau,eps_0,alpha_hat_0")
    assert csv_header(2)[2:4] == ["inst_violation_0", "inst_violation_1"]


def test_smoke_run(tmp_path):
    paths = run_experiment(small_config(tmp_path))
    assert len(paths) == 2
    for p in paths:
        raw = p.read_bytes()
        assert b"\r" not in raw
        lines = raw.decode().splitlines()
        assert lines[0] == ",".join(csv_header(1))
        assert len(lines) == 11
        data = read_csv(p)
        np.testing.assert_array_equal(data["episode"], np.arange(1, 11))
        assert np.all(np.diff(data["cum_strong_regret"]) >= 0)
        assert np.all(np.diff(data["cum_strong_violation"]) >= 0)
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["config_hash"] == small_config(tmp_path).hash()
    assert {"v_star", "slater_gap", "alpha", "feasibility_window"} <= set(manifest["runs"][0]["oracle"])


def test_eval_every_thins_rows(tmp_path):
    paths = run_experiment(small_config(tmp_path, T=12, eval_every=4,
                                        algorithms=[{"name": "FixedRPD"}]))
    data = read_csv(paths[0])
    np.testing.assert_array_equal(data["episode"], [4, 8, 12])


def test_rerun_from_manifest_is_byte_identical(tmp_path):
    cfg = small_config(tmp_path, T=30, seeds=[0, 1], threshold_mode=["fixed", "gaussian"])
    first = {p.name: p.read_bytes() for p in run_experiment(cfg)}
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    again = ExperimentConfig.from_dict(manifest)
    again.output_dir = str(tmp_path / "again")
    second = {p.name: p.read_bytes() for p in run_experiment(again)}
    assert first == second
    assert again.hash() == manifest["config_hash"]


def test_parallel_matches_serial(tmp_path):
    serial = run_experiment(small_config(tmp_path, seeds=[0, 1]))
    par = run_experiment(small_config(tmp_path, seeds=[0, 1], workers=2,
                                      output_dir=str(tmp_path / "par")))
    for a, b in zip(serial, par):
        assert a.read_bytes() == b.read_bytes()


def test_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("FLEXDOME_OUT", str(tmp_path / "override"))
    run_experiment(small_config(tmp_path, T=3, algorithms=[{"name": "VanillaPD"}]))
    assert (tmp_path / "override" / "manifest.json").exists()
    assert not (tmp_path / "out").exists()


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(T=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(seeds=[])
    with pytest.raises(ConfigError):
        ExperimentConfig(T=10, eval_every=3)
    with pytest.raises(ConfigError):
        ExperimentConfig(threshold_mode="uniform")
    with pytest.raises(ConfigError):
        ExperimentConfig(algorithms=[{"name": "PPO"}])
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"T": 5, "bogus": 1})
    cfg = ExperimentConfig.from_dict({"dims": {"S": 3, "A": 2, "H": 2, "m": 1},
                                      "scalers": {"c_b": 0.5, "c_eps": 0.0}, "T": 4})
    assert (cfg.S, cfg.c_b, cfg.c_eps) == (3, 0.5, 0.0)


def test_algorithm_labels():
    assert harness.algorithm_label({"name": "FlexDOME", "use_regularization": False}) == "FlexDOME-noReg"
    assert harness.algorithm_label({"name": "FlexDOME", "use_margin": False}) == "FlexDOME-noMargin"
    assert (harness.algorithm_label({"name": "FlexDOME", "oracle_threshold": True})
            == "FlexDOME-oracleThreshold")


def test_invariant_counter(tmp_path):
    cfg = small_config(tmp_path, T=50)
    model, spec, xi, v_star, _, _ = harness.prepare_instance(0, cfg, "gaussian")
    rec = harness.simulate(model, spec, {"name": "FlexDOME"}, 0, cfg, xi, v_star,
                           check_invariants=True)
    assert rec.metadata["invariant_failures"] == 0


def test_mean_stderr():
    mean, err = mean_stderr(np.array([[1.0, 2.0, 3.0]]))
    np.testing.assert_array_equal(err, 0.0)
    mean, err = mean_stderr(np.full((5, 4), 2.5))
    np.testing.assert_array_equal(mean, 2.5)
    np.testing.assert_array_equal(err, 0.0)


def test_aggregate_rejects_mismatched_lengths():
    run = lambda T: {"episode": np.arange(1, T + 1), "inst_gap": np.zeros(T)}
    with pytest.raises(AggregationError):
        aggregate({("fixed", "A"): {0: run(5), 1: run(6)}})
    with pytest.raises(AggregationError):
        aggregate({("fixed", "A"): {0: run(5)}, ("fixed", "B"): {0: run(6)}})


def test_aggregate_and_plot(tmp_path):
    cfg = small_config(tmp_path, T=20, seeds=[0, 1],
                       algorithms=[{"name": "FlexDOME"}, {"name": "VanillaPD"},
                                   {"name": "FlexDOME", "use_regularization": False}])
    run_experiment(cfg)
    out = tmp_path / "out"
    summary = aggregate_and_plot(out, log_scale=True, window=5)
    assert set(summary["figures"]) == {"gaussian_comparison.svg", "gaussian_ablation.svg"}
    for name in summary["figures"]:
        text = (out / name).read_text()
        assert "<svg" in text
        # self-contained: no scripts or externally linked assets
        assert "<script" not in text and 'href="http' not in text
    assert summary["final"]["gaussian"]["FlexDOME"]["n_seeds"] == 2
    assert (out / "summary.json").exists()


def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    inst = tmp_path / "inst.json"
    assert cli.main(["gen", "--seed", "0", "--dims", "5,3,3,1", "--out", str(inst)]) == 0
    assert cli.main(["oracle", "--instance", str(inst)]) == 0
    out = capsys.readouterr().out
    assert '"v_star"' in out

    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"S": 4, "A": 2, "H": 2, "T": 5, "seeds": [0],
                                    "threshold_mode": ["fixed"],
                                    "algorithms": [{"name": "VanillaPD"}],
                                    "output_dir": str(tmp_path / "cli_out")}))
    assert cli.main(["run", "--config", str(cfg_path)]) == 0
    assert cli.main(["plot", "--dir", str(tmp_path / "cli_out")]) == 0

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"T": 0}))
    assert cli.main(["run", "--config", str(bad)]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["plot", "--dir", str(tmp_path)]) == 2

    def boom(cfg):
        raise NumericalError("nan in Q")
    monkeypatch.setattr(cli, "run_experiment", boom)
    assert cli.main(["run", "--config", str(cfg_path)]) == 3


def test_cli_check(capsys):
    assert cli.main(["check"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 9 and "FAIL" not in out
