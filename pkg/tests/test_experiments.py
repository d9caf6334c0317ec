import json
import shutil

import pytest

from dynrwre.cli import main as cli_main
from dynrwre.experiments import ConfigError, run_experiment


def speed_config(**over):
    cfg = {
        "experiment": "speed",
        "seed": 777,
        "env": {"kind": "ssep", "rho": 1.0},
        "walk": {"p_bullet": 0.7, "p_circ": 0.7},
        "params": {"n_steps": 200, "n_rep": 40},
    }
    cfg.update(over)
    return cfg


def test_unknown_keys_rejected_with_paths():
    with pytest.raises(ConfigError, match="config: unknown keys"):
        run_experiment(speed_config(bogus=1))
    with pytest.raises(ConfigError, match="env: unknown keys"):
        cfg = speed_config()
        cfg["env"]["extra"] = 2
        run_experiment(cfg)
    with pytest.raises(ConfigError, match="params.n_steps: missing"):
        cfg = speed_config()
        del cfg["params"]["n_steps"]
        run_experiment(cfg)
    with pytest.raises(ConfigError, match="walk"):
        cfg = speed_config()
        cfg["walk"] = {"p_bullet": 0.2, "p_circ": 0.8}
        run_experiment(cfg)


def test_symmetric_zero_validation():
    cfg = speed_config(experiment="symmetric-zero")
    cfg["env"]["rho"] = 0.5
    cfg["walk"] = {"p_bullet": 0.8, "p_circ": 0.3}
    with pytest.raises(ConfigError):
        run_experiment(cfg)


def test_outputs_written(tmp_path):
    rows, summary, code = run_experiment(speed_config(), outdir=tmp_path, workers=1)
    assert code == 0
    body = (tmp_path / "results.csv").read_text()
    assert body.startswith("experiment,rho,p_bullet,p_circ,H_or_n,v,value,"
                           "ci_low,ci_high,n_rep,seed\n")
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 777 and manifest["version"]
    assert "wall_time_s" in manifest
    assert (tmp_path / "summary.txt").exists()


def test_worker_count_does_not_change_csv(tmp_path):
    a = tmp_path / "w1"
    b = tmp_path / "w8"
    run_experiment(speed_config(), outdir=a, workers=1)
    run_experiment(speed_config(), outdir=b, workers=8)
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()


def test_seed_override_changes_results(tmp_path):
    a = tmp_path / "s1"
    b = tmp_path / "s2"
    run_experiment(speed_config(), outdir=a, workers=1)
    run_experiment(speed_config(), outdir=b, workers=1, seed_override=778)
    assert (a / "results.csv").read_bytes() != (b / "results.csv").read_bytes()


def test_cli_run_and_exit_codes(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(speed_config()))
    out = tmp_path / "out"
    assert cli_main(["speed", "--config", str(cfg_path), "--out", str(out),
                     "--workers", "1"]) == 0
    assert (out / "results.csv").exists()
    # malformed config: exit 1, no partial outputs
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(speed_config(bogus=1)))
    out2 = tmp_path / "out2"
    assert cli_main(["speed", "--config", str(bad), "--out", str(out2),
                     "--workers", "1"]) == 1
    assert not out2.exists()
    # wrong experiment name for the config
    assert cli_main(["clt", "--config", str(cfg_path), "--workers", "1"]) == 1
    assert cli_main(["speed"]) == 1


def test_corpus_pass_and_seed_perturbation(tmp_path):
    assert cli_main(["corpus", "--out", str(tmp_path / "c1")]) == 0
    # perturbing a pinned seed must produce a diff and exit 2
    from dynrwre import cli as cli_mod

    src = cli_mod._corpus_dir()
    clone = tmp_path / "corpus-clone"
    shutil.copytree(src, clone)
    case = clone / "cases" / "speed_degenerate.json"
    cfg = json.loads(case.read_text())
    cfg["seed"] += 1
    case.write_text(json.dumps(cfg))
    import unittest.mock as mock

    with mock.patch.object(cli_mod, "_corpus_dir", lambda: clone):
        assert cli_main(["corpus", "--out", str(tmp_path / "c2")]) == 2
        diffs = list((tmp_path / "c2").glob("*.diff"))
        assert diffs


def test_sweep_rho_coupling_file(tmp_path):
    cfg = {
        "experiment": "sweep",
        "seed": 21,
        "env": {"kind": "ssep", "rho": 0.5},
        "walk": {"p_bullet": 0.8, "p_circ": 0.2},
        "params": {"parameter": "rho", "values": [0.3, 0.7],
                   "n_steps": 100, "n_rep": 20},
    }
    rows, summary, code = run_experiment(cfg, outdir=tmp_path, workers=2)
    assert code == 0
    lines = (tmp_path / "coupling.csv").read_text().splitlines()
    assert lines[0] == "parameter,value_lo,value_hi,n_pairs,dominated"
    assert lines[1].endswith(",20,20")
    with pytest.raises(ConfigError):
        run_experiment(dict(cfg, params=dict(cfg["params"], values=[0.7, 0.3])))


def test_single_value_sweep_matches_run(tmp_path):
    base = speed_config()
    sweep = {
        "experiment": "sweep",
        "seed": 777,
        "env": {"kind": "ssep", "rho": 1.0},
        "walk": {"p_bullet": 0.7, "p_circ": 0.7},
        "params": {"parameter": "rho", "values": [1.0],
                   "n_steps": 200, "n_rep": 40},
    }
    rows1, _, _ = run_experiment(base, workers=1)
    rows2, _, _ = run_experiment(sweep, workers=1)
    assert rows1[0]["value"] == rows2[0]["value"]
    assert rows1[0]["ci_low"] == rows2[0]["ci_low"]


def test_renorm_verify_missing_verdict_exits_2(monkeypatch, tmp_path):
    import dynrwre.experiments as exps
    from dynrwre.renorm import LemmaViolation

    def boom(*a, **k):
        raise LemmaViolation("synthetic")

    monkeypatch.setattr(exps, "check_trichotomy", boom)
    cfg = {
        "experiment": "renorm-verify",
        "seed": 5,
        "env": {"kind": "ssep", "rho": 0.5},
        "walk": {"p_bullet": 0.8, "p_circ": 0.2},
        "params": {"L0": 10000, "v_min": 1.9375, "v_max": 2.0, "n_samples": 2},
    }
    rows, summary, code = run_experiment(cfg, outdir=tmp_path, workers=1)
    assert code == 2
