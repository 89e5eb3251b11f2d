import csv
import os
import subprocess
import sys

import numpy as np
import pytest

from apacnet import config as config_mod
from apacnet import networks


def run_cli(*args, env=None):
    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    return subprocess.run([sys.executable, "-m", "apacnet.cli", *args],
                          capture_output=True, text=True, env=full_env)


def write_config(path, body):
    path.write_text(body)
    return str(path)


BASE_CONFIG = """\
experiment = "analytic"
dim = 2
nu = 1.0
iterations = 6
log_interval = 3
validate_interval = 6
seed = 7
batch_size = 8
width = 10
"""

# full-width net, long enough to clearly beat its initialization
TRAINED_CONFIG = """\
experiment = "analytic"
dim = 2
nu = 1.0
iterations = 600
log_interval = 100
validate_interval = 600
seed = 7
"""


class TestConfig:
    def test_missing_required_key_named(self):
        with pytest.raises(config_mod.ConfigError, match="'nu'"):
            config_mod.resolve({"experiment": "analytic", "dim": 2})

    def test_unknown_key_named(self):
        with pytest.raises(config_mod.ConfigError, match="'turbo'"):
            config_mod.resolve({"experiment": "obstacle", "dim": 2, "nu": 0.0,
                                "turbo": True})

    def test_presets_fill_paper_defaults(self):
        cfg = config_mod.resolve({"experiment": "symmetric", "dim": 2, "nu": 0.1})
        assert cfg.gamma_obst == 20.0
        assert cfg.lambda_hjb == 0.1
        assert cfg.lr_phi == 4e-4 and cfg.lr_gen == 1e-4
        assert (cfg.beta1, cfg.beta2) == (0.5, 0.9)
        assert cfg.weight_decay == 1e-4

    def test_quadcopter_preset(self):
        cfg = config_mod.resolve({"experiment": "quadcopter", "dim": 12, "nu": 0.0})
        assert cfg.batch_size == 150
        assert cfg.horizon == 4.0
        assert cfg.gamma_cong == 20.0

    def test_quadcopter_dim_enforced(self):
        with pytest.raises(config_mod.ConfigError, match="'dim'"):
            config_mod.resolve({"experiment": "quadcopter", "dim": 4, "nu": 0.0})

    def test_betas_list_maps_to_fields(self):
        cfg = config_mod.resolve({"experiment": "obstacle", "dim": 2, "nu": 0.0,
                                  "betas": [0.4, 0.8]})
        assert (cfg.beta1, cfg.beta2) == (0.4, 0.8)

    def test_experiment_section_applies(self, tmp_path):
        path = write_config(tmp_path / "c.toml", """\
experiment = "analytic"
dim = 2
nu = 1.0

[analytic]
gamma = 0.1

[obstacle]
gamma_obst = 9.0
""")
        cfg = config_mod.load(path)
        assert cfg.gamma == 0.1
        assert cfg.gamma_obst == 5.0  # other section ignored

    def test_paper_scale_iterations(self):
        cfg = config_mod.resolve({"experiment": "obstacle", "dim": 2, "nu": 0.0},
                                 paper_scale=True)
        assert cfg.iterations == 200_000
        cfg = config_mod.resolve({"experiment": "analytic", "dim": 2, "nu": 1.0,
                                  "gamma": 0.1}, paper_scale=True)
        assert cfg.iterations == 60_000

    def test_snapshot_roundtrip(self, tmp_path):
        cfg = config_mod.resolve({"experiment": "bottleneck", "dim": 3, "nu": 0.4,
                                  "seed": 9, "output_dir": "x/y"})
        path = tmp_path / "snap.toml"
        config_mod.save(cfg, path)
        again = config_mod.load(path)
        assert again == cfg


class TestTrainCommand:
    def test_train_writes_artifacts(self, tmp_path):
        cfg_path = write_config(tmp_path / "run.toml", BASE_CONFIG)
        out = tmp_path / "out"
        res = run_cli("train", "--config", cfg_path, "--output-dir", str(out), "--quiet")
        assert res.returncode == 0, res.stderr
        assert (out / "history.csv").exists()
        assert (out / "config.resolved.toml").exists()
        assert (out / "params_value.apc").exists()
        assert (out / "params_generator.apc").exists()
        with open(out / "history.csv", newline="") as fh:
            header = fh.readline().strip()
        assert header == "iter,l0,lt,lhjb,monitor_residual,rel_error_phi,rel_error_rho"

    def test_missing_nu_exits_two_naming_key(self, tmp_path):
        cfg_path = write_config(tmp_path / "bad.toml",
                                'experiment = "analytic"\ndim = 2\n')
        res = run_cli("train", "--config", cfg_path)
        assert res.returncode == 2
        assert "nu" in res.stderr

    def test_zero_iterations_single_row(self, tmp_path):
        cfg_path = write_config(tmp_path / "run.toml", BASE_CONFIG)
        out = tmp_path / "out"
        res = run_cli("train", "--config", cfg_path, "--output-dir", str(out),
                      "--iterations", "0", "--quiet")
        assert res.returncode == 0, res.stderr
        with open(out / "history.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 2  # header + initial monitor row
        assert rows[1][0] == "0"

    def test_determinism_byte_identical_histories(self, tmp_path):
        cfg_path = write_config(tmp_path / "run.toml", BASE_CONFIG)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            res = run_cli("train", "--config", cfg_path, "--output-dir", str(out),
                          "--quiet")
            assert res.returncode == 0, res.stderr
            outs.append((out / "history.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_resolved_snapshot_reproduces_history(self, tmp_path):
        cfg_path = write_config(tmp_path / "run.toml", BASE_CONFIG)
        out1 = tmp_path / "one"
        res = run_cli("train", "--config", cfg_path, "--output-dir", str(out1), "--quiet")
        assert res.returncode == 0, res.stderr
        out2 = tmp_path / "two"
        res = run_cli("train", "--config", str(out1 / "config.resolved.toml"),
                      "--output-dir", str(out2), "--quiet")
        assert res.returncode == 0, res.stderr
        assert (out1 / "history.csv").read_bytes() == (out2 / "history.csv").read_bytes()

    def test_output_dir_lock(self, tmp_path):
        cfg_path = write_config(tmp_path / "run.toml", BASE_CONFIG)
        out = tmp_path / "out"
        out.mkdir()
        (out / ".lock").touch()
        res = run_cli("train", "--config", cfg_path, "--output-dir", str(out))
        assert res.returncode != 0
        assert "locked" in res.stderr

    def test_seed_override_changes_history(self, tmp_path):
        cfg_path = write_config(tmp_path / "run.toml", BASE_CONFIG)
        h = []
        for seed in ("7", "8"):
            out = tmp_path / f"s{seed}"
            res = run_cli("train", "--config", cfg_path, "--output-dir", str(out),
                          "--seed", seed, "--quiet")
            assert res.returncode == 0, res.stderr
            h.append((out / "history.csv").read_bytes())
        assert h[0] != h[1]


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli_run")
    cfg_path = write_config(base / "run.toml", TRAINED_CONFIG)
    out = base / "out"
    res = run_cli("train", "--config", cfg_path, "--output-dir", str(out), "--quiet")
    assert res.returncode == 0, res.stderr
    return out


class TestExportCommand:
    def test_row_cardinality_and_schema(self, trained_run, tmp_path):
        out_csv = tmp_path / "traj.csv"
        res = run_cli("export-trajectories", "--run", str(trained_run),
                      "--samples", "100", "--times", "16",
                      "--output", str(out_csv), "--seed", "3")
        assert res.returncode == 0, res.stderr
        with open(out_csv, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["sample_id", "t", "x_1", "x_2"]
        assert len(rows) == 1 + 100 * 16

    def test_time_zero_rows_equal_initial_samples(self, trained_run, tmp_path):
        out_csv = tmp_path / "traj.csv"
        run_cli("export-trajectories", "--run", str(trained_run),
                "--samples", "32", "--times", "4", "--output", str(out_csv),
                "--seed", "5")
        with open(out_csv, newline="") as fh:
            rows = [r for r in csv.DictReader(fh)]
        t0 = [r for r in rows if float(r["t"]) == 0.0]
        assert len(t0) == 32

        from apacnet import config as cmod, environments

        cfg = cmod.load(trained_run / "config.resolved.toml")
        env = environments.make_environment(cfg)
        z = environments.sample_rho0(env, 32, np.random.default_rng(5))
        got = np.array([[float(r["x_1"]), float(r["x_2"])] for r in t0])
        np.testing.assert_array_equal(got, z)

    def test_deterministic_given_seed(self, trained_run, tmp_path):
        outs = []
        for name in ("a.csv", "b.csv"):
            path = tmp_path / name
            run_cli("export-trajectories", "--run", str(trained_run),
                    "--samples", "8", "--times", "3", "--output", str(path),
                    "--seed", "11")
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_rfc4180_crlf(self, trained_run, tmp_path):
        path = tmp_path / "t.csv"
        run_cli("export-trajectories", "--run", str(trained_run),
                "--samples", "2", "--times", "2", "--output", str(path))
        raw = path.read_bytes()
        assert raw.count(b"\r\n") == 5  # header + 4 rows


class TestValidateCommand:
    def test_oracle_phi_is_exact(self, trained_run):
        res = run_cli("validate", "--run", str(trained_run), "--oracle-phi")
        assert res.returncode == 0, res.stderr
        line = [l for l in res.stdout.splitlines() if l.startswith("rel_error_phi")][0]
        assert float(line.split("=")[1]) < 1e-12

    def test_reports_grid_point_count(self, trained_run):
        res = run_cli("validate", "--run", str(trained_run))
        assert "16384 evaluation points" in res.stdout

    def test_trained_beats_fresh_initialization(self, trained_run, tmp_path):
        res = run_cli("validate", "--run", str(trained_run))
        trained_err = float([l for l in res.stdout.splitlines()
                             if l.startswith("rel_error_phi")][0].split("=")[1])
        # fresh run with zero iterations = untrained network
        cfg_path = write_config(tmp_path / "run.toml", BASE_CONFIG)
        fresh = tmp_path / "fresh"
        run_cli("train", "--config", cfg_path, "--output-dir", str(fresh),
                "--iterations", "0", "--quiet")
        res2 = run_cli("validate", "--run", str(fresh))
        fresh_err = float([l for l in res2.stdout.splitlines()
                           if l.startswith("rel_error_phi")][0].split("=")[1])
        assert trained_err < fresh_err

    def test_refuses_non_analytic(self, tmp_path):
        cfg_path = write_config(tmp_path / "obs.toml", """\
experiment = "obstacle"
dim = 2
nu = 0.0
iterations = 2
log_interval = 1
batch_size = 4
width = 8
""")
        out = tmp_path / "obs_run"
        res = run_cli("train", "--config", cfg_path, "--output-dir", str(out), "--quiet")
        assert res.returncode == 0, res.stderr
        res = run_cli("validate", "--run", str(out))
        assert res.returncode != 0
        assert "analytic" in res.stderr

    def test_appends_to_history(self, trained_run):
        before = sum(1 for _ in open(trained_run / "history.csv"))
        res = run_cli("validate", "--run", str(trained_run))
        assert res.returncode == 0
        after = sum(1 for _ in open(trained_run / "history.csv"))
        assert after == before + 1


class TestListExperiments:
    def test_lists_all(self):
        res = run_cli("list-experiments")
        assert res.returncode == 0
        for name in config_mod.EXPERIMENTS:
            assert name in res.stdout

    def test_thread_cap_env_var(self, tmp_path):
        cfg_path = write_config(tmp_path / "run.toml", BASE_CONFIG)
        out = tmp_path / "out"
        res = run_cli("train", "--config", cfg_path, "--output-dir", str(out),
                      "--iterations", "2", "--quiet", env={"APAC_THREADS": "1"})
        assert res.returncode == 0, res.stderr


class TestDimMismatch:
    def test_export_checks_checkpoint_against_config(self, trained_run, tmp_path):
        # overwrite the generator checkpoint with one of a different width
        cfg = networks.generator_net_config(5)
        params = networks.init_params(cfg, 0, networks.ROLE_GENERATOR)
        networks.save_params(trained_run / "params_generator_bad.apc", params)
        os.replace(trained_run / "params_generator.apc",
                   trained_run / "params_generator_orig.apc")
        os.replace(trained_run / "params_generator_bad.apc",
                   trained_run / "params_generator.apc")
        try:
            res = run_cli("export-trajectories", "--run", str(trained_run),
                          "--samples", "2", "--times", "2",
                          "--output", str(tmp_path / "x.csv"))
            assert res.returncode != 0
            assert "dimension" in res.stderr
        finally:
            os.replace(trained_run / "params_generator_orig.apc",
                       trained_run / "params_generator.apc")
