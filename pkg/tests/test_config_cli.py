"""Config parsing/validation and the command-line pipeline end to end.

CLI runs use a deliberately tiny configuration (short horizon, one day,
two-point grid) so the full identify/simulate/sweep path stays quick.
"""

import os
from pathlib import Path

import numpy as np
import pytest

from quietmpc.cli import main
from quietmpc.config import ConfigError, RunConfig, load_config, price_series

TINY_CONFIG = """
seed = 77

[controller]
N = 8

[sweep]
eta_grid = [0.0, 50.0]
days = 1
workers = 1

[identification]
train_days = 2
test_days = 2
"""


class TestConfig:
    def test_defaults_validate(self):
        cfg = load_config()
        assert cfg.controller.N == 32
        assert cfg.sweep.days == 7
        assert cfg.noise.alpha == [0.0, 0.2, 0.7, 1.0]

    def test_unknown_top_level_key(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("mystery = 1\n")
        with pytest.raises(ConfigError, match="mystery"):
            load_config(p)

    def test_unknown_section_key(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("[controller]\nNN = 3\n")
        with pytest.raises(ConfigError, match="controller.NN"):
            load_config(p)

    def test_bad_value_rejected(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("[controller]\neta = -2.0\n")
        with pytest.raises(ConfigError, match="eta"):
            load_config(p)

    def test_bad_curve_rejected(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("[noise]\nalpha = [0.0, 0.9]\nbeta = [0.0]\n")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_parse_error_reported(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("not toml ====")
        with pytest.raises(ConfigError, match="parse error"):
            load_config(p)

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="not found"):
            load_config("/nonexistent/config.toml")

    def test_price_series_two_tier(self):
        cfg = RunConfig()
        hours = np.array([0.0, 6.75, 7.0, 12.0, 21.75, 22.0, 23.75])
        prices = price_series(cfg, hours)
        assert list(prices) == [0.10, 0.10, 0.20, 0.20, 0.20, 0.10, 0.10]


@pytest.fixture(scope="module")
def tiny_config_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "tiny.toml"
    p.write_text(TINY_CONFIG)
    return str(p)


@pytest.fixture(scope="module")
def identified_dir(tiny_config_path, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("run"))
    code = main(["identify", "--config", tiny_config_path, "--out", out])
    assert code == 0
    return out


class TestCliIdentify:
    def test_outputs_exist(self, identified_dir):
        assert os.path.exists(os.path.join(identified_dir, "model.json"))
        assert os.path.exists(os.path.join(identified_dir, "fit_report.md"))
        assert os.path.exists(os.path.join(identified_dir, "ident_train.csv"))

    def test_report_contains_maes(self, identified_dir):
        text = Path(identified_dir, "fit_report.md").read_text()
        assert "train_open_loop_mae_C" in text
        assert "test_open_loop_mae_C" in text
        for line in text.splitlines():
            if "open_loop_mae" in line:
                assert float(line.split(":")[1]) <= 0.5

    def test_model_bytes_reproducible(self, tiny_config_path, identified_dir,
                                      tmp_path):
        out2 = str(tmp_path / "again")
        assert main(["identify", "--config", tiny_config_path,
                     "--out", out2]) == 0
        a = Path(identified_dir, "model.json").read_bytes()
        b = Path(out2, "model.json").read_bytes()
        assert a == b

    def test_corrupt_config_exit_code(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("[controller]\nbogus_key = 1\n")
        assert main(["identify", "--config", str(p), "--out",
                     str(tmp_path / "o")]) == 2


class TestCliSimulate:
    def test_simulate_writes_trace(self, tiny_config_path, identified_dir):
        code = main(["simulate", "--config", tiny_config_path,
                     "--out", identified_dir, "--eta", "50",
                     "--option", "exceedance", "--days", "1"])
        assert code == 0
        assert os.path.exists(os.path.join(identified_dir, "trace_50.csv"))
        assert os.path.exists(os.path.join(identified_dir, "metrics.csv"))

    def test_simulate_baseline(self, tiny_config_path, identified_dir):
        code = main(["simulate", "--config", tiny_config_path,
                     "--out", identified_dir, "--option", "baseline",
                     "--days", "1"])
        assert code == 0
        assert os.path.exists(os.path.join(identified_dir,
                                           "trace_baseline.csv"))

    def test_missing_model_is_io_error(self, tiny_config_path, tmp_path):
        code = main(["simulate", "--config", tiny_config_path,
                     "--out", str(tmp_path / "empty"), "--eta", "0",
                     "--option", "exceedance"])
        assert code == 4


class TestCliSweep:
    def test_sweep_outputs(self, tiny_config_path, identified_dir):
        code = main(["sweep", "--config", tiny_config_path,
                     "--out", identified_dir])
        assert code == 0
        metrics = Path(identified_dir, "metrics.csv").read_text().splitlines()
        # 2 options x 2 etas + baseline
        assert len(metrics) == 6
        summary = Path(identified_dir, "summary.md").read_text()
        for label in ("noise cost J_n reduction percentage (%)",
                      "real noise cost reduction percentage (%)",
                      "energy cost increase percentage (%)",
                      "L_den reduction (dB)",
                      "L_quiet reduction (dB)",
                      "domination time reduction (h)",
                      "average MPC computation time (s)"):
            assert label in summary
        assert os.path.exists(os.path.join(identified_dir, "exceedance",
                                           "trace_0.csv"))
        assert os.path.exists(os.path.join(identified_dir, "baseline",
                                           "trace_baseline.csv"))

    def test_help_documents_flags(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for flag in ("--config", "--out", "--eta", "--option", "--days",
                     "--seed"):
            assert flag in text
