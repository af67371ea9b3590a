import json
import os

import numpy as np
import pytest

from sns.cli import main
from sns.config import ConfigError, build_problem, parse_config, validate_for_command

BASE = """
grid.L = 8
grid.N = 32
noise.K = 4
noise.amplitude = 1
noise.r = 3
damping.kind = constant_plus_halfFQ
damping.a0 = 0.5
scheme.tau = 0.03125
scheme.T = 0.25
scheme.lambda = -1
init.kind = gaussian_bump
init.amplitude = 1
init.width = 1
experiment.samples = 4
seed = 777
"""


def write_config(tmp_path, extra="", base=BASE, name="run.cfg"):
    """Write BASE plus overrides; an override line replaces any BASE line
    carrying the same key."""
    extra_keys = {
        line.split("=")[0].strip() for line in extra.splitlines() if "=" in line
    }
    kept = [
        line
        for line in base.splitlines()
        if "=" not in line or line.split("=")[0].strip() not in extra_keys
    ]
    path = tmp_path / name
    path.write_text("\n".join(kept) + "\n" + extra)
    return str(path)


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestParseConfig:
    def test_minimal_config_fills_defaults(self, tmp_path):
        path = tmp_path / "min.cfg"
        path.write_text("scheme.tau = 0.25\nscheme.T = 1\n")
        config = parse_config(str(path))
        assert config["grid.N"] == 128
        assert config["noise.K"] == 8
        assert config["scheme.M"] == 4
        assert config["experiment.phi"] == "exp_neg_charge"
        assert config.seed == 12345

    def test_unknown_key_names_line(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("scheme.tau = 0.25\nnot.a.key = 1\n")
        with pytest.raises(ConfigError, match="line 2"):
            parse_config(str(path))

    def test_aliasing_guard(self, tmp_path):
        cfg = write_config(tmp_path, "noise.K = 16\n")  # N/2 on a 32-point grid
        with pytest.raises(ConfigError, match="aliasing"):
            parse_config(cfg)

    def test_tau_list_divisibility_names_entry(self, tmp_path):
        cfg = write_config(
            tmp_path,
            "experiment.tau_list = 0.125, 0.1\nexperiment.tau_ref = 0.03125\n",
        )
        with pytest.raises(ConfigError, match="0.1"):
            parse_config(cfg)

    def test_inconsistent_m_and_t(self, tmp_path):
        cfg = write_config(tmp_path, "scheme.M = 3\n")  # 3 * tau != T
        with pytest.raises(ConfigError, match="inconsistent"):
            parse_config(cfg)

    def test_weak_requires_fast_decay(self, tmp_path):
        cfg = write_config(
            tmp_path,
            "experiment.tau_list = 0.125\nexperiment.tau_ref = 0.03125\n"
            "experiment.samples = 50\n",
        )
        config = parse_config(cfg)
        with pytest.raises(ConfigError, match="r >= 9"):
            validate_for_command(config, "weak-order")

    def test_custom_damping_round_trip(self, tmp_path):
        table = tmp_path / "alpha.txt"
        table.write_text("\n".join("0.75" for _ in range(32)) + "\n")
        cfg = write_config(
            tmp_path,
            "damping.kind = custom\ndamping.file = alpha.txt\n",
            base=BASE.replace("damping.kind = constant_plus_halfFQ\n", "").replace(
                "damping.a0 = 0.5\n", ""
            ),
        )
        problem = build_problem(parse_config(cfg))
        assert np.all(problem.damping.alpha == 0.75)

    def test_config_hash_ignores_formatting(self, tmp_path):
        a = parse_config(write_config(tmp_path, name="a.cfg"))
        b = parse_config(write_config(tmp_path, "# a comment\n", name="b.cfg"))
        assert a.config_hash == b.config_hash

    def test_conservative_margin_zero(self, tmp_path):
        cfg = write_config(
            tmp_path,
            "damping.kind = conservative\n",
            base=BASE.replace("damping.kind = constant_plus_halfFQ\n", "").replace(
                "damping.a0 = 0.5\n", ""
            ),
        )
        problem = build_problem(parse_config(cfg))
        assert problem.damping.margin == pytest.approx(0.0, abs=1e-15)


class TestCliExitCodes:
    def test_missing_config_file(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "none.cfg")]) == 1

    def test_config_error_exits_1(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("grid.N = 13\n")
        assert main(["simulate", "--config", str(path)]) == 1

    def test_unknown_subcommand_exits_1(self, tmp_path):
        assert main(["frobnicate", "--config", "x"]) == 1

    def test_numerical_failure_exits_2(self, tmp_path):
        cfg = write_config(
            tmp_path,
            f"output.dir = {tmp_path / 'out'}\n",
            base=BASE.replace("scheme.tau = 0.03125", "scheme.tau = 0.5")
            .replace("scheme.T = 0.25", "scheme.T = 1")
            .replace("scheme.lambda = -1", "scheme.lambda = 1")
            .replace("init.amplitude = 1", "init.amplitude = 2.5"),
        )
        assert main(["simulate", "--config", cfg]) == 2

    def test_gate_failure_exits_3(self, tmp_path):
        cfg = write_config(
            tmp_path,
            "experiment.tau_list = 0.125, 0.0625\n"
            "experiment.tau_ref = 0.015625\n"
            "experiment.samples = 50\n"
            "experiment.slope_min = 10\nexperiment.slope_max = 11\n"
            f"output.dir = {tmp_path / 'out'}\n",
        )
        assert main(["strong-order", "--config", cfg, "--assert"]) == 3

    def test_decay_gate_passes(self, tmp_path):
        cfg = write_config(tmp_path, f"output.dir = {tmp_path / 'out'}\n")
        assert main(["decay-check", "--config", cfg, "--assert"]) == 0
        verdict = json.loads(read(tmp_path / "out" / "verdict.json"))
        assert verdict["passed"] is True
        assert verdict["worst_ratio"] <= 1.0 + verdict["tolerance"]


class TestCliOutputs:
    def test_simulate_zero_steps_single_row(self, tmp_path):
        cfg = write_config(
            tmp_path,
            f"scheme.M = 0\noutput.dir = {tmp_path / 'out'}\n",
            base=BASE.replace("scheme.T = 0.25\n", ""),
        )
        assert main(["simulate", "--config", cfg]) == 0
        text = read(tmp_path / "out" / "monitors.csv").decode()
        lines = text.strip().split("\n")
        assert lines[0] == "t,charge,energy_H,h1_norm,h2_norm,exp_arg"
        assert len(lines) == 2
        assert lines[1].startswith("0,")

    def test_monitor_csv_17_digit_rendering(self, tmp_path):
        cfg = write_config(tmp_path, f"output.dir = {tmp_path / 'out'}\n")
        main(["simulate", "--config", cfg])
        lines = read(tmp_path / "out" / "monitors.csv").decode().strip().split("\n")
        charge0 = float(lines[1].split(",")[1])
        # round-trips exactly through the 17-significant-digit rendering
        assert f"{charge0:.17g}" == lines[1].split(",")[1]

    def test_manifest_contents(self, tmp_path):
        cfg = write_config(tmp_path, f"output.dir = {tmp_path / 'out'}\n")
        main(["simulate", "--config", cfg])
        manifest = json.loads(read(tmp_path / "out" / "manifest.json"))
        assert manifest["command"] == "simulate"
        assert manifest["master_seed"] == 777
        assert len(manifest["config_hash"]) == 64
        assert manifest["derived"]["margin_a"] == pytest.approx(0.5)
        assert len(manifest["derived"]["fq"]) == 32
        assert "workers" not in json.dumps(manifest)

    def test_errors_csv_schema(self, tmp_path):
        cfg = write_config(
            tmp_path,
            "experiment.tau_list = 0.125, 0.0625\n"
            "experiment.tau_ref = 0.015625\n"
            "experiment.samples = 50\n"
            f"output.dir = {tmp_path / 'out'}\n",
        )
        assert main(["strong-order", "--config", cfg]) == 0
        lines = read(tmp_path / "out" / "errors.csv").decode().strip().split("\n")
        assert lines[0] == "tau,error,ci_half_width,used_in_fit"
        assert len(lines) == 3
        fit = json.loads(read(tmp_path / "out" / "fit.json"))
        assert set(fit) == {
            "slope", "intercept", "sample_count", "reference_tau",
            "config_hash", "master_seed",
        }

    def test_exp_moment_outputs(self, tmp_path):
        cfg = write_config(
            tmp_path,
            f"experiment.record_every = 2\noutput.dir = {tmp_path / 'out'}\n",
        )
        assert main(["exp-moment", "--config", cfg, "--assert"]) == 0
        lines = read(tmp_path / "out" / "expmoment.csv").decode().strip().split("\n")
        assert lines[0] == "t,mean_exp,running_max"
        payload = json.loads(read(tmp_path / "out" / "expmoment.json"))
        assert payload["finite"] is True

    def test_horizon_outputs(self, tmp_path):
        cfg = write_config(
            tmp_path,
            "experiment.horizons = 0.125, 0.25\n"
            "experiment.tau_ref = 0.0078125\n"
            f"output.dir = {tmp_path / 'out'}\n",
        )
        assert main(["horizon", "--config", cfg, "--assert"]) == 0
        lines = read(tmp_path / "out" / "horizon.csv").decode().strip().split("\n")
        assert lines[0] == "T,error,ci_half_width"
        assert len(lines) == 3


class TestDeterminism:
    @pytest.mark.parametrize(
        "command,extra",
        [
            ("simulate", ""),
            ("decay-check", ""),
            (
                "strong-order",
                "experiment.tau_list = 0.125, 0.0625\n"
                "experiment.tau_ref = 0.015625\nexperiment.samples = 50\n",
            ),
            (
                "weak-order",
                "experiment.tau_list = 0.125, 0.0625\n"
                "experiment.tau_ref = 0.015625\nexperiment.samples = 50\n",
            ),
            ("exp-moment", ""),
            (
                "horizon",
                "experiment.horizons = 0.125, 0.25\nexperiment.tau_ref = 0.0078125\n",
            ),
        ],
    )
    def test_outputs_identical_across_worker_counts(self, tmp_path, command, extra):
        base_extra = extra
        if command == "weak-order":
            base_extra = base_extra + "noise.r = 9\n"
        out = tmp_path / "out"
        cfg = write_config(tmp_path, base_extra + f"output.dir = {out}\n")
        results = {}
        for workers in (1, 8):
            assert main([command, "--config", cfg, "--workers", str(workers)]) == 0
            results[workers] = {
                name: read(out / name) for name in sorted(os.listdir(out))
            }
        assert sorted(results[1]) == sorted(results[8])
        assert results[1] == results[8]
