import subprocess
import sys

import numpy as np
import pytest
import yaml

from adalloc import config as C
from adalloc import presets
from adalloc.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, main
from adalloc.sim import trace_header

PRINTED_A = """
-0.5432 0.0137 0 0.9778 0
0 -0.1179 0.2215 0 -0.9661
0 -10.5123 -0.9967 0 0.6176
2.6221 -0.0030 0 -0.5057 0
0 0.7075 -0.0939 0 -0.2127
"""
PRINTED_B_U = """
0.0069 -0.0866 -0.0866 0.0004
0 0.0119 -0.0119 0.0287
0 -4.2423 4.2423 1.4871
1.6532 -1.2735 -1.2735 0.0024
0 -0.2805 0.2805 -0.8823
"""


def parse(text):
    return np.array([[float(tok) for tok in line.split()] for line in text.strip().splitlines()])


def write_yaml(tmp_path, doc, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


SHORT = {"scenario": {"duration": 0.5, "metric_window": None}}


class TestConfig:
    def test_defaults_resolve(self):
        cfg = C.resolve()
        assert cfg["scenario"]["dt"] == 1e-3 and cfg["allocator"]["ell"] == 4.0

    def test_unknown_key(self):
        with pytest.raises(C.ConfigError, match="scenario.durration"):
            C.resolve({"scenario": {"durration": 3}})

    def test_section_must_be_mapping(self):
        with pytest.raises(C.ConfigError, match="mapping"):
            C.resolve({"scenario": 3})

    def test_unknown_preset(self):
        with pytest.raises(C.ConfigError, match="preset"):
            C.resolve(preset="f16")

    def test_malformed_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("plant: [1, 2\n")
        with pytest.raises(C.ConfigError):
            C.load(str(path))

    def test_presets_differ_only_in_fault(self):
        l2 = C.resolve(preset="admire-lambda2")
        assert l2["scenario"]["fault"]["levels"] == [0.85] * 4
        assert C.resolve(preset="admire-λ3") == C.resolve(preset="admire-lambda3")
        assert C.resolve(preset="admire-lambda1")["scenario"]["fault"]["levels"] is None

    def test_hash_stable(self):
        assert C.config_hash(C.resolve()) == C.config_hash(C.resolve())
        assert C.config_hash(C.resolve()) != C.config_hash(C.resolve(preset="admire-lambda2"))

    def test_bad_shapes(self):
        cfg = C.resolve({"scenario": {"reference": {"amplitudes": [1e-3, 1e-3]}}})
        with pytest.raises(C.ConfigError, match="amplitudes"):
            C.build_scenario(cfg)

    def test_lambda_bar_not_admitted(self, admire_design):
        cfg = C.resolve({"smc": {"lambda_bar": 1e6}, "design": {"lambda_cap": 1e9}})
        with pytest.raises(C.ConfigError, match="lambda_bar"):
            C.build_scenario(cfg)

    def test_reference_outside_envelope(self, admire_design):
        cfg = C.resolve({"scenario": {"reference": {"amplitudes": [0.1, 0.1, 0.1]}}})
        with pytest.raises(C.ConfigError, match="envelope"):
            C.build_scenario(cfg, admire_design)


class TestPresetValues:
    def test_state_matrix_digit_for_digit(self):
        np.testing.assert_array_equal(presets.ADMIRE_A, parse(PRINTED_A))
        np.testing.assert_array_equal(np.array(C.resolve()["plant"]["A"]), parse(PRINTED_A))

    def test_input_matrix(self):
        printed = parse(PRINTED_B_U)
        np.testing.assert_array_equal(presets.ADMIRE_B_U_FULL, printed)
        np.testing.assert_array_equal(presets.ADMIRE_B_U[2:], printed[2:])
        assert np.all(presets.ADMIRE_B_U[:2] == 0)

    def test_yaml_round_trip(self, capsys):
        assert main(["preset", "admire"]) == EXIT_OK
        doc = yaml.safe_load(capsys.readouterr().out)
        np.testing.assert_array_equal(np.array(doc["plant"]["A"]), parse(PRINTED_A))
        np.testing.assert_array_equal(np.array(doc["plant"]["B_u"]), presets.ADMIRE_B_U)
        np.testing.assert_allclose(np.rad2deg(doc["plant"]["u_upper"]), [25, 30, 30, 30])
        assert doc["plant"]["tau"] == 0.05
        assert doc["scenario"]["noise"]["sigma_x"] == 0.0035
        assert doc["smc"]["lambda_bar"] == 3.0
        assert doc["allocator"]["A_m"] == [[-0.2, 0.0, 0.0], [0.0, -0.1, 0.0], [0.0, 0.0, -0.1]]


class TestCli:
    def test_design_preset(self, tmp_path):
        out = tmp_path / "design.yaml"
        assert main(["design", "--preset", "admire", "--out", str(out)]) == EXIT_OK
        doc = yaml.safe_load(out.read_text())
        assert doc["design"]["feasible"] is True
        assert np.all(np.array(doc["design"]["M_attainable"]) >= [1.4, 1.4, 0.3])
        assert doc["config_sha256"] == C.config_hash(doc["config"])

    def test_design_zero_limits(self, tmp_path, capsys):
        path = write_yaml(tmp_path, {"plant": {"u_upper": [0.0] * 4}})
        assert main(["design", "--config", path, "--out", str(tmp_path / "o.yaml")]) == EXIT_CONFIG
        assert "step 1" in capsys.readouterr().err
        path = write_yaml(tmp_path, {"plant": {"u_lower": [0.0] * 4, "u_upper": [0.0] * 4}})
        assert main(["design", "--config", path]) == EXIT_CONFIG
        assert "below upper" in capsys.readouterr().err

    def test_design_tiny_limits_names_step(self, tmp_path, capsys):
        lim = (presets.admire_actuators().u_max * 1e-3).tolist()
        doc = {"plant": {"u_lower": [-x for x in lim], "u_upper": lim}, "design": {"M": None}}
        path = write_yaml(tmp_path, doc)
        assert main(["design", "--config", path, "--out", str(tmp_path / "o.yaml")]) == EXIT_CONFIG
        assert "step 11" in capsys.readouterr().err

    def test_malformed_document(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("scenario: {duration: [\n")
        assert main(["design", "--config", str(path)]) == EXIT_CONFIG

    def test_unknown_key_exit(self, tmp_path):
        path = write_yaml(tmp_path, {"allocator": {"gamma": 1.0}})
        assert main(["simulate", "--config", path]) == EXIT_CONFIG

    def test_simulate_writes_trace(self, tmp_path):
        path = write_yaml(tmp_path, SHORT)
        trace = tmp_path / "t.csv"
        metrics = tmp_path / "m.yaml"
        code = main(["simulate", "--config", path, "--trace", str(trace), "--metrics", str(metrics)])
        assert code == EXIT_OK
        lines = trace.read_text().splitlines()
        assert lines[0].startswith("# config_sha256=")
        assert lines[2] == ",".join(trace_header(5, 3, 4))
        assert len(lines) == 3 + 501
        doc = yaml.safe_load(metrics.read_text())
        assert doc["allocator"] == "adaptive"
        assert doc["metrics"]["hard_clamp_violations"] == 0
        assert doc["config"]["scenario"]["duration"] == 0.5

    def test_simulate_divergence_exit(self, tmp_path):
        doc = {"scenario": {"duration": 0.1, "x0": [60.0, 0, 0, 0, 0], "metric_window": None}}
        path = write_yaml(tmp_path, doc)
        assert main(["simulate", "--config", path, "--metrics", str(tmp_path / "m")]) == EXIT_DIVERGED

    def test_compare_identical(self, tmp_path):
        path = write_yaml(tmp_path, SHORT)
        out = tmp_path / "cmp.yaml"
        assert main(["compare", "--config", path, "--a", "adaptive", "--b", "adaptive",
                     "--out", str(out)]) == EXIT_OK
        doc = yaml.safe_load(out.read_text())
        assert doc["comparison"]["tracking_rms_ratio"] == [1.0, 1.0, 1.0]

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "adalloc", "preset", "admire-lambda3"],
                              capture_output=True, text=True, check=True)
        assert yaml.safe_load(proc.stdout)["scenario"]["fault"]["levels"] == [0.5] * 4

    def test_help(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        assert "simulate" in capsys.readouterr().out
