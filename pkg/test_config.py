"""
Run configuration parsing and validation.
"""

import glob
import os

import pytest

from config import parse_config, validate_run_config
from errors import ConfigFileError, ConfigParseError, ConfigValidationError
from experiments import PerturbInitial, TailRadii, TruncationLadder
from grid import Exponential, Tabulated, TruncatedPowerLaw
from kernels import Constant, StirredFroth

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")


class TestDefaults:
    def test_minimal_config(self, ini_writer):
        config = parse_config(ini_writer({"kernel": {"family": "constant", "params": "1.0"}}))
        spec = config.kernel_spec()
        assert spec.family == Constant(1.0)
        assert spec.beta == 0.25
        assert spec.k_env == 1.0
        assert config.grid.cells == 256
        assert config.solver.n == 50
        assert config.solver.window_cap == 0.125
        assert config.growth_field().is_zero
        assert config.initial_family() == Exponential()
        assert not config.verification_mode

    def test_case_of_keys_is_kept(self, ini_writer):
        path = ini_writer({
            "kernel": {"family": "constant", "params": "1.0"},
            "solver": {"T_final": "0.5", "output_times": "0.1, 0.5"},
            "growth": {"family": "linear", "params": "0.5", "A": "0.6", "B": "0.1"},
        })
        config = parse_config(path)
        assert config.solver.T_final == 0.5
        assert config.solver.output_times == [0.1, 0.5]
        assert config.growth.A == 0.6

    def test_solver_config_overrides(self, ini_writer):
        path = ini_writer({"kernel": {"family": "constant", "params": "1.0"}, "output": {"verification_mode": "true"}})
        config = parse_config(path)
        cfg = config.solver_config(n=20)
        assert cfg.n == 20
        assert cfg.verification_mode

    def test_none_values(self, ini_writer):
        path = ini_writer({"kernel": {"family": "constant", "params": "1.0"},
                           "solver": {"window_cap": "none", "output_times": "none"}})
        config = parse_config(path)
        assert config.solver.window_cap is None
        assert config.solver.output_times is None


class TestValidation:
    def test_containment_rule(self, ini_writer):
        path = ini_writer({"kernel": {"family": "constant", "params": "1.0"}, "solver": {"n": "500"}})
        with pytest.raises(ConfigValidationError) as info:
            parse_config(path)
        assert any("containment rule" in v for v in info.value.violations)

    def test_exponential_data_needs_small_beta(self, ini_writer):
        path = ini_writer({"kernel": {"family": "stirred_froth", "params": "0.5"}})
        with pytest.raises(ConfigValidationError) as info:
            parse_config(path)
        assert any("2*beta < 1" in v for v in info.value.violations)

    def test_all_violations_reported(self, ini_writer):
        path = ini_writer({"kernel": {"family": "stirred_froth", "params": "0.5"}, "solver": {"n": "500"}})
        with pytest.raises(ConfigValidationError) as info:
            parse_config(path)
        assert len(info.value.violations) == 2

    def test_field_errors_collected_across_sections(self, ini_writer):
        path = ini_writer({"kernel": {"family": "constant", "params": "1.0"},
                           "grid": {"cells": "4", "foo": "1"}, "solver": {"interpolation": "nearest"}})
        with pytest.raises(ConfigValidationError) as info:
            parse_config(path)
        text = " ".join(info.value.violations)
        assert "[grid] cells" in text
        assert "[grid] foo" in text
        assert "[solver] interpolation" in text

    def test_cross_checks_run_alongside_field_errors(self, ini_writer):
        path = ini_writer({"kernel": {"family": "stirred_froth", "params": "0.5"},
                           "grid": {"cells": "4"}, "solver": {"n": "500"}})
        with pytest.raises(ConfigValidationError) as info:
            parse_config(path)
        text = " ".join(info.value.violations)
        assert "[grid] cells" in text
        assert "containment rule" in text
        assert "2*beta < 1" in text
        assert len(info.value.violations) == 3

    def test_unknown_and_missing_sections(self):
        with pytest.raises(ConfigValidationError) as info:
            validate_run_config({"kernal": {"family": "constant"}})
        assert "unknown section [kernal]" in info.value.violations
        assert "missing required section [kernel]" in info.value.violations

    def test_unknown_kernel_family(self, ini_writer):
        with pytest.raises(ConfigValidationError) as info:
            parse_config(ini_writer({"kernel": {"family": "brownian"}}))
        assert any(v.startswith("[kernel]") for v in info.value.violations)

    def test_experiment_lists(self, ini_writer):
        path = ini_writer({"kernel": {"family": "constant", "params": "1.0"},
                           "experiment": {"ns": "8, 4", "radii": "5, 1", "amplitudes": "0.1, 0.1"}})
        with pytest.raises(ConfigValidationError) as info:
            parse_config(path)
        assert len(info.value.violations) == 3

    def test_missing_tabulated_file(self, ini_writer):
        path = ini_writer({"kernel": {"family": "constant", "params": "1.0"},
                           "initial": {"family": "tabulated", "path": "absent.txt"}})
        with pytest.raises(ConfigValidationError) as info:
            parse_config(path)
        assert any("absent.txt" in v for v in info.value.violations)


class TestFileErrors:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigFileError):
            parse_config(str(tmp_path / "absent.ini"))

    def test_not_sectioned(self, tmp_path):
        path = tmp_path / "broken.ini"
        path.write_text("family = constant\n")
        with pytest.raises(ConfigParseError):
            parse_config(str(path))


class TestShippedConfigs:
    @pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(DATA_DIR, "*.ini"))))
    def test_parses(self, path):
        config = parse_config(path)
        assert config.scenario().cfg.n == config.solver.n

    def test_transport_reads_table_next_to_config(self):
        config = parse_config(os.path.join(DATA_DIR, "transport.ini"))
        family = config.initial_family()
        assert isinstance(family, Tabulated)
        assert os.path.isfile(family.path)

    def test_ladder_plan(self):
        config = parse_config(os.path.join(DATA_DIR, "stirred_froth_ladder.ini"))
        assert config.kernel_spec().family == StirredFroth(0.5)
        assert config.initial_family() == TruncatedPowerLaw(0.0, 0.01, 10.0, 0.1)
        assert config.plan("converge").variation == TruncationLadder((4, 8, 16, 32))
        assert config.plan("tails").variation == TailRadii((0.01, 1.0, 5.0, 25.0), (4, 8, 16, 32))

    def test_depend_plan(self):
        plan = parse_config(os.path.join(DATA_DIR, "constant_kernel.ini")).plan("depend", out_dir="x")
        assert isinstance(plan.variation, PerturbInitial)
        assert plan.variation.amplitudes == (0.1, 0.01, 0.001)
        assert plan.out_dir == "x"
