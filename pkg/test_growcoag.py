"""
Command-line front end: subcommands, output files and exit codes.
"""

import os

import pandas as pd
import pytest

from growcoag import EXIT_CODES, exit_code_for, main
from errors import (ConfigFileError, ConfigParseError, ConfigValidationError, DomainError, InputError,
                    InvariantViolation, NonconvergenceError)

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")

SMALL_RUN = {
    "kernel": {"family": "constant", "params": "1.0", "beta": "0.25"},
    "grid": {"vmin": "1e-3", "vmax": "1e2", "cells": "64"},
    "solver": {"n": "20", "T_final": "0.25"},
    "experiment": {"radii": "1, 5, 25"},
}

FROTH_LADDER = {
    "kernel": {"family": "stirred_froth", "params": "0.5"},
    "grid": {"vmin": "1e-2", "vmax": "1e2", "cells": "64"},
    "initial": {"family": "power_law", "exponent": "0.0", "lower": "0.01", "upper": "10.0", "amplitude": "0.1"},
    "solver": {"n": "8", "T_final": "0.05"},
    "experiment": {"ns": "4, 8, 16, 32", "workers": "2"},
}


def _with(base, section, **values):
    merged = {name: dict(keys) for name, keys in base.items()}
    merged.setdefault(section, {}).update({k: str(v) for k, v in values.items()})
    return merged


class TestSimulate:
    def test_writes_outputs(self, ini_writer, tmp_path):
        out_dir = str(tmp_path / "out")
        assert main(["simulate", "--config", ini_writer(SMALL_RUN), "--out", out_dir]) == 0
        for name in ("moments.csv", "moments.gp", "manifest.txt"):
            assert os.path.isfile(os.path.join(out_dir, name))
        history = pd.read_csv(os.path.join(out_dir, "moments.csv"))
        assert list(history.columns) == ["time", "M_-2beta", "M0", "M1", "M2", "norm_-beta_1"]
        assert history["time"].iloc[-1] == pytest.approx(0.25)

    def test_verification_mode_is_reproducible(self, ini_writer, tmp_path):
        path = ini_writer(SMALL_RUN)
        first, second = str(tmp_path / "a"), str(tmp_path / "b")
        assert main(["simulate", "--config", path, "--out", first, "--verify"]) == 0
        assert main(["simulate", "--config", path, "--out", second, "--verify"]) == 0
        for name in ("moments.csv", "manifest.txt"):
            with open(os.path.join(first, name), "rb") as a, open(os.path.join(second, name), "rb") as b:
                assert a.read() == b.read()
        with open(os.path.join(first, "manifest.txt"), encoding="utf-8") as f:
            text = f.read()
        assert "created" not in text
        assert "[hashes]" in text and "[tolerances]" in text

    def test_nonconvergence(self, ini_writer, tmp_path):
        path = ini_writer(_with(SMALL_RUN, "solver", picard_max_iters=1))
        out_dir = str(tmp_path / "out")
        assert main(["simulate", "--config", path, "--out", out_dir]) == 3
        assert os.path.isfile(os.path.join(out_dir, "manifest.txt"))

    def test_output_directory_from_environment(self, ini_writer, tmp_path, monkeypatch):
        out_dir = str(tmp_path / "from_env")
        monkeypatch.setenv("GROWCOAG_OUT", out_dir)
        assert main(["simulate", "--config", ini_writer(SMALL_RUN)]) == 0
        assert os.path.isfile(os.path.join(out_dir, "moments.csv"))

    def test_shipped_transport_run(self, tmp_path):
        out_dir = str(tmp_path / "transport")
        assert main(["simulate", "--config", os.path.join(DATA_DIR, "transport.ini"), "--out", out_dir]) == 0
        with open(os.path.join(out_dir, "manifest.txt"), encoding="utf-8") as f:
            text = f.read()
        assert "flag.m1_balance = true" in text
        assert "[projection]" in text
        history = pd.read_csv(os.path.join(out_dir, "moments.csv"))
        assert (history["M0"].diff().dropna() <= 1e-8 * history["M0"].iloc[0]).all()


class TestConfigErrors:
    def test_missing_config(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "absent.ini")]) == 6

    def test_parse_error(self, tmp_path):
        path = tmp_path / "broken.ini"
        path.write_text("n = 20\n")
        assert main(["simulate", "--config", str(path)]) == 5

    def test_validation_error(self, ini_writer):
        assert main(["simulate", "--config", ini_writer(_with(SMALL_RUN, "solver", n=500))]) == 4


class TestChecks:
    def test_kernel_envelope_holds(self, ini_writer, tmp_path):
        out_dir = str(tmp_path / "out")
        assert main(["check-kernel", "--config", ini_writer(SMALL_RUN), "--out", out_dir]) == 0
        with open(os.path.join(out_dir, "envelope.txt"), encoding="utf-8") as f:
            assert f.readline().strip() == "ok = true"

    def test_kernel_envelope_violated(self, ini_writer, tmp_path):
        path = ini_writer(_with(SMALL_RUN, "kernel", params=3.0, beta=0.1, k_env=1.0))
        assert main(["check-kernel", "--config", path, "--out", str(tmp_path / "out")]) == 2

    def test_growth(self, ini_writer, tmp_path):
        path = ini_writer(_with(SMALL_RUN, "growth", family="linear", params=0.5, A=0.6, B=0.1))
        out_dir = str(tmp_path / "out")
        assert main(["check-growth", "--config", path, "--out", out_dir]) == 0
        assert os.path.isfile(os.path.join(out_dir, "growth.txt"))

    def test_growth_violation(self, ini_writer, tmp_path):
        path = ini_writer(_with(SMALL_RUN, "growth", family="linear", params=2.0, A=1.0, B=1.0))
        assert main(["check-growth", "--config", path, "--out", str(tmp_path / "out")]) == 2


class TestExperiments:
    def test_converge(self, ini_writer, tmp_path):
        out_dir = str(tmp_path / "out")
        assert main(["converge", "--config", ini_writer(FROTH_LADDER), "--out", out_dir]) == 0
        table = pd.read_csv(os.path.join(out_dir, "truncation_ladder.csv"))
        assert len(table) == 3
        assert list(table["n"]) == [4, 8, 16]

    def test_tails(self, ini_writer, tmp_path):
        out_dir = str(tmp_path / "out")
        assert main(["tails", "--config", ini_writer(SMALL_RUN), "--out", out_dir, "--verify"]) == 0
        assert os.path.isfile(os.path.join(out_dir, "tail_report.gp"))

    def test_depend(self, ini_writer, tmp_path):
        path = ini_writer(_with(SMALL_RUN, "experiment", amplitudes="1e-2, 1e-3"))
        out_dir = str(tmp_path / "out")
        assert main(["depend", "--config", path, "--out", out_dir]) == 0
        table = pd.read_csv(os.path.join(out_dir, "continuous_dependence.csv"))
        assert list(table["amplitude"]) == [0.01, 0.001]


class TestExitCodes:
    @pytest.mark.parametrize("error,code", [
        (InvariantViolation("x"), 2),
        (NonconvergenceError("x", [1.0]), 3),
        (ConfigValidationError(["x"]), 4),
        (InputError("x"), 4),
        (DomainError("x"), 4),
        (ConfigParseError("x"), 5),
        (ConfigFileError("x"), 6),
        (RuntimeError("x"), 1),
    ])
    def test_mapping(self, error, code):
        assert exit_code_for(error) == code

    def test_codes_are_distinct_per_kind(self):
        assert len({kind for kind, _ in EXIT_CODES}) == len(EXIT_CODES)
