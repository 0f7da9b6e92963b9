"""Shared fixtures: small grids, kernels and initial data"""

import numpy as np
import pytest

from grid import Exponential, make_grid, project_initial
from growth import GrowthField, Linear, Zero
from kernels import Constant, KernelSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_grid():
    return make_grid(1e-3, 1e2, 64)


@pytest.fixture
def exp_state(small_grid):
    return project_initial(Exponential(), small_grid)


@pytest.fixture
def constant_kernel():
    return KernelSpec(Constant(1.0), 0.25, 1.0)


@pytest.fixture
def zero_kernel():
    return KernelSpec(Constant(0.0), 0.25, 1.0)


@pytest.fixture
def no_growth():
    return GrowthField(Zero(), 1.0, 1.0)


@pytest.fixture
def linear_growth():
    return GrowthField(Linear(0.5), 0.6, 0.1)


def write_ini(path, sections):
    """Write {section: {key: value}} as an INI file and return its path"""
    lines = []
    for section, values in sections.items():
        lines.append(f"[{section}]")
        lines += [f"{key} = {value}" for key, value in values.items()]
        lines.append("")
    path.write_text("\n".join(lines))
    return str(path)


@pytest.fixture
def ini_writer(tmp_path):
    def _write(sections, name="run.ini"):
        return write_ini(tmp_path / name, sections)
    return _write
