#!/usr/bin/env python3
"""
Size Grid and Densities
-----------------------
Geometric volume grid, cell-averaged number densities, moments M_m, the
weighted L^1_{-beta,1} distance and projection of initial data onto the grid.
"""

import hashlib
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple, Union

import numpy as np
import pandas as pd
from scipy.interpolate import CubicSpline, PchipInterpolator

from errors import DomainError, InputError

logger = logging.getLogger(__name__)

INTERPOLATION_METHODS = ("linear", "pchip", "cubic")
GAUSS_POINTS = 5


@dataclass(frozen=True, eq=False)
class SizeGrid:
    vmin: float
    vmax: float
    cells: int
    edges: np.ndarray = field(repr=False)
    centers: np.ndarray = field(repr=False)
    widths: np.ndarray = field(repr=False)

    @property
    def log_centers(self) -> np.ndarray:
        return np.log(self.centers)

    @property
    def ratio(self) -> float:
        return float(self.edges[1] / self.edges[0])

    def same_as(self, other: "SizeGrid") -> bool:
        if other is self:
            return True
        return self.cells == other.cells and np.array_equal(self.edges, other.edges)

    def digest(self) -> str:
        return hashlib.sha256(self.edges.tobytes()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class DensityState:
    grid: SizeGrid
    values: np.ndarray = field(repr=False)
    time: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.cells,):
            raise DomainError(f"density has shape {values.shape}, grid has {self.grid.cells} cells")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DomainError("density values must be finite and nonnegative")
        object.__setattr__(self, "values", values)

    def with_values(self, values: np.ndarray, time: float = None) -> "DensityState":
        return DensityState(self.grid, values, self.time if time is None else time)


# Initial-data families

@dataclass(frozen=True)
class Exponential:
    """c0(v) = amplitude * exp(-v / scale)"""
    scale: float = 1.0
    amplitude: float = 1.0

    def support(self) -> Tuple[float, float]:
        return 0.0, np.inf

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.amplitude * np.exp(-v / self.scale)


@dataclass(frozen=True)
class TruncatedPowerLaw:
    """c0(v) = amplitude * v**exponent on [lower, upper], zero elsewhere"""
    exponent: float
    lower: float
    upper: float
    amplitude: float = 1.0

    def support(self) -> Tuple[float, float]:
        return self.lower, self.upper

    def __call__(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros_like(v)
        inside = (v >= self.lower) & (v <= self.upper)
        out[inside] = self.amplitude * v[inside] ** self.exponent
        return out


@dataclass(frozen=True)
class Tabulated:
    """Two-column (volume, density) text file, interpolated linearly in log v"""
    path: str

    def load(self) -> Tuple[np.ndarray, np.ndarray]:
        return read_tabulated(self.path)

    def support(self) -> Tuple[float, float]:
        volumes, _ = self.load()
        return float(volumes[0]), float(volumes[-1])

    def __call__(self, v: np.ndarray) -> np.ndarray:
        volumes, densities = self.load()
        out = np.zeros_like(v)
        inside = (v >= volumes[0]) & (v <= volumes[-1])
        out[inside] = np.interp(np.log(v[inside]), np.log(volumes), densities)
        return out


InitialFamily = Union[Exponential, TruncatedPowerLaw, Tabulated]


def make_grid(vmin: float, vmax: float, cells: int) -> SizeGrid:
    """Geometric grid on [vmin, vmax]; centers are geometric means of adjacent edges"""
    if not (vmin > 0 and vmax > vmin):
        raise DomainError(f"grid needs 0 < vmin < vmax, got vmin={vmin}, vmax={vmax}")
    if int(cells) != cells or cells < 2:
        raise DomainError(f"grid needs at least 2 cells, got {cells}")
    cells = int(cells)
    ratio = (vmax / vmin) ** (1.0 / cells)
    edges = vmin * ratio ** np.arange(cells + 1, dtype=float)
    edges[0], edges[-1] = vmin, vmax
    centers = np.sqrt(edges[:-1] * edges[1:])
    widths = np.diff(edges)
    for arr in (edges, centers, widths):
        arr.setflags(write=False)
    return SizeGrid(float(vmin), float(vmax), cells, edges, centers, widths)


def moment(state: DensityState, m: float) -> float:
    """Midpoint quadrature of M_m = int v^m c dv"""
    grid = state.grid
    return float(np.sum(grid.centers ** m * state.values * grid.widths))


def l1_norm(values: np.ndarray, grid: SizeGrid) -> float:
    return float(np.sum(np.abs(values) * grid.widths))


def weighted_norm(state_a: DensityState, state_b: DensityState, beta: float) -> float:
    """Distance in L^1((v^-beta + v) dv)"""
    if not state_a.grid.same_as(state_b.grid):
        raise DomainError("weighted_norm needs both states on the same grid")
    grid = state_a.grid
    weight = grid.centers ** (-beta) + grid.centers
    return float(np.sum(weight * np.abs(state_a.values - state_b.values) * grid.widths))


def tail_moment(state: DensityState, radius: float) -> float:
    """Discrete int_R^inf v c dv; cells straddling R contribute their overlap"""
    grid = state.grid
    overlap = np.clip(grid.edges[1:] - np.maximum(grid.edges[:-1], radius), 0.0, None)
    overlap = np.minimum(overlap, grid.widths)
    return float(np.sum(grid.centers * state.values * overlap))


def moment_summary(state: DensityState, beta: float) -> Dict[str, float]:
    return {
        "M_-2beta": moment(state, -2.0 * beta),
        "M0": moment(state, 0.0),
        "M1": moment(state, 1.0),
        "M2": moment(state, 2.0),
    }


def read_tabulated(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """Read a (volume, density) table; '#' starts a comment"""
    if not os.path.isfile(path):
        raise InputError(f"tabulated initial data not found: {path}")
    try:
        df = pd.read_csv(path, sep=r"\s+", comment="#", header=None, engine="python")
    except Exception as e:
        raise InputError(f"cannot read tabulated initial data {path}: {e}") from e
    if df.shape[1] < 2 or df.shape[0] < 2:
        raise InputError(f"{path}: need at least two rows of (volume, density)")
    try:
        volumes = df.iloc[:, 0].to_numpy(dtype=float)
        densities = df.iloc[:, 1].to_numpy(dtype=float)
    except ValueError as e:
        raise InputError(f"{path}: non-numeric entry ({e})") from e
    if not (np.all(np.isfinite(volumes)) and np.all(np.isfinite(densities))):
        raise InputError(f"{path}: non-finite entry")
    if np.any(volumes <= 0):
        raise InputError(f"{path}: volumes must be positive")
    if np.any(np.diff(volumes) <= 0):
        raise InputError(f"{path}: volumes must be strictly increasing")
    if np.any(densities < 0):
        raise InputError(f"{path}: negative density at volume {volumes[np.argmax(densities < 0)]:g}")
    return volumes, densities


def project_initial(family: InitialFamily, grid: SizeGrid, beta: float = 0.0) -> DensityState:
    """Cell averages of c0 by 5-point Gauss-Legendre quadrature on each cell; logs M0, M1, M2 and M_-2beta"""
    lower, upper = family.support()
    nodes, weights = np.polynomial.legendre.leggauss(GAUSS_POINTS)
    a = np.maximum(grid.edges[:-1], lower)
    b = np.minimum(grid.edges[1:], upper)
    active = b > a
    values = np.zeros(grid.cells)
    if np.any(active):
        half = 0.5 * (b[active] - a[active])
        mid = 0.5 * (b[active] + a[active])
        points = mid[:, None] + half[:, None] * nodes[None, :]
        integrals = half * np.sum(weights[None, :] * family(points), axis=1)
        values[active] = integrals / grid.widths[active]
    state = DensityState(grid, np.clip(values, 0.0, None), 0.0)
    summary = moment_summary(state, beta)
    logger.info("projected %s onto %d cells: %s", family, grid.cells,
                ", ".join(f"{k}={v:.6g}" for k, v in summary.items()))
    return state


def make_sampler(grid: SizeGrid, values: np.ndarray, method: str = "linear",
                 clamp: bool = True) -> Callable[[np.ndarray], np.ndarray]:
    """Interpolant of cell values in log v; zero outside [vmin, vmax]"""
    if method not in INTERPOLATION_METHODS:
        raise DomainError(f"unknown interpolation method {method!r}")
    x = grid.log_centers
    values = np.asarray(values, dtype=float)
    if method == "pchip":
        interp = PchipInterpolator(x, values, extrapolate=False)
    elif method == "cubic":
        interp = CubicSpline(x, values, bc_type="not-a-knot", extrapolate=False)
    else:
        interp = None

    def sample(v):
        v = np.asarray(v, dtype=float)
        out = np.zeros(v.shape)
        inside = (v >= grid.vmin) & (v <= grid.vmax)
        if not np.any(inside):
            return out
        u = np.log(v[inside])
        if interp is None:
            inner = np.interp(u, x, values)
        else:
            inner = interp(u)
            # between vmin and the first center (last center and vmax) hold the end value
            inner = np.where(u <= x[0], values[0], np.where(u >= x[-1], values[-1], inner))
        if clamp:
            inner = np.maximum(inner, 0.0)
        out[inside] = inner
        return out

    return sample


def make_cumulative(grid: SizeGrid, values: np.ndarray,
                    method: str = "pchip") -> Callable[[np.ndarray], np.ndarray]:
    """N(v) = int_vmin^v c, interpolated between edges; 0 below vmin and N(vmax) above vmax.

    `linear` is exact for the piecewise-constant density; `pchip` and `cubic`
    interpolate N in log v, and pchip keeps N monotone for nonnegative c.
    """
    if method not in INTERPOLATION_METHODS:
        raise DomainError(f"unknown interpolation method {method!r}")
    values = np.asarray(values, dtype=float)
    totals = np.concatenate(([0.0], np.cumsum(values * grid.widths)))
    x = np.log(grid.edges)
    if method == "pchip":
        interp = PchipInterpolator(x, totals, extrapolate=False)
    elif method == "cubic":
        interp = CubicSpline(x, totals, bc_type="not-a-knot", extrapolate=False)
    else:
        interp = None

    def cumulative(v):
        v = np.clip(np.asarray(v, dtype=float), grid.vmin, grid.vmax)
        if interp is None:
            return np.interp(v, grid.edges, totals)
        out = interp(np.log(v))
        return np.where(v <= grid.vmin, 0.0, np.where(v >= grid.vmax, totals[-1], out))

    return cumulative


def sample_density(state: DensityState, v, method: str = "linear"):
    """Density off-grid: interpolation in log v between centers, 0 outside the grid"""
    result = make_sampler(state.grid, state.values, method)(np.atleast_1d(v))
    if np.ndim(v) == 0:
        return float(result[0])
    return result
