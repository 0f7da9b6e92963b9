#!/usr/bin/env python3
"""
Truncated Growth-Coagulation Solver
-----------------------------------
Windowed fixed-point scheme for the truncated problem. On each window of
length t_n = 1/(14 beta_n M0) the shifted map

    T(u)(t, v) = c_init(Y(0;t,v)) J(0;t,v) e^{-kappa t}
               + int_0^t [Q_n(u) + kappa u](s, Y(s;t,v)) J(s;t,v) e^{-kappa (t-s)} ds

is iterated from the constant-in-time guess until successive trajectories
agree to picard_tol; windows are chained until T_final and every substep is
audited against the moment bounds.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator

from coag_op import PairTable, apply_qn_values, build_pair_table, collision_rate, load_pair_table, save_pair_table
from errors import ConfigurationError, NonconvergenceError
from grid import INTERPOLATION_METHODS, DensityState, SizeGrid, l1_norm, make_cumulative, moment, moment_summary
from growth import GrowthField, flow
from kernels import TruncatedKernel

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_CAP = 0.125
CONTRACTION_LIMIT = 0.55
SERIES_SWITCH = 1e-3

# audit tolerances, all relative
M0_TOL = 1e-8
M1_TOL = 1e-8
M_NEG_TOL = 1e-6
BALANCE_TOL = 1e-4
WEAK_TOL = 1e-4
CLAMP_TOL = 1e-8


class SolverConfig(BaseModel):
    n: int = Field(ge=2)
    T_final: float = Field(gt=0)
    substeps_per_window: int = Field(default=8, ge=4)
    picard_tol: float = Field(default=1e-10, gt=0)
    picard_max_iters: int = Field(default=60, ge=1)
    window_cap: Optional[float] = Field(default=DEFAULT_WINDOW_CAP, gt=0)
    fixed_window: Optional[float] = Field(default=None, gt=0)
    truncate_initial: bool = True
    interpolation: str = "pchip"
    pair_mode: str = "upper"
    output_times: Optional[List[float]] = None
    cache_dir: Optional[str] = None
    verification_mode: bool = False

    @field_validator("interpolation")
    @classmethod
    def _known_interpolation(cls, value: str) -> str:
        if value not in INTERPOLATION_METHODS:
            raise ValueError(f"interpolation must be one of {INTERPOLATION_METHODS}")
        return value

    @field_validator("output_times")
    @classmethod
    def _sorted_times(cls, value):
        if value is not None and (any(t < 0 for t in value) or list(value) != sorted(value)):
            raise ValueError("output_times must be nonnegative and sorted")
        return value


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: Tuple[DensityState, ...]


@dataclass(frozen=True)
class StepReport:
    window: int
    t_start: float
    length: float
    kappa: float
    iterations: int
    residual: float
    residuals: Tuple[float, ...]
    ratios: Tuple[float, ...]
    clamped_mass: float
    overflow_mass: float = 0.0
    overflow_number: float = 0.0
    weak_residual: float = 0.0
    flags: Dict[str, bool] = field(default_factory=dict)

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else 0.0

    @property
    def ok(self) -> bool:
        return all(self.flags.values())

    def as_text(self) -> str:
        flags = " ".join(f"{k}={str(v).lower()}" for k, v in self.flags.items())
        return (f"window {self.window}: t={self.t_start:.12g} length={self.length:.12g} kappa={self.kappa:.12g} "
                f"iterations={self.iterations} residual={self.residual:.3e} max_ratio={self.max_ratio:.4f} "
                f"clamped={self.clamped_mass:.3e} overflow_mass={self.overflow_mass:.3e} "
                f"weak_residual={self.weak_residual:.3e} {flags}")


@dataclass(frozen=True)
class MomentReport:
    history: pd.DataFrame
    flags: Dict[str, bool]
    worst: Dict[str, float]

    @property
    def ok(self) -> bool:
        return all(self.flags.values())


@dataclass(frozen=True)
class SolveResult:
    outputs: List[DensityState]
    reports: List[StepReport]
    moments: MomentReport
    times: np.ndarray
    states: List[DensityState]
    partial: bool = False

    @property
    def ok(self) -> bool:
        return self.moments.ok and all(r.ok for r in self.reports)


@dataclass(frozen=True, eq=False)
class CharacteristicTable:
    """Y(t_k; t_j, e) at the cell edges on one window lattice, indexed [j, k, edge] for k <= j"""
    grid: SizeGrid
    times: np.ndarray
    y: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def identity(self) -> bool:
        return self.y is None

    def pull(self, values: np.ndarray, k: int, method: str, clamp: bool = True) -> np.ndarray:
        """values transported from t_k to every t_j >= t_k; shape (len(times) - k, cells).

        Cell i at t_j receives the number that sat between the pulled-back
        edges Y(t_k; t_j, e_i) and Y(t_k; t_j, e_i+1), so number is never created.
        """
        rows = self.times.size - k
        if self.identity:
            return np.tile(values, (rows, 1))
        cumulative = make_cumulative(self.grid, values, method)
        out = np.diff(cumulative(self.y[k:, k]), axis=-1) / self.grid.widths
        return np.maximum(out, 0.0) if clamp else out


def window_length(kernel_n: TruncatedKernel, m0: float, window_cap: Optional[float] = DEFAULT_WINDOW_CAP) -> float:
    """t_n = 1/(2(kappa_n + 6 beta_n M0)) = 1/(14 beta_n M0); window_cap when nothing coagulates"""
    rate = kernel_n.beta_n * m0
    if rate <= 0:
        return window_cap if window_cap is not None else math.inf
    return 1.0 / (14.0 * rate)


def characteristic_table(field: GrowthField, grid: SizeGrid, times: np.ndarray) -> CharacteristicTable:
    times = np.asarray(times, dtype=float)
    if field.is_zero:
        return CharacteristicTable(grid, times)
    j = np.arange(times.size)[:, None, None]
    k = np.arange(times.size)[None, :, None]
    t = np.broadcast_to(times[j], (times.size, times.size, 1))
    s = np.where(k <= j, times[k], t)
    return CharacteristicTable(grid, times, flow(field, s, t, grid.edges[None, None, :]).y)


def duhamel_weights(kappa: float, h: float) -> Tuple[float, float]:
    """Weights of the left and right nodes of int_0^h e^{-kappa (h - s)} f(s) ds for linear f"""
    z = kappa * h
    if z < SERIES_SWITCH:
        left = h * (0.5 - z / 3.0 + z * z / 8.0 - z ** 3 / 30.0)
        total = h * (1.0 - z / 2.0 + z * z / 6.0 - z ** 3 / 24.0)
    else:
        left = h * (1.0 - math.exp(-z) * (1.0 + z)) / (z * z)
        total = -h * math.expm1(-z) / z
    return left, total - left


def apply_tn(u: Trajectory, c_init: DensityState, pairs: PairTable, chars: CharacteristicTable,
             kappa: float, method: str = "pchip") -> Tuple[Trajectory, float]:
    """One application of the shifted map; returns the new trajectory and the negative number clamped over the whole lattice"""
    times = chars.times
    steps = times.size - 1
    cells = pairs.grid.cells
    h = (times[-1] - times[0]) / steps if steps else 0.0
    left, right = duhamel_weights(kappa, h)
    decay = math.exp(-kappa * h)

    forcing = [apply_qn_values(state.values, pairs).rates + kappa * state.values for state in u.states]
    pulled = np.zeros((steps + 1, steps + 1, cells))
    for k in range(steps + 1):
        pulled[k:, k] = chars.pull(forcing[k], k, method, clamp=False)
        pulled[k, k] = forcing[k]
    start = chars.pull(c_init.values, 0, method)
    start[0] = c_init.values

    values = np.empty((steps + 1, cells))
    for j in range(steps + 1):
        acc = np.zeros(cells)
        for k in range(j):
            acc = acc * decay + left * pulled[j, k] + right * pulled[j, k + 1]
        values[j] = start[j] * decay ** j + acc

    negative = np.minimum(values, 0.0)
    clamped = float(np.sum(-negative @ pairs.grid.widths))
    values = np.maximum(values, 0.0)
    states = tuple(DensityState(pairs.grid, values[j], float(times[j])) for j in range(steps + 1))
    return Trajectory(times, states), clamped


def trajectory_distance(a: Trajectory, b: Trajectory) -> float:
    """sup over lattice times of the L^1 distance"""
    return max(l1_norm(x.values - y.values, x.grid) for x, y in zip(a.states, b.states))


def picard_solve(c_init: DensityState, cfg: SolverConfig, pairs: PairTable, chars: CharacteristicTable,
                 kappa: float, window: int = 0) -> Tuple[Trajectory, StepReport]:
    """Iterate the shifted map on one window from the constant-in-time guess"""
    times = chars.times
    current = Trajectory(times, tuple(c_init.with_values(c_init.values, float(t)) for t in times))
    floor = 1e-12 * max(l1_norm(c_init.values, c_init.grid), np.finfo(float).tiny)
    # nothing coagulates: the map ignores u, one application is the fixed point
    frozen = pairs.pairs == 0
    residuals: List[float] = []
    ratios: List[float] = []
    clamped = 0.0
    for iteration in range(1, cfg.picard_max_iters + 1):
        updated, clamped = apply_tn(current, c_init, pairs, chars, kappa, cfg.interpolation)
        residual = 0.0 if frozen else trajectory_distance(updated, current)
        if residuals and residuals[-1] > floor:
            ratios.append(residual / residuals[-1])
        residuals.append(residual)
        logger.debug("window %d iteration %d: residual %.3e", window, iteration, residual)
        current = updated
        if residual <= cfg.picard_tol:
            report = StepReport(window=window, t_start=float(times[0]), length=float(times[-1] - times[0]),
                                kappa=kappa, iterations=iteration, residual=residual, residuals=tuple(residuals),
                                ratios=tuple(ratios), clamped_mass=clamped)
            return current, report
    raise NonconvergenceError(
        f"window {window}: Picard iteration stopped at residual {residuals[-1]:.3e} after "
        f"{cfg.picard_max_iters} iterations (tolerance {cfg.picard_tol:g})", residuals, partial=current)


def truncate_initial_state(state: DensityState, n: int) -> DensityState:
    """c0 * chi_(0,n): cells whose center is >= n are emptied"""
    values = np.where(state.grid.centers < n, state.values, 0.0)
    return state.with_values(values)


def _pairs_for(kernel_n: TruncatedKernel, grid: SizeGrid, cfg: SolverConfig) -> PairTable:
    if cfg.cache_dir:
        cached = load_pair_table(cfg.cache_dir, kernel_n, grid, cfg.pair_mode)
        if cached is not None:
            logger.info("pair table loaded from cache")
            return cached
    pairs = build_pair_table(kernel_n, grid, cfg.pair_mode)
    if cfg.cache_dir:
        save_pair_table(pairs, cfg.cache_dir)
    return pairs


def _lattice(start: float, length: float, substeps: int, end: Optional[float] = None) -> np.ndarray:
    times = start + length * np.arange(substeps + 1) / substeps
    times[0] = start
    times[-1] = start + length if end is None else end
    return times


def _cumulative(rates: np.ndarray, times: np.ndarray) -> np.ndarray:
    out = np.zeros_like(rates)
    out[1:] = np.cumsum(0.5 * (rates[1:] + rates[:-1]) * np.diff(times))
    return out


def _audit_window(report: StepReport, trajectory: Trajectory, pairs: PairTable, reference: Dict[str, float],
                  beta: float, A: float, tol: float) -> StepReport:
    times = trajectory.times
    results = [apply_qn_values(s.values, pairs) for s in trajectory.states]
    overflow_mass = _cumulative(np.array([r.overflow_mass for r in results]), times)[-1]
    overflow_number = _cumulative(np.array([r.overflow_number for r in results]), times)[-1]
    collisions = np.array([collision_rate(s.values, pairs) for s in trajectory.states])
    m0 = np.array([moment(s, 0.0) for s in trajectory.states])
    m1 = np.array([moment(s, 1.0) for s in trajectory.states])
    m_neg = np.array([moment(s, -2.0 * beta) for s in trajectory.states])
    tiny = np.finfo(float).tiny
    # d/dt M0 = -1/2 int int K_n c c, the weak form with phi = 1
    expected = -_cumulative(collisions, times)[-1] - overflow_number
    weak = abs(m0[-1] - m0[0] - expected) / max(m0[0], tiny)
    flags = {
        "converged": report.residual <= tol,
        "contraction": report.max_ratio <= CONTRACTION_LIMIT,
        "nonnegativity": report.clamped_mass <= CLAMP_TOL * reference["M0"],
        "weak_residual": weak <= WEAK_TOL,
        "m0": bool(np.all(np.diff(m0) <= M0_TOL * np.maximum(m0[:-1], tiny))
                   and np.max(m0) <= reference["M0"] * (1.0 + M0_TOL)),
        "m1": bool(np.all(m1 <= reference["M1"] * np.exp(A * times) * (1.0 + M1_TOL))),
        "m_neg_2beta": bool(np.all(np.diff(m_neg) <= M_NEG_TOL * np.maximum(m_neg[:-1], tiny))
                            and np.max(m_neg) <= reference["M_-2beta"] * (1.0 + M_NEG_TOL)),
    }
    for name, passed in flags.items():
        if not passed:
            logger.warning("window %d: %s check failed", report.window, name)
    return replace(report, overflow_mass=float(overflow_mass), overflow_number=float(overflow_number),
                   weak_residual=float(weak), flags=flags)


def _moment_report(times: np.ndarray, states: Sequence[DensityState], beta: float, field: GrowthField,
                   pairs: PairTable) -> MomentReport:
    grid = states[0].grid
    rows = []
    growth_rate = np.empty(times.size)
    overflow_rate = np.empty(times.size)
    for i, (t, state) in enumerate(zip(times, states)):
        rows.append({
            "time": float(t),
            "M_-2beta": moment(state, -2.0 * beta),
            "M0": moment(state, 0.0),
            "M1": moment(state, 1.0),
            "M2": moment(state, 2.0),
            "norm_-beta_1": moment(state, -beta) + moment(state, 1.0),
        })
        growth_rate[i] = float(np.sum(field.rate(float(t), grid.centers) * state.values * grid.widths))
        overflow_rate[i] = apply_qn_values(state.values, pairs).overflow_mass
    history = pd.DataFrame(rows)

    m0 = history["M0"].to_numpy()
    m1 = history["M1"].to_numpy()
    m_neg = history["M_-2beta"].to_numpy()
    m1_ref = max(m1[0], np.finfo(float).tiny)
    balance = np.abs(m1 + _cumulative(overflow_rate, times) - m1[0] - _cumulative(growth_rate, times))
    m0_rise = np.max(np.diff(m0) / np.maximum(m0[:-1], np.finfo(float).tiny), initial=0.0)
    neg_rise = np.max(np.diff(m_neg) / np.maximum(m_neg[:-1], np.finfo(float).tiny), initial=0.0)
    m1_excess = np.max(m1 / (m1_ref * np.exp(field.A * (times - times[0]))) - 1.0)

    worst = {
        "m0_rise": float(m0_rise),
        "m1_balance": float(np.max(balance) / m1_ref),
        "m_neg_2beta_rise": float(neg_rise),
        "m1_growth_excess": float(m1_excess),
        "m0_excess": float(np.max(m0) / max(m0[0], np.finfo(float).tiny) - 1.0),
        "M2_max": float(history["M2"].max()),
    }
    flags = {
        "m0_nonincreasing": m0_rise <= M0_TOL,
        "m0_bound": worst["m0_excess"] <= M0_TOL,
        "m1_bound": m1_excess <= M1_TOL,
        "m1_balance": worst["m1_balance"] <= BALANCE_TOL,
        "m_neg_2beta_nonincreasing": neg_rise <= M_NEG_TOL,
        "m_neg_2beta_bound": float(np.max(m_neg)) <= m_neg[0] * (1.0 + M_NEG_TOL),
    }
    flags = {k: bool(v) for k, v in flags.items()}
    for name, passed in flags.items():
        if not passed:
            logger.warning("moment check %s failed (worst %s)", name, worst)
    return MomentReport(history=history, flags=flags, worst=worst)


def _snap(times: np.ndarray, states: List[DensityState], requested: Sequence[float]) -> List[DensityState]:
    return [states[int(np.argmin(np.abs(times - t)))] for t in requested]


def solve(c0: DensityState, cfg: SolverConfig, kernel_n: TruncatedKernel, field: GrowthField,
          pairs: Optional[PairTable] = None) -> SolveResult:
    """Chain Picard windows from c0 to cfg.T_final, auditing every substep"""
    if cfg.n != kernel_n.n:
        raise ConfigurationError(f"solver n={cfg.n} does not match the kernel truncation n={kernel_n.n}")
    grid = c0.grid
    if pairs is None:
        pairs = _pairs_for(kernel_n, grid, cfg)
    elif not pairs.grid.same_as(grid):
        raise ConfigurationError("pair table and initial data live on different grids")

    state = truncate_initial_state(c0, cfg.n) if cfg.truncate_initial else c0
    reference = moment_summary(state, kernel_n.base.beta)
    m0_ref = reference["M0"]
    if cfg.fixed_window is not None:
        limit = window_length(kernel_n, m0_ref, cfg.window_cap)
        if cfg.fixed_window > limit * (1.0 + 1e-12):
            raise ConfigurationError(f"fixed window {cfg.fixed_window:g} exceeds the contraction window {limit:g}")

    beta = kernel_n.base.beta
    horizon = cfg.T_final
    times: List[float] = [0.0]
    states: List[DensityState] = [state]
    reports: List[StepReport] = []
    t = 0.0
    window = 0
    while horizon - t > 1e-12 * horizon:
        m0 = moment(state, 0.0)
        if cfg.fixed_window is not None:
            length = cfg.fixed_window
        else:
            length = window_length(kernel_n, m0, cfg.window_cap)
            if cfg.window_cap is not None:
                length = min(length, cfg.window_cap)
        last = length >= (horizon - t) * (1.0 - 1e-12)
        length = min(length, horizon - t)
        kappa = kernel_n.beta_n * m0
        lattice = _lattice(t, length, cfg.substeps_per_window, horizon if last else None)
        chars = characteristic_table(field, grid, lattice)
        try:
            trajectory, report = picard_solve(state, cfg, pairs, chars, kappa, window)
        except NonconvergenceError as e:
            partial = _finish(np.array(times), states, reports, cfg, beta, field, pairs, partial=True)
            raise NonconvergenceError(str(e), e.residuals, partial=partial) from e
        report = _audit_window(report, trajectory, pairs, reference, beta, field.A, cfg.picard_tol)
        logger.info("window %d [%.6g, %.6g]: %d Picard iterations, max ratio %.3f",
                    window, lattice[0], lattice[-1], report.iterations, report.max_ratio)
        reports.append(report)
        times.extend(float(x) for x in trajectory.times[1:])
        states.extend(trajectory.states[1:])
        state = trajectory.states[-1]
        t = float(trajectory.times[-1])
        window += 1
    return _finish(np.array(times), states, reports, cfg, beta, field, pairs)


def _finish(times: np.ndarray, states: List[DensityState], reports: List[StepReport], cfg: SolverConfig,
            beta: float, field: GrowthField, pairs: PairTable, partial: bool = False) -> SolveResult:
    moments = _moment_report(times, states, beta, field, pairs)
    requested = cfg.output_times if cfg.output_times else [cfg.T_final]
    if partial:
        requested = [t for t in requested if t <= times[-1]]
    outputs = _snap(times, states, requested)
    return SolveResult(outputs=outputs, reports=reports, moments=moments, times=times, states=states, partial=partial)
