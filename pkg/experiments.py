#!/usr/bin/env python3
"""
Experiments
-----------
Reproducible numerical studies built on the solver: stability under
perturbed initial data, agreement across Picard tolerances, convergence
along a ladder of truncation indices, tail first moments and superlinear
moment growth. Independent runs go through a thread pool; tables are
assembled in input order so reruns are identical.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from coag_op import build_pair_table
from errors import DomainError
from grid import Exponential, InitialFamily, SizeGrid, l1_norm, moment, project_initial, tail_moment, weighted_norm
from growth import GrowthField
from kernels import KernelSpec, truncate
from solver import SolveResult, SolverConfig, solve, window_length

logger = logging.getLogger(__name__)

RATIO_SPREAD_LIMIT = 2.0
TOLERANCE_AGREEMENT = 1e-6
# sup_t of the tail beyond vmax/4, relative to M1(c0)
TAIL_SMALL = 1e-3


@dataclass(frozen=True)
class Scenario:
    kernel: KernelSpec
    field: GrowthField
    grid: SizeGrid
    initial: InitialFamily
    cfg: SolverConfig


def _strictly_monotone(values: Sequence[float]) -> bool:
    diffs = np.diff(np.asarray(values, dtype=float))
    return bool(np.all(diffs > 0) or np.all(diffs < 0))


@dataclass(frozen=True)
class PerturbInitial:
    """c0 + amplitude * direction for each amplitude"""
    amplitudes: Tuple[float, ...]
    direction: InitialFamily = Exponential(scale=0.5)

    def __post_init__(self):
        if not self.amplitudes or not _strictly_monotone(self.amplitudes):
            raise DomainError(f"perturbation amplitudes must be nonempty and strictly monotone: {self.amplitudes}")
        if any(a < 0 for a in self.amplitudes):
            raise DomainError("perturbation amplitudes must be nonnegative")


@dataclass(frozen=True)
class TruncationLadder:
    ns: Tuple[int, ...]

    def __post_init__(self):
        if len(self.ns) < 2 or not np.all(np.diff(self.ns) > 0):
            raise DomainError(f"truncation ladder needs at least two increasing n: {self.ns}")


@dataclass(frozen=True)
class TailRadii:
    radii: Tuple[float, ...]
    ns: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if not self.radii or not np.all(np.diff(self.radii) > 0):
            raise DomainError(f"tail radii must be nonempty and increasing: {self.radii}")
        if self.ns is not None and not np.all(np.diff(self.ns) > 0):
            raise DomainError(f"tail ladder n values must be increasing: {self.ns}")


Variation = Union[PerturbInitial, TruncationLadder, TailRadii]


@dataclass(frozen=True)
class ExperimentPlan:
    scenario: Scenario
    variation: Variation
    out_dir: Optional[str] = None
    workers: int = 4


@dataclass(frozen=True)
class ExperimentResult:
    name: str
    table: pd.DataFrame
    flags: Dict[str, bool]
    runs: List[SolveResult] = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return all(self.flags.values())


@dataclass(frozen=True)
class Square:
    def __call__(self, v):
        return v * v


@dataclass(frozen=True)
class UserConvex:
    fn: Callable = field(compare=False)
    name: str = "user"

    def __call__(self, v):
        return self.fn(v)


@dataclass(frozen=True)
class SuperlinearSeries:
    table: pd.DataFrame
    maximum: float
    growth_constant: float


def _run_all(jobs: List[Callable[[], SolveResult]], workers: int, sequential: bool) -> List[SolveResult]:
    if sequential or workers <= 1 or len(jobs) == 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [f.result() for f in futures]


def _shared_window(kernels, m0: float, cfg: SolverConfig) -> float:
    """One window length valid for every run so they share a time lattice"""
    limits = [window_length(k, m0, cfg.window_cap) for k in kernels]
    if cfg.window_cap is not None:
        limits.append(cfg.window_cap)
    window = min(limits)
    return min(window, cfg.T_final)


def _write(result: ExperimentResult, plan: ExperimentPlan) -> ExperimentResult:
    if plan.out_dir:
        from artifacts import write_experiment
        write_experiment(result, plan, plan.out_dir)
    return result


def continuous_dependence(plan: ExperimentPlan) -> ExperimentResult:
    """Sup-in-time weighted distance between base and perturbed runs, per amplitude"""
    if not isinstance(plan.variation, PerturbInitial):
        raise DomainError("continuous_dependence needs a PerturbInitial variation")
    scenario = plan.scenario
    cfg = scenario.cfg
    beta = scenario.kernel.beta
    kernel_n = truncate(scenario.kernel, cfg.n)
    pairs = build_pair_table(kernel_n, scenario.grid, cfg.pair_mode)
    base = project_initial(scenario.initial, scenario.grid, scenario.kernel.beta)
    direction = project_initial(plan.variation.direction, scenario.grid).values
    starts = [base] + [base.with_values(base.values + a * direction) for a in plan.variation.amplitudes]

    largest = max(moment(s, 0.0) for s in starts)
    shared = cfg.model_copy(update={"fixed_window": _shared_window([kernel_n], largest, cfg)})
    jobs = [lambda s=s: solve(s, shared, kernel_n, scenario.field, pairs) for s in starts]
    runs = _run_all(jobs, plan.workers, cfg.verification_mode)

    reference = runs[0]
    rows = []
    for amplitude, start, run in zip(plan.variation.amplitudes, starts[1:], runs[1:]):
        initial = weighted_norm(base, start, beta)
        sup = max(weighted_norm(a, b, beta) for a, b in zip(reference.states, run.states))
        rows.append({"amplitude": amplitude, "initial_distance": initial, "sup_distance": sup,
                     "ratio": sup / initial if initial > 0 else np.nan})
    table = pd.DataFrame(rows)
    ratios = table["ratio"].dropna().to_numpy()
    flags = {
        "finite_ratios": bool(np.all(np.isfinite(ratios))),
        "ratio_spread": bool(ratios.size == 0 or np.max(ratios) <= RATIO_SPREAD_LIMIT * np.min(ratios)),
        "zero_amplitude_exact": bool(np.all(table.loc[table["amplitude"] == 0, "sup_distance"] == 0)),
        "runs_ok": all(r.ok for r in runs),
    }
    logger.info("continuous dependence: ratios %s", np.array2string(ratios, precision=4))
    return _write(ExperimentResult("continuous_dependence", table, flags, runs), plan)


def tolerance_consistency(scenario: Scenario, tolerances: Sequence[float] = (1e-8, 1e-12),
                          workers: int = 2) -> ExperimentResult:
    """Runs from one c0 at several Picard tolerances, compared to the tightest"""
    cfg = scenario.cfg
    beta = scenario.kernel.beta
    kernel_n = truncate(scenario.kernel, cfg.n)
    pairs = build_pair_table(kernel_n, scenario.grid, cfg.pair_mode)
    c0 = project_initial(scenario.initial, scenario.grid, scenario.kernel.beta)
    window = _shared_window([kernel_n], moment(c0, 0.0), cfg)
    configs = [cfg.model_copy(update={"picard_tol": tol, "fixed_window": window}) for tol in tolerances]
    jobs = [lambda c=c: solve(c0, c, kernel_n, scenario.field, pairs) for c in configs]
    runs = _run_all(jobs, workers, cfg.verification_mode)

    finest = runs[int(np.argmin(tolerances))]
    rows = [{"picard_tol": tol,
             "sup_distance": max(weighted_norm(a, b, beta) for a, b in zip(run.states, finest.states))}
            for tol, run in zip(tolerances, runs)]
    table = pd.DataFrame(rows)
    flags = {"agreement": bool(table["sup_distance"].max() <= TOLERANCE_AGREEMENT)}
    return ExperimentResult("tolerance_consistency", table, flags, runs)


def _ladder_runs(scenario: Scenario, ns: Sequence[int], workers: int) -> Tuple[List[SolveResult], list]:
    cfg = scenario.cfg
    kernels = [truncate(scenario.kernel, n) for n in ns]
    c0 = project_initial(scenario.initial, scenario.grid, scenario.kernel.beta)
    window = _shared_window(kernels, moment(c0, 0.0), cfg)
    jobs = []
    for kernel_n in kernels:
        rung = cfg.model_copy(update={"n": kernel_n.n, "fixed_window": window})
        jobs.append(lambda k=kernel_n, c=rung: solve(c0, c, k, scenario.field))
    return _run_all(jobs, workers, cfg.verification_mode), kernels


def truncation_ladder(plan: ExperimentPlan) -> ExperimentResult:
    """Sup-in-time L^1 distance between solutions at successive truncation indices"""
    if not isinstance(plan.variation, TruncationLadder):
        raise DomainError("truncation_ladder needs a TruncationLadder variation")
    ns = plan.variation.ns
    runs, kernels = _ladder_runs(plan.scenario, ns, plan.workers)
    grid = plan.scenario.grid
    rows = []
    for i in range(len(ns) - 1):
        distance = max(l1_norm(a.values - b.values, grid) for a, b in zip(runs[i].states, runs[i + 1].states))
        rows.append({"n": ns[i], "next_n": ns[i + 1], "beta_n": kernels[i].beta_n, "sup_l1_distance": distance})
    table = pd.DataFrame(rows)
    distances = table["sup_l1_distance"].to_numpy()
    decreasing = bool(np.all(np.diff(distances) < 0))
    if not decreasing:
        logger.warning("truncation ladder distances are not decreasing: %s", distances)
    flags = {
        "decreasing": decreasing,
        "m_neg_2beta_bound": all(r.moments.flags["m_neg_2beta_bound"] for r in runs),
    }
    return _write(ExperimentResult("truncation_ladder", table, flags, runs), plan)


def tail_report(plan: ExperimentPlan) -> ExperimentResult:
    """sup_t int_R^inf v c dv per radius, one column per truncation index"""
    if not isinstance(plan.variation, TailRadii):
        raise DomainError("tail_report needs a TailRadii variation")
    scenario = plan.scenario
    grid = scenario.grid
    radii = plan.variation.radii
    if radii[0] < grid.vmin or radii[-1] > grid.vmax:
        raise DomainError(f"tail radii must lie in [{grid.vmin:g}, {grid.vmax:g}]")
    ns = plan.variation.ns or (scenario.cfg.n,)
    if len(ns) > 1:
        runs, _ = _ladder_runs(scenario, ns, plan.workers)
    else:
        kernel_n = truncate(scenario.kernel, ns[0])
        runs = [solve(project_initial(scenario.initial, grid, scenario.kernel.beta), scenario.cfg.model_copy(update={"n": ns[0]}),
                      kernel_n, scenario.field)]

    table = pd.DataFrame({"R": list(radii)})
    for n, run in zip(ns, runs):
        table[f"tail_n{n}"] = [max(tail_moment(s, R) for s in run.states) for R in radii]
    columns = [f"tail_n{n}" for n in ns]
    table["sup_tail"] = table[columns].max(axis=1)
    m1 = max(runs[0].moments.history["M1"].iloc[0], np.finfo(float).tiny)
    quarter = max(max(tail_moment(s, grid.vmax / 4.0) for s in run.states) for run in runs)
    flags = {
        "monotone_in_R": bool(np.all(np.diff(table["sup_tail"].to_numpy()) <= 0)),
        "small_at_quarter_vmax": bool(quarter <= TAIL_SMALL * m1),
    }
    if not flags["small_at_quarter_vmax"]:
        logger.warning("tail beyond vmax/4 = %.6g is %.3e of M1", grid.vmax / 4.0, quarter / m1)
    if len(ns) > 1:
        # uniformity in n is reported, not asserted
        monotone_n = bool(np.all(np.diff(table[columns].to_numpy(), axis=1) >= 0)
                          or np.all(np.diff(table[columns].to_numpy(), axis=1) <= 0))
        table["monotone_in_n"] = monotone_n
        if not monotone_n:
            logger.warning("tail moments are not monotone in n")
    return _write(ExperimentResult("tail_report", table, flags, runs), plan)


def superlinear_moment(result: SolveResult, j: Union[Square, UserConvex] = Square()) -> SuperlinearSeries:
    """int j(v) c dv along the stored trajectory, its max and the fitted exponential rate"""
    values = []
    for state in result.states:
        grid = state.grid
        values.append(float(np.sum(j(grid.centers) * state.values * grid.widths)))
    series = np.array(values)
    table = pd.DataFrame({"time": result.times, "value": series})
    positive = series > 0
    growth = 0.0
    if np.count_nonzero(positive) >= 2 and np.ptp(result.times[positive]) > 0:
        growth = float(np.polyfit(result.times[positive], np.log(series[positive]), 1)[0])
    return SuperlinearSeries(table=table, maximum=float(series.max()), growth_constant=growth)
