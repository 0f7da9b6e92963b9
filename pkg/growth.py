#!/usr/bin/env python3
"""
Growth Fields and Characteristics
---------------------------------
Growth rates g(t, v), checks of the growth assumptions

    g(t,0) = 0,  g >= 0,  |d_v g| < A,  |d_v^2 g| < B

and the characteristic flow Y(s; t, v) with its Jacobian J(s; t, v),
integrated as the augmented system (Y, log J) by classical RK4.
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Tuple, Union

import numpy as np

from errors import DomainError, FlowError

logger = logging.getLogger(__name__)

STEP_RULE = 1.0 / 16.0  # step * A <= 1/16
STRICT_MARGIN = 1e-12


def _fd_step(v):
    return 1e-5 * np.maximum(v, 1.0)


@dataclass(frozen=True)
class Zero:
    def rate(self, t, v):
        return np.zeros(np.broadcast(t, v).shape)

    def slope(self, t, v):
        return np.zeros(np.broadcast(t, v).shape)


@dataclass(frozen=True)
class Linear:
    """g = a v"""
    a: float

    def rate(self, t, v):
        return self.a * v * np.ones(np.shape(t))

    def slope(self, t, v):
        return np.full(np.broadcast(t, v).shape, float(self.a))


@dataclass(frozen=True)
class Saturating:
    """g = a v vstar / (v + vstar)"""
    a: float
    vstar: float

    def __post_init__(self):
        if self.vstar <= 0:
            raise DomainError(f"saturating growth needs vstar > 0, got {self.vstar}")

    def rate(self, t, v):
        return self.a * v * self.vstar / (v + self.vstar) * np.ones(np.shape(t))

    def slope(self, t, v):
        return self.a * self.vstar ** 2 / (v + self.vstar) ** 2 * np.ones(np.shape(t))


@dataclass(frozen=True)
class UserRate:
    """g given as a callable (t, v) -> rate; d_v g by centered differences unless supplied"""
    fn: Callable = field(compare=False)
    dfn: Optional[Callable] = field(default=None, compare=False)
    name: str = "user"

    def rate(self, t, v):
        return np.asarray(self.fn(t, v), dtype=float) * np.ones(np.broadcast(t, v).shape)

    def slope(self, t, v):
        if self.dfn is not None:
            return np.asarray(self.dfn(t, v), dtype=float) * np.ones(np.broadcast(t, v).shape)
        h = _fd_step(v)
        centre = np.maximum(v, h)
        return (self.rate(t, centre + h) - self.rate(t, centre - h)) / (2.0 * h)


GrowthFamily = Union[Zero, Linear, Saturating, UserRate]


@dataclass(frozen=True)
class GrowthField:
    family: GrowthFamily
    A: float
    B: float

    def __post_init__(self):
        if self.A <= 0 or self.B <= 0:
            raise DomainError(f"growth bounds must be positive, got A={self.A}, B={self.B}")

    def rate(self, t, v):
        return self.family.rate(t, v)

    def slope(self, t, v):
        return self.family.slope(t, v)

    @property
    def is_zero(self) -> bool:
        return isinstance(self.family, Zero)

    def digest(self) -> str:
        return hashlib.sha256(repr((self.family, self.A, self.B)).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class FlowResult:
    y: np.ndarray
    jac: np.ndarray


def steps_for(field: GrowthField, span: float) -> int:
    return max(1, int(math.ceil(abs(span) * field.A / STEP_RULE)))


def flow(field: GrowthField, s, t, v) -> FlowResult:
    """Y(s; t, v) and J(s; t, v), integrating from time t (where Y = v) to time s.

    s, t and v broadcast against each other; every element uses the same number
    of steps, chosen from the longest span so that step * A <= 1/16 everywhere.
    """
    s, t, v = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float),
                                  np.asarray(v, dtype=float))
    if np.any(v <= 0):
        raise DomainError("characteristics start from positive volumes only")
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("characteristic times must be nonnegative")
    span = s - t
    steps = steps_for(field, float(np.max(np.abs(span))) if span.size else 0.0)
    h = span / steps

    def rhs(tau, y):
        return field.rate(tau, y), field.slope(tau, y)

    y = v.astype(float).copy()
    log_j = np.zeros_like(y)
    tau = t.astype(float).copy()
    if not field.is_zero:
        for _ in range(steps):
            k1y, k1j = rhs(tau, y)
            k2y, k2j = rhs(tau + h / 2, y + h * k1y / 2)
            k3y, k3j = rhs(tau + h / 2, y + h * k2y / 2)
            k4y, k4j = rhs(tau + h, y + h * k3y)
            y = y + h * (k1y + 2 * k2y + 2 * k3y + k4y) / 6
            log_j = log_j + h * (k1j + 2 * k2j + 2 * k3j + k4j) / 6
            tau = tau + h
    if np.any(y <= 0):
        raise FlowError(f"characteristic reached nonpositive volume {float(np.min(y)):g}")
    jac = np.exp(log_j)
    if y.ndim == 0:
        return FlowResult(float(y), float(jac))
    return FlowResult(y, jac)


@dataclass(frozen=True)
class GrowthReport:
    ok: bool
    worst: Dict[str, float]
    checks: Dict[str, bool]

    def as_text(self) -> str:
        lines = [f"ok = {str(self.ok).lower()}"]
        lines += [f"check.{name} = {str(passed).lower()}" for name, passed in self.checks.items()]
        lines += [f"worst.{key} = {value}" if isinstance(value, str) else f"worst.{key} = {value:.12g}"
                  for key, value in self.worst.items()]
        return "\n".join(lines) + "\n"


def default_growth_samples(horizon: float = 2.0, points: int = 41) -> Tuple[np.ndarray, np.ndarray]:
    times = np.linspace(0.0, horizon, 5)
    volumes = np.concatenate([[0.0], np.geomspace(1e-6, 1e4, points)])
    t, v = np.meshgrid(times, volumes, indexing="ij")
    return t.ravel(), v.ravel()


def verify_growth_assumptions(field: GrowthField,
                              samples: Optional[Tuple[Iterable[float], Iterable[float]]] = None) -> GrowthReport:
    """Sampled check of g(t,0) = 0, g >= 0, |g| <= A v, |d_v g| < A, |d_v^2 g| < B"""
    if samples is None:
        samples = default_growth_samples()
    t = np.asarray(list(samples[0]), dtype=float)
    v = np.asarray(list(samples[1]), dtype=float)

    g = field.rate(t, v)
    at_zero = field.rate(t, np.zeros_like(t))
    h = _fd_step(v)
    centre = np.maximum(v, h)
    g_plus = field.rate(t, centre + h)
    g_mid = field.rate(t, centre)
    g_minus = field.rate(t, centre - h)
    slope = np.abs(g_plus - g_minus) / (2 * h)
    curvature = np.abs(g_plus - 2 * g_mid + g_minus) / h ** 2

    order = np.lexsort((v, t))
    ts, vs, gs = t[order], v[order], g[order]
    same_t = (ts[1:] == ts[:-1]) & (vs[1:] != vs[:-1])
    secant = np.zeros(0)
    if np.any(same_t):
        secant = np.abs(gs[1:][same_t] - gs[:-1][same_t]) / np.abs(vs[1:][same_t] - vs[:-1][same_t])

    bound_a = field.A - STRICT_MARGIN
    bound_b = field.B - STRICT_MARGIN
    positive = v > 0
    growth_ratio = np.abs(g[positive]) / v[positive]
    # ordered so that ties report the derivative bounds first
    candidates = [
        ("slope", slope, bound_a, t, v),
        ("curvature", curvature, bound_b, t, v),
        ("linear_bound", growth_ratio, field.A + STRICT_MARGIN, t[positive], v[positive]),
        ("secant", secant, field.A + STRICT_MARGIN, ts[1:][same_t], vs[1:][same_t]),
        ("vanishes_at_zero", np.abs(at_zero), 1e-12, t, np.zeros_like(t)),
        ("nonnegative", -g, 0.0, t, v),
    ]
    checks: Dict[str, bool] = {}
    worst = None
    worst_score = -np.inf
    for name, value, bound, times, volumes in candidates:
        checks[name] = bool(np.all(value <= bound))
        if checks[name] or value.size == 0:
            continue
        i = int(np.argmax(value))
        score = value[i] / bound if bound > 0 else np.inf
        if score > worst_score:
            worst_score = score
            worst = {"check": name, "t": float(times[i]), "v": float(volumes[i]),
                     "value": float(value[i]), "bound": float(bound)}
    ok = worst is None
    if ok:
        i = int(np.argmax(slope))
        worst = {"check": "slope", "t": float(t[i]), "v": float(v[i]), "value": float(slope[i]), "bound": bound_a}
    else:
        logger.warning("growth assumptions fail: %s", worst)
    return GrowthReport(ok=ok, worst=worst, checks=checks)


@dataclass(frozen=True)
class FlowPropertyReport:
    ok: bool
    trials: int
    failures: Dict[str, int]
    max_error: Dict[str, float]

    def as_text(self) -> str:
        lines = [f"ok = {str(self.ok).lower()}", f"trials = {self.trials}"]
        lines += [f"failures.{k} = {v}" for k, v in self.failures.items()]
        lines += [f"max_error.{k} = {v:.12g}" for k, v in self.max_error.items()]
        return "\n".join(lines) + "\n"


def flow_property_suite(field: GrowthField, trials: int = 1000, seed: int = 0, horizon: float = 1.0,
                        rtol: float = 1e-6, inverse_tol: float = 1e-8, jacobian_tol: float = 1e-5) -> FlowPropertyReport:
    """Randomised check of the characteristic bounds, the inverse identity and the Jacobian"""
    rng = np.random.default_rng(seed)
    A = field.A
    v = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), trials))
    t = rng.uniform(0.0, horizon, trials)
    s1 = t * rng.uniform(0.0, 1.0, trials)
    s2 = s1 + (t - s1) * rng.uniform(0.0, 1.0, trials)
    s_fwd = t + rng.uniform(0.0, horizon, trials)

    # backward monotone bound: Y(s2) <= Y(s1) e^{A (s2 - s1)} for s1 <= s2 <= t
    y1 = flow(field, s1, t, v).y
    y2 = flow(field, s2, t, v).y
    err_monotone = (y2 - y1 * np.exp(A * (s2 - s1))) / (y1 * np.exp(A * (s2 - s1)))

    # forward bound and forward monotonicity for s >= t
    forward = flow(field, s_fwd, t, v)
    err_forward = (forward.y - v * np.exp(A * (s_fwd - t))) / (v * np.exp(A * (s_fwd - t)))
    err_increase = (v - forward.y) / v

    # speed bound along the curve started at time 0
    from_zero = flow(field, s_fwd, 0.0, v).y
    speed = np.abs(field.rate(s_fwd, from_zero))
    err_speed = (speed - A * v * np.exp(A * s_fwd)) / (A * v * np.exp(A * s_fwd))

    # Y(t; s, Y(s; t, v)) = v
    back = flow(field, t, s_fwd, forward.y).y
    err_inverse = np.abs(back - v) / np.maximum(v, 1.0)

    # J against a centered difference of Y in v
    dv = 1e-5 * v
    y_plus = flow(field, s1, t, v + dv).y
    y_minus = flow(field, s1, t, v - dv).y
    fd = (y_plus - y_minus) / (2 * dv)
    jac = flow(field, s1, t, v).jac
    err_jacobian = np.abs(fd - jac) / jac

    errors = {
        "monotone_backward": err_monotone,
        "forward_bound": err_forward,
        "speed_bound": err_speed,
        "forward_increase": err_increase,
        "inverse": err_inverse,
        "jacobian": err_jacobian,
    }
    tolerances = {"inverse": inverse_tol, "jacobian": jacobian_tol}
    failures = {name: int(np.sum(err > tolerances.get(name, rtol))) for name, err in errors.items()}
    max_error = {name: float(np.max(err)) for name, err in errors.items()}
    ok = not any(failures.values())
    if not ok:
        logger.warning("flow property failures: %s", {k: c for k, c in failures.items() if c})
    return FlowPropertyReport(ok=ok, trials=trials, failures=failures, max_error=max_error)


def family_from_name(name: str, params) -> GrowthFamily:
    params = [float(p) for p in (params or [])]
    key = name.strip().lower()
    try:
        if key == "zero":
            return Zero()
        if key == "linear":
            return Linear(params[0])
        if key == "saturating":
            return Saturating(params[0], params[1])
    except IndexError:
        raise DomainError(f"growth family {name!r} is missing parameters (got {params})")
    raise DomainError(f"unknown growth family {name!r}; choose from ['linear', 'saturating', 'zero']")
