#!/usr/bin/env python3
"""
Coagulation Kernels
-------------------
Kernel families, the singular envelope check

    K(v1,v2) <= k (v1 v2)^-beta        on (0,1)^2
                k v2 v1^-beta          on (0,1) x (1,inf)
                k (v1 + v2)            on (1,inf)^2

and the truncated kernels K_n = K * chi_(1/n,n)(v1) * chi_(1/n,n)(v2) with
their suprema beta_n.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np

from errors import DomainError

logger = logging.getLogger(__name__)

# 200 x 200 log grid plus a 5x refinement around the best cell
USER_SUP_SAMPLES = 200
USER_SUP_REFINE = 5
ENVELOPE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Smoluchowski:
    def rate(self, v1, v2):
        return (np.cbrt(v1) + np.cbrt(v2)) * (1.0 / np.cbrt(v1) + 1.0 / np.cbrt(v2))


@dataclass(frozen=True)
class Granulation:
    theta1: float
    theta2: float

    def __post_init__(self):
        if self.theta1 > 1 or self.theta2 < 0:
            raise DomainError(f"granulation kernel needs theta1 <= 1 and theta2 >= 0, got {self.theta1}, {self.theta2}")

    def rate(self, v1, v2):
        return (v1 + v2) ** self.theta1 / (v1 * v2) ** self.theta2


@dataclass(frozen=True)
class StirredFroth:
    theta: float

    def __post_init__(self):
        if self.theta <= 0:
            raise DomainError(f"stirred-froth kernel needs theta > 0, got {self.theta}")

    def rate(self, v1, v2):
        return (v1 * v2) ** (-self.theta)


@dataclass(frozen=True)
class Constant:
    kappa: float

    def __post_init__(self):
        if self.kappa < 0:
            raise DomainError(f"constant kernel needs kappa >= 0, got {self.kappa}")

    def rate(self, v1, v2):
        return np.full(np.broadcast(v1, v2).shape, float(self.kappa))


@dataclass(frozen=True)
class UserRate:
    fn: Callable = field(compare=False)
    name: str = "user"

    def rate(self, v1, v2):
        return np.asarray(self.fn(v1, v2), dtype=float) * np.ones(np.broadcast(v1, v2).shape)


KernelFamily = Union[Smoluchowski, Granulation, StirredFroth, Constant, UserRate]


@dataclass(frozen=True)
class KernelSpec:
    family: KernelFamily
    beta: float
    k_env: float

    def __post_init__(self):
        if self.beta <= 0 or self.k_env <= 0:
            raise DomainError(f"kernel needs beta > 0 and k_env > 0, got beta={self.beta}, k_env={self.k_env}")

    def digest(self) -> str:
        return hashlib.sha256(repr((self.family, self.beta, self.k_env)).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class TruncatedKernel:
    base: KernelSpec
    n: int
    beta_n: float

    @property
    def lower(self) -> float:
        return 1.0 / self.n

    @property
    def upper(self) -> float:
        return float(self.n)


@dataclass(frozen=True)
class EnvelopeReport:
    ok: bool
    worst_ratio: float
    witness: Tuple[float, float]
    samples: int

    def as_text(self) -> str:
        return "\n".join([
            f"ok = {str(self.ok).lower()}",
            f"worst_ratio = {self.worst_ratio:.12g}",
            f"witness_v1 = {self.witness[0]:.12g}",
            f"witness_v2 = {self.witness[1]:.12g}",
            f"samples = {self.samples}",
        ]) + "\n"


def evaluate(spec: KernelSpec, v1, v2):
    """Kernel rate K(v1, v2); volumes must be positive"""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    if np.any(v1 <= 0) or np.any(v2 <= 0):
        raise DomainError("kernel is defined for positive volumes only")
    result = spec.family.rate(v1, v2)
    if np.ndim(result) == 0:
        return float(result)
    return result


def envelope(v1, v2, beta: float, k_env: float):
    """Three-regime bound; a volume equal to 1 counts as large"""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    small = np.minimum(v1, v2)
    large = np.maximum(v1, v2)
    both_small = large < 1.0
    mixed = (small < 1.0) & (large >= 1.0)
    return np.where(
        both_small,
        k_env * (v1 * v2) ** (-beta),
        np.where(mixed, k_env * large * small ** (-beta), k_env * (v1 + v2)),
    )


def regime_sample_grid(points: int = 50, lo: float = 1e-4, hi: float = 1e4) -> Tuple[np.ndarray, np.ndarray]:
    """Log grid on (lo, hi)^2 covering all three regimes"""
    axis = np.geomspace(lo, hi, points)
    v1, v2 = np.meshgrid(axis, axis, indexing="ij")
    return v1.ravel(), v2.ravel()


def verify_envelope(spec: KernelSpec, sample_grid: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> EnvelopeReport:
    if sample_grid is None:
        sample_grid = regime_sample_grid()
    v1, v2 = (np.asarray(a, dtype=float).ravel() for a in sample_grid)
    ratio = evaluate(spec, v1, v2) / envelope(v1, v2, spec.beta, spec.k_env)
    worst = int(np.argmax(ratio))
    report = EnvelopeReport(
        ok=bool(ratio[worst] <= 1.0 + ENVELOPE_TOLERANCE),
        worst_ratio=float(ratio[worst]),
        witness=(float(v1[worst]), float(v2[worst])),
        samples=int(v1.size),
    )
    if not report.ok:
        logger.warning("envelope violated for %s: ratio %.6g at %s", spec.family, report.worst_ratio, report.witness)
    return report


def fit_envelope_constant(family: KernelFamily, beta: float, points: int = 400,
                          lo: float = 1e-6, hi: float = 1e6) -> float:
    """Smallest k making the envelope hold on a dense log grid (sampled, not certified)"""
    v1, v2 = regime_sample_grid(points, lo, hi)
    return float(np.max(family.rate(v1, v2) / envelope(v1, v2, beta, 1.0)))


def default_envelope_constant(family: KernelFamily, beta: float) -> float:
    """Envelope constants for the built-in families at their natural beta"""
    if isinstance(family, Smoluchowski):
        return 4.0
    if isinstance(family, StirredFroth):
        return 1.0
    if isinstance(family, Constant):
        return max(float(family.kappa), np.finfo(float).tiny)
    if isinstance(family, Granulation) and family.theta1 >= 0:
        return max(1.0, 2.0 ** family.theta1)
    k = fit_envelope_constant(family, beta)
    logger.info("envelope constant for %s fitted by sampling: k = %.6g (not certified)", family, k)
    return k


def natural_beta(family: KernelFamily) -> float:
    """Singularity exponent a family is usually paired with; 0.25 for kernels bounded near 0"""
    if isinstance(family, Smoluchowski):
        return 1.0 / 3.0
    if isinstance(family, StirredFroth):
        return float(family.theta)
    if isinstance(family, Granulation) and family.theta2 > 0:
        return float(family.theta2)
    return 0.25


def _corner_sup(spec: KernelSpec, n: int) -> float:
    # the closed-form families are convex in (log v1, log v2), so the sup over the box is at a corner
    corners = np.array([1.0 / n, float(n)])
    v1, v2 = np.meshgrid(corners, corners, indexing="ij")
    return float(np.max(spec.family.rate(v1, v2)))


def _sampled_sup(spec: KernelSpec, n: int) -> float:
    axis = np.geomspace(1.0 / n, float(n), USER_SUP_SAMPLES)
    v1, v2 = np.meshgrid(axis, axis, indexing="ij")
    values = spec.family.rate(v1, v2)
    i, j = np.unravel_index(int(np.argmax(values)), values.shape)
    best = float(values[i, j])
    lo1, hi1 = axis[max(i - 1, 0)], axis[min(i + 1, axis.size - 1)]
    lo2, hi2 = axis[max(j - 1, 0)], axis[min(j + 1, axis.size - 1)]
    fine1 = np.geomspace(lo1, hi1, 2 * USER_SUP_REFINE + 1)
    fine2 = np.geomspace(lo2, hi2, 2 * USER_SUP_REFINE + 1)
    f1, f2 = np.meshgrid(fine1, fine2, indexing="ij")
    best = max(best, float(np.max(spec.family.rate(f1, f2))))
    logger.debug("sampled sup of %s on (1/%d,%d)^2: %.6g from %d points",
                 spec.family, n, n, best, axis.size ** 2 + fine1.size * fine2.size)
    return best


def sup_truncated(spec: KernelSpec, n: int) -> float:
    """beta_n = sup of K over (1/n, n)^2"""
    if n < 2:
        raise DomainError(f"truncation index must be >= 2, got {n}")
    if isinstance(spec.family, UserRate):
        return _sampled_sup(spec, n)
    if isinstance(spec.family, Granulation) and spec.family.theta1 < 0:
        # (v1+v2)^theta1 with theta1 < 0 is not log-convex
        return max(_corner_sup(spec, n), _sampled_sup(spec, n))
    return _corner_sup(spec, n)


def truncate(spec: KernelSpec, n: int) -> TruncatedKernel:
    if int(n) != n or n < 2:
        raise DomainError(f"truncation index must be an integer >= 2, got {n}")
    n = int(n)
    return TruncatedKernel(base=spec, n=n, beta_n=sup_truncated(spec, n))


def evaluate_truncated(kernel: TruncatedKernel, v1, v2):
    """K_n(v1, v2); exactly zero unless both volumes lie in (1/n, n)"""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    rate = np.asarray(evaluate(kernel.base, v1, v2), dtype=float)
    inside = (v1 > kernel.lower) & (v1 < kernel.upper) & (v2 > kernel.lower) & (v2 < kernel.upper)
    result = np.where(inside, rate, 0.0)
    if np.ndim(result) == 0:
        return float(result)
    return result


def family_from_name(name: str, params) -> KernelFamily:
    """Kernel family from its config name and numeric parameters"""
    params = [float(p) for p in (params or [])]
    builders: Dict[str, Callable[[], KernelFamily]] = {
        "smoluchowski": lambda: Smoluchowski(),
        "granulation": lambda: Granulation(params[0], params[1]),
        "stirred_froth": lambda: StirredFroth(params[0]),
        "constant": lambda: Constant(params[0]),
    }
    key = name.strip().lower().replace("-", "_")
    if key not in builders:
        raise DomainError(f"unknown kernel family {name!r}; choose from {sorted(builders)}")
    try:
        return builders[key]()
    except IndexError:
        raise DomainError(f"kernel family {name!r} is missing parameters (got {params})")
