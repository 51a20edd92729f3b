"""Performance models g: R^d -> R and the analytic benchmark problems.

A model fails at ``theta`` when ``g(theta) > threshold``. User-supplied
systems plug in by constructing :class:`PerformanceModel` directly.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DomainError, ModelError
from .mathkernel import chi2_inv_sf, std_normal_inv_cdf

__all__ = [
    "EvaluationCounter",
    "PerformanceModel",
    "analytic_intermediate_thresholds",
    "ball_problem",
    "linear_problem",
]


class EvaluationCounter:
    """Thread-safe count of performance-function evaluations."""

    def __init__(self):
        self._count = 0
        self._lock = threading.Lock()

    def add(self, n: int = 1) -> None:
        with self._lock:
            self._count += n

    @property
    def count(self) -> int:
        return self._count

    def __repr__(self):
        return f"EvaluationCounter({self._count})"


@dataclass
class PerformanceModel:
    """The system under study.

    Parameters
    ----------
    dimension : int
        Number of independent standard-normal inputs.
    func : callable
        Maps a length-``dimension`` array to a real performance value.
    threshold : float
        Critical value ``b``; failure is ``g(theta) > b``.
    exact_pf : float, optional
        Known failure probability, when the problem is analytic.
    batch_func : callable, optional
        Vectorised version of ``func`` taking an ``(n, dimension)`` array.
    """

    dimension: int
    func: Callable[[np.ndarray], float]
    threshold: float
    exact_pf: Optional[float] = None
    name: str = "external"
    batch_func: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: dict = field(default_factory=dict)
    counter: EvaluationCounter = field(default_factory=EvaluationCounter)

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ConfigError("model dimension must be a positive integer")
        self.dimension = int(self.dimension)
        if math.isnan(self.threshold):
            raise ConfigError("model threshold must not be NaN")

    def evaluate(self, theta: np.ndarray) -> float:
        self.counter.add(1)
        value = float(self.func(theta))
        if not math.isfinite(value):
            raise ModelError(f"performance function returned non-finite value {value!r}")
        return value

    def evaluate_many(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.atleast_2d(thetas)
        if self.batch_func is not None:
            self.counter.add(len(thetas))
            values = np.asarray(self.batch_func(thetas), dtype=float)
            if not np.all(np.isfinite(values)):
                raise ModelError("performance function returned non-finite values")
            return values
        return np.array([self.evaluate(t) for t in thetas])

    def is_failure(self, g_value: float) -> bool:
        return g_value > self.threshold

    @property
    def evaluations(self) -> int:
        return self.counter.count


def _check_problem_args(d, pf_target):
    if int(d) != d or d < 1:
        raise ConfigError(f"dimension must be a positive integer, got {d!r}")
    if not 0.0 < pf_target < 1.0:
        raise ConfigError(f"pF_target must lie in (0, 1), got {pf_target!r}")


def linear_problem(d: int, pf_target: float, direction: Optional[np.ndarray] = None) -> PerformanceModel:
    """Half-space failure domain ``<theta, e> > Phi^{-1}(1 - pF)``.

    ``direction`` defaults to the normalised all-ones vector and is normalised.
    """
    _check_problem_args(d, pf_target)
    d = int(d)
    if direction is None:
        e = np.full(d, 1.0 / math.sqrt(d))
    else:
        e = np.asarray(direction, dtype=float)
        if e.shape != (d,) or not np.linalg.norm(e) > 0:
            raise ConfigError("direction must be a nonzero vector of length d")
        e = e / np.linalg.norm(e)
    b = -std_normal_inv_cdf(pf_target)
    return PerformanceModel(
        dimension=d,
        func=lambda theta: np.dot(theta, e),
        batch_func=lambda thetas: thetas @ e,
        threshold=b,
        exact_pf=pf_target,
        name="linear",
        params={"d": d, "pF_target": pf_target, "direction": e},
    )


def ball_problem(d: int, pf_target: float) -> PerformanceModel:
    """Exterior of a ball: ``||theta||^2 > chi2_d^{-1}(1 - pF)``."""
    _check_problem_args(d, pf_target)
    d = int(d)
    b = chi2_inv_sf(pf_target, d)
    return PerformanceModel(
        dimension=d,
        func=lambda theta: np.dot(theta, theta),
        batch_func=lambda thetas: np.einsum("ij,ij->i", thetas, thetas),
        threshold=b,
        exact_pf=pf_target,
        name="ball",
        params={"d": d, "pF_target": pf_target},
    )


def analytic_intermediate_thresholds(kind: str, d: int, p0: float, m: int) -> list[float]:
    """Thresholds ``b_1 < ... < b_m`` with ``P(F_j) = p0**j`` exactly.

    For ``kind="linear"`` these are projections on the unit normal; for
    ``kind="ball"`` they are squared radii (matching ``ball_problem``).
    """
    if not 0.0 < p0 < 1.0:
        raise DomainError("p0 must lie in (0, 1)")
    if m < 1:
        raise DomainError("m must be >= 1")
    out = []
    for j in range(1, m + 1):
        tail = p0**j
        if kind == "linear":
            out.append(-std_normal_inv_cdf(tail))
        elif kind == "ball":
            out.append(chi2_inv_sf(tail, d))
        else:
            raise ConfigError(f"unknown problem kind {kind!r}")
    return out


def exact_conditional_sampler(kind: str, d: int, threshold: float, rng: np.random.Generator, n: int,
                              direction: Optional[np.ndarray] = None) -> np.ndarray:
    """Draw ``n`` exact samples of N(0, I_d) conditioned on ``g > threshold``.

    Used to seed chains at an isolated level without running the levels
    below it.
    """
    from scipy import special, stats

    if kind == "linear":
        if direction is None:
            e = np.full(d, 1.0 / math.sqrt(d))
        else:
            e = np.asarray(direction, float) / np.linalg.norm(direction)
        z = rng.standard_normal((n, d))
        # project out e, then set the e-coordinate from the truncated tail
        z -= np.outer(z @ e, e)
        tail = special.ndtr(-threshold)
        u = rng.random(n)
        s = -special.ndtri(u * tail)
        return z + np.outer(s, e)
    if kind == "ball":
        z = rng.standard_normal((n, d))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        tail = stats.chi2.sf(threshold, d)
        u = rng.random(n)
        r2 = stats.chi2.isf(u * tail, d)
        return z * np.sqrt(r2)[:, None]
    raise ConfigError(f"no exact conditional sampler for kind {kind!r}")
