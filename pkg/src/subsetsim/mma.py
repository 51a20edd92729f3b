"""Modified Metropolis sampler for conditional distributions pi(. | g > b).

Each step proposes every coordinate independently from a univariate
proposal and accepts it against the corresponding prior marginal; the
assembled candidate then replaces the current state only if it stays in
the conditioning domain. The model is evaluated at most once per step and
not at all when every coordinate was rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
import numpy as np

from .errors import DomainError
from .mathkernel import RngStream, std_normal_logpdf
from .model import PerformanceModel

__all__ = [
    "ChainResult",
    "ChainState",
    "ChainStats",
    "ProposalSpec",
    "ShiftedUniformProposal",
    "StandardNormalMarginals",
    "component_update",
    "mma_step",
    "mmh_ratio",
    "run_chain",
]


# ---------------------------------------------------------------------------
# Proposals and marginals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProposalSpec:
    """Symmetric random-walk proposal applied to each coordinate.

    ``sigma`` is the standard deviation for ``"gaussian"`` and the
    half-width for ``"uniform"``.
    """

    family: str = "gaussian"
    sigma: float = 1.0

    def __post_init__(self):
        if self.family not in ("gaussian", "uniform"):
            raise DomainError(f"unknown proposal family {self.family!r}")
        if not self.sigma > 0 or not math.isfinite(self.sigma):
            raise DomainError(f"proposal spread must be positive, got {self.sigma!r}")

    symmetric = True

    def sample(self, current: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.family == "gaussian":
            return current + self.sigma * rng.standard_normal(current.shape)
        return current + rng.uniform(-self.sigma, self.sigma, current.shape)

    def logpdf(self, x, given):
        """log S(x | given)."""
        diff = np.asarray(x, float) - np.asarray(given, float)
        if self.family == "gaussian":
            z = diff / self.sigma
            return -0.5 * z * z - math.log(self.sigma) - 0.5 * math.log(2 * math.pi)
        return np.where(np.abs(diff) <= self.sigma, -math.log(2 * self.sigma), -np.inf)

    def with_sigma(self, sigma: float) -> "ProposalSpec":
        return ProposalSpec(self.family, sigma)


@dataclass(frozen=True)
class ShiftedUniformProposal:
    """Asymmetric proposal U[current - left, current + right]."""

    left: float
    right: float
    symmetric = False

    def __post_init__(self):
        if not (self.left >= 0 and self.right >= 0 and self.left + self.right > 0):
            raise DomainError("shifted uniform proposal needs a positive width")

    def sample(self, current, rng):
        return current + rng.uniform(-self.left, self.right, np.shape(current))

    def logpdf(self, x, given):
        diff = np.asarray(x, float) - np.asarray(given, float)
        inside = (diff >= -self.left) & (diff <= self.right)
        return np.where(inside, -math.log(self.left + self.right), -np.inf)


class StandardNormalMarginals:
    """i.i.d. N(0, 1) marginals, the default prior."""

    def logpdf(self, x):
        return std_normal_logpdf(x)


# ---------------------------------------------------------------------------
# Chain bookkeeping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainState:
    theta: np.ndarray
    g_value: float

    def __eq__(self, other):
        return (
            isinstance(other, ChainState)
            and self.g_value == other.g_value
            and np.array_equal(self.theta, other.theta)
        )


@dataclass
class ChainStats:
    length: int
    dimension: int
    candidate_acceptances: int = 0
    component_acceptances: np.ndarray = field(default=None)
    evaluations: int = 0

    def __post_init__(self):
        if self.component_acceptances is None:
            self.component_acceptances = np.zeros(self.dimension, dtype=np.int64)

    @property
    def transitions(self) -> int:
        return self.length - 1

    @property
    def acceptance_rate(self) -> float:
        return self.candidate_acceptances / self.transitions if self.transitions else float("nan")

    @property
    def component_acceptance_rate(self) -> np.ndarray:
        if not self.transitions:
            return np.full(self.dimension, np.nan)
        return self.component_acceptances / self.transitions


@dataclass
class ChainResult:
    thetas: np.ndarray  # (length, d)
    g_values: np.ndarray  # (length,)
    stats: ChainStats

    @property
    def states(self) -> list[ChainState]:
        return [ChainState(t, float(g)) for t, g in zip(self.thetas, self.g_values)]

    def __len__(self):
        return len(self.g_values)


# ---------------------------------------------------------------------------
# Transition kernel
# ---------------------------------------------------------------------------


def mmh_ratio(candidate_k, current_k, marginal, proposal) -> np.ndarray:
    """Per-coordinate Metropolis-Hastings acceptance probability.

    For symmetric proposals the proposal terms cancel and this reduces to
    ``min(1, pi(candidate) / pi(current))``.
    """
    log_r = marginal.logpdf(candidate_k) - marginal.logpdf(current_k)
    if not getattr(proposal, "symmetric", False):
        fwd = proposal.logpdf(candidate_k, current_k)
        rev = proposal.logpdf(current_k, candidate_k)
        with np.errstate(invalid="ignore"):
            log_r = log_r + rev - fwd
        # zero forward density cannot arise from a sampled candidate; guarded anyway
        numerator_ok = np.isfinite(marginal.logpdf(candidate_k)) & np.isfinite(rev)
        log_r = np.where(np.isneginf(fwd) & numerator_ok, 0.0, log_r)
    with np.errstate(over="ignore"):
        out = np.minimum(1.0, np.exp(np.minimum(log_r, 0.0)))
    return out


def component_update(theta, xi_tilde, u, marginal, proposal) -> tuple[np.ndarray, np.ndarray]:
    """Accept coordinate ``k`` of ``xi_tilde`` when ``u[k]`` is below its ratio."""
    accept = np.asarray(u) < mmh_ratio(xi_tilde, theta, marginal, proposal)
    return np.where(accept, xi_tilde, theta), accept


def mma_step(
    current: ChainState,
    proposal,
    marginals,
    level_threshold: float,
    model: PerformanceModel,
    rng: np.random.Generator,
) -> tuple[ChainState, bool, np.ndarray]:
    """One Modified Metropolis transition.

    Returns the next state, whether a new candidate was accepted, and the
    per-coordinate acceptance mask. Draw order per step: all proposal
    variates, then all uniforms.
    """
    theta = current.theta
    xi_tilde = proposal.sample(theta, rng)
    u = rng.random(theta.shape)
    xi, comp_accept = component_update(theta, xi_tilde, u, marginals, proposal)
    if not comp_accept.any():
        return current, False, comp_accept
    g_xi = model.evaluate(xi)
    if g_xi > level_threshold:
        return ChainState(xi, g_xi), True, comp_accept
    return current, False, comp_accept


def run_chain(
    seed_state: ChainState,
    length: int,
    proposal,
    level_threshold: float,
    model: PerformanceModel,
    stream: RngStream | np.random.Generator,
    marginals=None,
) -> ChainResult:
    """Generate ``length`` states starting from (and including) the seed."""
    if length < 1:
        raise DomainError("chain length must be >= 1")
    if not seed_state.g_value > level_threshold:
        raise DomainError("seed state lies outside the conditioning domain")
    marginals = marginals or StandardNormalMarginals()
    rng = stream.generator() if isinstance(stream, RngStream) else stream
    d = len(seed_state.theta)
    thetas = np.empty((length, d))
    g_values = np.empty(length)
    stats = ChainStats(length=length, dimension=d)
    state = seed_state
    thetas[0], g_values[0] = state.theta, state.g_value
    for i in range(1, length):
        state, accepted, comp = mma_step(state, proposal, marginals, level_threshold, model, rng)
        stats.candidate_acceptances += accepted
        stats.component_acceptances += comp
        stats.evaluations += bool(comp.any())
        thetas[i], g_values[i] = state.theta, state.g_value
    return ChainResult(thetas, g_values, stats)
