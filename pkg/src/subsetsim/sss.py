"""Subset Simulation driver and its efficiency diagnostics.

Level 0 is plain Monte Carlo from the standard normal prior. Each further
level picks the threshold that leaves ``N * p0`` of the current samples
above it, and grows one Modified Metropolis chain from each of those
samples so the level again holds ``N`` samples of the new conditional
distribution. The run stops once at least a fraction ``p0`` of the samples
exceed the critical threshold.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import ConfigError, DegenerateLevelError, DomainError, UndefinedCorrelationError
from .mathkernel import RngStream
from .mma import ChainResult, ChainState, ProposalSpec, run_chain
from .model import (
    PerformanceModel,
    analytic_intermediate_thresholds,
    ball_problem,
    exact_conditional_sampler,
    linear_problem,
)

log = logging.getLogger(__name__)

__all__ = [
    "LevelRecord",
    "ScalingConfig",
    "SigmaScanRow",
    "SsConfig",
    "SubsetRunResult",
    "adapt_spread",
    "cov_vs_p0",
    "estimate_gamma",
    "level_cov",
    "optimal_p0",
    "optimal_spread_scan",
    "p0_efficiency_factor",
    "run_subset_simulation",
    "select_threshold",
    "ss_estimate",
]


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class ScalingConfig:
    """Proposal spread policy.

    ``mode="fixed"`` uses ``sigmas[j-1]`` at level ``j`` (the last entry is
    repeated). ``mode="adaptive"`` starts every level at ``sigma0`` and
    rescales by ``step`` between batches of ``batch`` chains until the
    batch acceptance rate falls inside ``band``.
    """

    mode: str = "adaptive"
    sigmas: tuple = (1.0,)
    sigma0: float = 1.0
    band: tuple = (0.30, 0.50)
    batch: Optional[int] = None
    step: float = 1.3
    family: str = "gaussian"

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ConfigError(f"scaling mode must be 'fixed' or 'adaptive', got {self.mode!r}")
        self.sigmas = tuple(float(s) for s in self.sigmas)
        if not self.sigmas or any(not s > 0 for s in self.sigmas):
            raise ConfigError("fixed spreads must be positive")
        if not self.sigma0 > 0:
            raise ConfigError("sigma0 must be positive")
        lo, hi = self.band
        if not 0.0 <= lo < hi <= 1.0:
            raise ConfigError("acceptance band must satisfy 0 <= low < high <= 1")
        self.band = (float(lo), float(hi))
        if not self.step > 1.0:
            raise ConfigError("step factor must exceed 1")
        if self.batch is not None and self.batch < 1:
            raise ConfigError("batch size must be >= 1")
        if self.family not in ("gaussian", "uniform"):
            raise ConfigError(f"unknown proposal family {self.family!r}")

    def sigma_for_level(self, j: int) -> float:
        if self.mode == "adaptive":
            return self.sigma0
        return self.sigmas[min(j - 1, len(self.sigmas) - 1)]


@dataclass
class SsConfig:
    p0: float = 0.1
    n_samples: int = 1000
    max_levels: int = 20
    scaling: ScalingConfig = field(default_factory=ScalingConfig)
    master_seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if not 0.0 < self.p0 < 1.0:
            raise ConfigError(f"p0 must lie in (0, 1), got {self.p0!r}")
        if int(self.n_samples) != self.n_samples or self.n_samples < 2:
            raise ConfigError("N must be an integer >= 2")
        self.n_samples = int(self.n_samples)
        if self.n_samples * self.p0 < 0.5:
            raise ConfigError("N * p0 must be at least 1 after rounding")
        if self.n_chains >= self.n_samples:
            raise ConfigError("N * p0 must be smaller than N")
        if self.max_levels < 0:
            raise ConfigError("max_levels must be >= 0")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("master seed must be a 64-bit unsigned integer")
        if isinstance(self.scaling, dict):
            self.scaling = ScalingConfig(**self.scaling)
        if not math.isclose(self.n_samples * self.p0, self.n_chains) or not math.isclose(
            1.0 / self.p0, round(1.0 / self.p0)
        ):
            warnings.warn(
                f"N*p0={self.n_samples * self.p0:g} and 1/p0={1 / self.p0:g} are not both integers; "
                f"using {self.n_chains} chains of near-equal length",
                stacklevel=2,
            )

    @property
    def n_chains(self) -> int:
        return max(1, int(round(self.n_samples * self.p0)))

    @property
    def chain_length(self) -> int:
        return max(1, int(round(1.0 / self.p0)))

    @property
    def batch_size(self) -> int:
        if self.scaling.batch is not None:
            return self.scaling.batch
        return max(1, int(round(0.1 * self.n_chains)))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["scaling"]["sigmas"] = list(self.scaling.sigmas)
        out["scaling"]["band"] = list(self.scaling.band)
        return out


@dataclass
class LevelRecord:
    """Bookkeeping for one simulation stage.

    Stage ``j`` holds ``N`` samples of ``pi(. | g > conditioning_threshold)``;
    ``n`` of them exceed ``threshold`` (the next intermediate threshold, or
    the critical one at the last stage).
    """

    j: int
    conditioning_threshold: float
    threshold: float
    n: int
    n_samples: int
    g_values: np.ndarray
    sigma_schedule: list = field(default_factory=list)
    batch_rates: list = field(default_factory=list)
    rho: float = float("nan")
    gamma: float = 0.0
    evaluations: int = 0
    chain_lengths: list = field(default_factory=list)
    batches_to_band: Optional[int] = None

    @property
    def p_hat(self) -> float:
        return self.n / self.n_samples


@dataclass
class SubsetRunResult:
    levels: list
    p_hat: float
    total_evaluations: int
    config: SsConfig
    converged: bool = True
    critical_threshold: float = float("nan")

    @property
    def m(self) -> int:
        return len(self.levels)

    @property
    def counts(self) -> list[int]:
        return [rec.n for rec in self.levels]

    @property
    def n_failures(self) -> int:
        return self.levels[-1].n

    @property
    def no_failure_observed(self) -> bool:
        return self.n_failures == 0

    @property
    def n_samples(self) -> int:
        return self.config.n_samples

    def cov_estimate(self) -> float:
        """Single-run c.o.v. estimate, summing per-level squared c.o.v.s."""
        total = 0.0
        for rec in self.levels:
            if not 0 < rec.n < rec.n_samples:
                return float("nan")
            gamma = 0.0 if math.isnan(rec.gamma) else rec.gamma
            total += level_cov(rec.p_hat, rec.n_samples, gamma) ** 2
        return math.sqrt(total)


# ---------------------------------------------------------------------------
# Estimator pieces
# ---------------------------------------------------------------------------


def ss_estimate(counts: Sequence[int], n_samples: int) -> float:
    """Product of per-level fractions ``n_j / N`` (shared with the MAP estimate)."""
    out = 1.0
    for n in counts:
        out *= n / n_samples
    return out


def select_threshold(g_values, p0: float = None, n_seeds: int = None) -> tuple[float, np.ndarray]:
    """Adaptive intermediate threshold and the indices of the seeds above it.

    The threshold is the midpoint between the ``N - N*p0`` and
    ``N - N*p0 + 1`` order statistics and the seeds are the top ``N*p0``
    samples by ``(g, index)``. Repeated chain states can tie across the
    midpoint; the threshold then drops one ulp below the tied value so every
    seed strictly exceeds it, and the seed count stays ``N*p0``.
    """
    g = np.asarray(g_values, dtype=float)
    n = len(g)
    if n_seeds is None:
        if p0 is None:
            raise DomainError("give either p0 or n_seeds")
        n_seeds = int(round(n * p0))
    if not 1 <= n_seeds < n:
        raise DomainError(f"number of seeds must lie in [1, N), got {n_seeds}")
    order = np.argsort(g, kind="stable")
    sorted_g = g[order]
    if sorted_g[0] == sorted_g[-1]:
        raise DegenerateLevelError("all performance values are identical; cannot split the level")
    k = n - n_seeds
    lo_val, hi_val = sorted_g[k - 1], sorted_g[k]
    b = 0.5 * (lo_val + hi_val) if lo_val < hi_val else math.nextafter(lo_val, -math.inf)
    return b, order[k:]


def estimate_gamma(indicators) -> float:
    """Correlation factor of the level estimator from per-chain indicators.

    ``indicators`` is an ``(N_c, N_s)`` array of 0/1 values, one row per
    chain. Autocovariances at each lag are pooled over chains using the
    level-wide fraction as the mean.
    """
    ind = np.asarray(indicators, dtype=float)
    if ind.ndim != 2:
        raise DomainError("indicators must be a 2-D (chains x length) array")
    n_c, n_s = ind.shape
    n = n_c * n_s
    p = ind.mean()
    r0 = np.mean(ind * ind) - p * p
    if r0 <= 0.0:
        raise UndefinedCorrelationError("indicator sequences are constant; R(0) = 0")
    gamma = 0.0
    for i in range(1, n_s):
        r_i = np.sum(ind[:, : n_s - i] * ind[:, i:]) / (n - i * n_c) - p * p
        gamma += (1.0 - i / n_s) * r_i / r0
    return 2.0 * gamma


def level_cov(p_hat: float, n_samples: int, gamma: float) -> float:
    if not 0.0 < p_hat < 1.0:
        raise DomainError("level c.o.v. is undefined for p_hat in {0, 1}")
    gamma = max(gamma, 0.0)
    return math.sqrt((1.0 - p_hat) / (n_samples * p_hat) * (1.0 + gamma))


def adapt_spread(history: Sequence[float], sigma: float, band=(0.30, 0.50), step: float = 1.3) -> float:
    """Next proposal spread given the acceptance rate of the last batch."""
    if not history:
        raise DomainError("adapt_spread needs at least one completed batch")
    rate = history[-1]
    if math.isnan(rate):
        return sigma
    if rate < band[0]:
        return sigma / step
    if rate > band[1]:
        return sigma * step
    return sigma


def p0_efficiency_factor(p0):
    """The p0-dependent factor ``(1 - p0) / (p0 ln^2 p0)`` of the squared c.o.v."""
    p0 = np.asarray(p0, dtype=float)
    if np.any((p0 <= 0) | (p0 >= 1)):
        raise DomainError("p0 must lie in (0, 1)")
    out = (1.0 - p0) / (p0 * np.log(p0) ** 2)
    return float(out) if out.ndim == 0 else out


def cov_vs_p0(pf: float, n_total: float, gamma_bar: float, p0):
    """Approximate c.o.v. of the final estimate for a total budget ``n_total``."""
    p0_arr = np.asarray(p0, dtype=float)
    if not 0.0 < pf < 1.0 or np.any(p0_arr <= pf):
        raise DomainError("need 0 < pF < p0 < 1")
    if n_total <= 0 or gamma_bar < 0:
        raise DomainError("n_total must be positive and gamma_bar non-negative")
    out = np.sqrt(p0_efficiency_factor(p0_arr) * math.log(pf) ** 2 / n_total * (1.0 + gamma_bar))
    return float(out) if out.ndim == 0 else out


def optimal_p0(xatol: float = 1e-10) -> float:
    """Minimiser of :func:`p0_efficiency_factor` over (0, 1)."""
    res = optimize.minimize_scalar(
        p0_efficiency_factor, bounds=(1e-6, 1 - 1e-6), method="bounded", options={"xatol": xatol}
    )
    return float(res.x)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def _split_lengths(total: int, n_chains: int) -> list[int]:
    base, extra = divmod(total, n_chains)
    return [base + 1 if k < extra else base for k in range(n_chains)]


def _run_level_chains(model, seeds_theta, seeds_g, lengths, level, conditioning, config, root, pool):
    """Grow one chain per seed, batch by batch, adapting the spread between batches."""
    scaling = config.scaling
    sigma = scaling.sigma_for_level(level)
    n_chains = len(lengths)
    batch = config.batch_size if scaling.mode == "adaptive" else n_chains
    results: list[ChainResult] = []
    schedule, rates = [], []
    batches_to_band = None

    def one(k, proposal):
        seed = ChainState(seeds_theta[k], float(seeds_g[k]))
        return run_chain(seed, lengths[k], proposal, conditioning, model, root.child(level, k, "mma"))

    for start in range(0, n_chains, batch):
        ks = range(start, min(start + batch, n_chains))
        proposal = ProposalSpec(scaling.family, sigma)
        if pool is not None:
            chunk = list(pool.map(lambda k: one(k, proposal), ks))
        else:
            chunk = [one(k, proposal) for k in ks]
        results.extend(chunk)
        acc = sum(c.stats.candidate_acceptances for c in chunk)
        trans = sum(c.stats.transitions for c in chunk)
        rate = acc / trans if trans else float("nan")
        schedule.append(sigma)
        rates.append(rate)
        if batches_to_band is None and scaling.band[0] <= rate <= scaling.band[1]:
            batches_to_band = len(rates)
        if scaling.mode == "adaptive":
            sigma = adapt_spread(rates, sigma, scaling.band, scaling.step)
    return results, schedule, rates, batches_to_band


def _chain_gamma(results: list[ChainResult], threshold: float) -> float:
    min_len = min(len(c) for c in results)
    if min_len < 1:
        return float("nan")
    ind = np.array([c.g_values[:min_len] > threshold for c in results])
    try:
        return estimate_gamma(ind)
    except UndefinedCorrelationError:
        return float("nan")


def run_subset_simulation(model: PerformanceModel, config: SsConfig) -> SubsetRunResult:
    """Estimate ``P(g(theta) > b)`` for ``theta ~ N(0, I_d)``."""
    root = RngStream(config.master_seed)
    n = config.n_samples
    b = model.threshold
    evals_before = model.evaluations

    thetas = root.child(0, 0, "mc").generator().standard_normal((n, model.dimension))
    g = model.evaluate_many(thetas)
    n_fail = int(np.count_nonzero(g > b))
    levels = [
        LevelRecord(
            j=0,
            conditioning_threshold=-math.inf,
            threshold=b,
            n=n_fail,
            n_samples=n,
            g_values=g,
            gamma=0.0,
            evaluations=n,
            chain_lengths=[1] * n,
        )
    ]
    chains: list[ChainResult] = []
    converged = True
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    try:
        j = 0
        while n_fail / n < config.p0:
            if j >= config.max_levels:
                converged = False
                log.warning("max_levels=%d reached before the failure domain", config.max_levels)
                break
            b_next, seed_idx = select_threshold(g, n_seeds=config.n_chains)
            prev = levels[-1]
            prev.threshold = b_next
            prev.n = len(seed_idx)
            if j > 0:
                prev.gamma = _chain_gamma(chains, b_next)
            j += 1
            lengths = _split_lengths(n, len(seed_idx))
            evals0 = model.evaluations
            chains, schedule, rates, to_band = _run_level_chains(
                model, thetas[seed_idx], g[seed_idx], lengths, j, b_next, config, root, pool
            )
            thetas = np.concatenate([c.thetas for c in chains])
            g = np.concatenate([c.g_values for c in chains])
            n_fail = int(np.count_nonzero(g > b))
            acc = sum(c.stats.candidate_acceptances for c in chains)
            trans = sum(c.stats.transitions for c in chains)
            levels.append(
                LevelRecord(
                    j=j,
                    conditioning_threshold=b_next,
                    threshold=b,
                    n=n_fail,
                    n_samples=n,
                    g_values=g,
                    sigma_schedule=schedule,
                    batch_rates=rates,
                    rho=acc / trans if trans else float("nan"),
                    evaluations=model.evaluations - evals0,
                    chain_lengths=lengths,
                    batches_to_band=to_band,
                )
            )
            log.debug("level %d: b=%.6g rho=%.3f sigma=%s", j, b_next, levels[-1].rho, schedule)
        if j > 0:
            levels[-1].gamma = _chain_gamma(chains, b)
    finally:
        if pool is not None:
            pool.shutdown()

    p_hat = ss_estimate([rec.n for rec in levels], n)
    return SubsetRunResult(
        levels=levels,
        p_hat=p_hat,
        total_evaluations=model.evaluations - evals_before,
        config=config,
        converged=converged,
        critical_threshold=b,
    )


# ---------------------------------------------------------------------------
# Spread scans at isolated levels
# ---------------------------------------------------------------------------


@dataclass
class SigmaScanRow:
    sigma: float
    gamma: float
    rho: float
    gamma_se: float
    n_valid: int


def _analytic_model(kind: str, d: int, pf: float) -> PerformanceModel:
    if kind == "linear":
        return linear_problem(d, pf)
    if kind == "ball":
        return ball_problem(d, pf)
    raise ConfigError(f"spread scans need an analytic problem, got {kind!r}")


def level_pilot(kind, d, level, sigma, n_samples, p0, stream: RngStream, family="gaussian"):
    """Run one isolated level from exact seeds; return (gamma, rho, chains).

    The seeds are exact draws of ``pi(. | F_level)``, so the level can be
    studied without simulating the levels beneath it.
    """
    if level < 1:
        raise DomainError("isolated levels start at j = 1")
    ths = analytic_intermediate_thresholds(kind, d, p0, level + 1)
    cond, nxt = ths[level - 1], ths[level]
    model = _analytic_model(kind, d, p0 ** (level + 1))
    n_c = max(1, int(round(n_samples * p0)))
    lengths = _split_lengths(n_samples, n_c)
    seeds = exact_conditional_sampler(kind, d, cond, stream.child("seeds").generator(), n_c)
    seed_g = model.evaluate_many(seeds)
    proposal = ProposalSpec(family, sigma)
    chains = [
        run_chain(ChainState(seeds[k], float(seed_g[k])), lengths[k], proposal, cond, model,
                  stream.child(k, "mma"))
        for k in range(n_c)
    ]
    acc = sum(c.stats.candidate_acceptances for c in chains)
    trans = sum(c.stats.transitions for c in chains)
    return _chain_gamma(chains, nxt), acc / trans if trans else float("nan"), chains


def optimal_spread_scan(kind: str, d: int, level: int, sigma_grid, n_samples: int = 1000,
                        repetitions: int = 10, p0: float = 0.1, seed: int = 0,
                        family: str = "gaussian") -> tuple[list[SigmaScanRow], float]:
    """Mean correlation factor and acceptance rate per spread; returns rows and argmin spread."""
    root = RngStream(seed, ("sigma-scan", kind, level))
    rows = []
    for s_idx, sigma in enumerate(sigma_grid):
        gammas, rhos = [], []
        for rep in range(repetitions):
            gam, rho, _ = level_pilot(kind, d, level, float(sigma), n_samples, p0,
                                      root.child(s_idx, rep), family)
            gammas.append(gam)
            rhos.append(rho)
        gammas = np.array(gammas)
        valid = gammas[~np.isnan(gammas)]
        se = float(valid.std(ddof=1) / math.sqrt(len(valid))) if len(valid) > 1 else float("nan")
        rows.append(SigmaScanRow(float(sigma), float(valid.mean()) if len(valid) else float("nan"),
                                 float(np.nanmean(rhos)), se, int(len(valid))))
    gam_arr = np.array([r.gamma for r in rows])
    best = rows[int(np.nanargmin(gam_arr))].sigma if np.any(~np.isnan(gam_arr)) else float("nan")
    return rows, best
