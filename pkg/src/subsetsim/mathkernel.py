"""Special functions, beta densities and reproducible random streams.

Everything here is pure. Inverse CDFs start from the scipy quantile
functions and are polished with a safeguarded Newton iteration on the
corresponding high-accuracy CDFs, so the returned quantiles are trustworthy
in the far tails used by the analytic benchmark thresholds.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DomainError

__all__ = [
    "BetaParams",
    "RngStream",
    "beta_logpdf",
    "beta_pdf",
    "chi2_cdf",
    "chi2_inv_cdf",
    "chi2_inv_sf",
    "chi2_sf",
    "log_beta_fn",
    "log_gamma",
    "sample_std_normal",
    "std_normal_cdf",
    "std_normal_inv_cdf",
    "std_normal_logpdf",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


def _tag_code(tag: str | int) -> int:
    if isinstance(tag, int):
        return tag
    return zlib.crc32(tag.encode("utf-8"))


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream keyed by ``(master_seed, path)``.

    The path is a tuple such as ``(level, chain, "mma")``. Streams are
    value-like: two streams with equal seed and path always yield the same
    draws, independent of the order in which other streams are consumed.
    """

    master_seed: int
    path: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise DomainError("master_seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "path", tuple(self.path))

    def child(self, *path) -> "RngStream":
        return RngStream(self.master_seed, self.path + tuple(path))

    def seed_sequence(self) -> np.random.SeedSequence:
        key = tuple(_tag_code(p) for p in self.path)
        return np.random.SeedSequence(entropy=self.master_seed, spawn_key=key)

    def generator(self) -> np.random.Generator:
        """A fresh counter-based generator positioned at the stream start."""
        return np.random.Generator(np.random.Philox(self.seed_sequence()))

    def derive_seed(self) -> int:
        """A 64-bit integer seed derived from this stream (for sub-runs)."""
        state = self.seed_sequence().generate_state(2, dtype=np.uint32)
        return int(state[0]) << 32 | int(state[1])


def sample_std_normal(stream: RngStream | np.random.Generator, n: int) -> np.ndarray:
    if n < 1:
        raise DomainError("n must be >= 1")
    rng = stream.generator() if isinstance(stream, RngStream) else stream
    return rng.standard_normal(n)


# ---------------------------------------------------------------------------
# Normal and chi-square
# ---------------------------------------------------------------------------


def std_normal_cdf(x):
    return special.ndtr(x)


def std_normal_logpdf(x):
    x = np.asarray(x, dtype=float)
    return -0.5 * x * x - _LOG_SQRT_2PI


def _check_prob(p: float) -> float:
    p = float(p)
    if not 0.0 < p < 1.0 or math.isnan(p):
        raise DomainError(f"probability must lie in (0, 1), got {p!r}")
    return p


def std_normal_inv_cdf(p: float) -> float:
    """Quantile of the standard normal distribution."""
    p = _check_prob(p)
    x = float(special.ndtri(p))
    # Newton polish on whichever tail keeps the residual well conditioned.
    for _ in range(3):
        dens = math.exp(-0.5 * x * x - _LOG_SQRT_2PI)
        if dens == 0.0:
            break
        if p < 0.5:
            resid = special.ndtr(x) - p
        else:
            resid = (1.0 - p) - special.ndtr(-x)
        step = resid / dens
        x -= step
        if abs(step) <= 1e-15 * max(1.0, abs(x)):
            break
    return x


def chi2_cdf(q, d: int):
    if d < 1:
        raise DomainError("degrees of freedom must be >= 1")
    return special.gammainc(0.5 * d, 0.5 * np.maximum(q, 0.0))


def _chi2_logpdf(q: float, d: int) -> float:
    k = 0.5 * d
    return (k - 1.0) * math.log(q) - 0.5 * q - k * math.log(2.0) - math.lgamma(k)


def chi2_sf(q, d: int):
    """Upper tail ``1 - F(q)`` without cancellation."""
    if d < 1:
        raise DomainError("degrees of freedom must be >= 1")
    return special.gammaincc(0.5 * d, 0.5 * np.maximum(q, 0.0))


def _chi2_quantile(p: float, d, upper: bool) -> float:
    """Quantile for lower-tail probability ``p`` (or upper-tail when ``upper``)."""
    p = _check_prob(p)
    if int(d) != d or d < 1:
        raise DomainError(f"degrees of freedom must be a positive integer, got {d!r}")
    d = int(d)
    k = 0.5 * d
    lower_side = (p < 0.5) != upper
    q = 2.0 * float(special.gammainccinv(k, p) if upper else special.gammaincinv(k, p))
    target = p if (lower_side and not upper) or (not lower_side and upper) else 1.0 - p
    log_target = math.log(target)
    lo, hi = 0.0, math.inf
    for _ in range(60):
        if q <= 0.0 or not math.isfinite(q):
            break
        # Newton on the log of the smaller tail keeps relative precision deep in either tail
        tail = special.gammainc(k, 0.5 * q) if lower_side else special.gammaincc(k, 0.5 * q)
        if tail <= 0.0:
            resid = -math.inf if lower_side else math.inf
        else:
            resid = math.log(tail) - log_target if lower_side else log_target - math.log(tail)
        if resid == 0.0:
            break
        if resid > 0:
            hi = min(hi, q)
        else:
            lo = max(lo, q)
        log_dens = _chi2_logpdf(q, d)
        new = math.nan
        if math.isfinite(resid) and tail > 0.0:
            slope = math.exp(log_dens - math.log(tail))
            if slope > 0.0 and math.isfinite(slope):
                new = q - resid / slope
        if not lo < new < hi:
            new = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * max(q, lo, 1.0)
        if abs(new - q) <= 1e-15 * q:
            q = new
            break
        q = new
    return q


def chi2_inv_cdf(p: float, d: int) -> float:
    """Quantile of the chi-square distribution with ``d`` degrees of freedom."""
    return _chi2_quantile(p, d, upper=False)


def chi2_inv_sf(s: float, d: int) -> float:
    """Value ``q`` with upper-tail probability ``s``; accurate for tiny ``s``."""
    return _chi2_quantile(s, d, upper=True)


# ---------------------------------------------------------------------------
# Gamma / beta
# ---------------------------------------------------------------------------


def log_gamma(x):
    x_arr = np.asarray(x, dtype=float)
    if np.any(~(x_arr > 0)):
        raise DomainError("log_gamma requires positive arguments")
    out = special.gammaln(x_arr)
    return float(out) if out.ndim == 0 else out


def log_beta_fn(a, b):
    return log_gamma(a) + log_gamma(b) - log_gamma(np.add(a, b))


@dataclass(frozen=True)
class BetaParams:
    alpha: float
    beta: float
    _log_norm: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a, b = float(self.alpha), float(self.beta)
        if not (a > 0 and b > 0) or not (math.isfinite(a) and math.isfinite(b)):
            raise DomainError(f"beta parameters must be positive, got ({a}, {b})")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "_log_norm", log_beta_fn(a, b))

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    @property
    def second_moment(self) -> float:
        s = self.alpha + self.beta
        return self.alpha * (self.alpha + 1.0) / (s * (s + 1.0))

    @property
    def mode(self) -> float:
        a, b = self.alpha, self.beta
        if a > 1 and b > 1:
            return (a - 1.0) / (a + b - 2.0)
        if a <= 1 and b > 1:
            return 0.0
        if a > 1 and b <= 1:
            return 1.0
        # U-shaped or uniform: no unique interior mode
        return 0.5 if a == b == 1 else (0.0 if a < b else 1.0)

    @property
    def cov(self) -> float:
        return math.sqrt(self.second_moment / self.mean**2 - 1.0)

    def logpdf(self, x):
        return beta_logpdf(x, self)

    def pdf(self, x):
        return beta_pdf(x, self)


def beta_logpdf(x, params: BetaParams):
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise DomainError("beta density argument must lie in [0, 1]")
    a, b = params.alpha, params.beta
    with np.errstate(divide="ignore", invalid="ignore"):
        out = special.xlogy(a - 1.0, x) + special.xlog1py(b - 1.0, -x) - params._log_norm
    return float(out) if out.ndim == 0 else out


def beta_pdf(x, params: BetaParams):
    out = np.exp(beta_logpdf(x, params))
    return float(out) if np.ndim(out) == 0 else out
