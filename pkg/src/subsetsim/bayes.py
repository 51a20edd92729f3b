"""Bayesian post-processing of Subset Simulation output.

Each level's conditional probability gets a uniform prior and therefore a
beta posterior ``Be(n_j + 1, N - n_j + 1)``. The failure probability is the
product of these independent factors. Its density is available exactly as
an infinite series in ``(1 - y)`` or approximately as a single beta with the
same first two moments; the latter is what downstream quantities use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, signal, special, stats

from .errors import DomainError, PrecisionError, QuadratureError, TruncationError
from .mathkernel import BetaParams, beta_pdf
from .sss import SubsetRunResult, ss_estimate

__all__ = [
    "PosteriorSummary",
    "ProductBetaDensity",
    "credible_interval",
    "exact_product_pdf",
    "expected_loss",
    "fan_approximation",
    "level_posteriors",
    "map_estimate",
    "mc_plus",
    "posterior_moments",
    "rohatgi_oracle",
    "summarize_posterior",
]

DEFAULT_MAX_TERMS = 2_000_000
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


def _as_params(levels) -> list[BetaParams]:
    out = []
    for lv in levels:
        if isinstance(lv, BetaParams):
            out.append(lv)
        else:
            a, b = lv
            out.append(BetaParams(a, b))
    if not out:
        raise DomainError("at least one level posterior is required")
    return out


# ---------------------------------------------------------------------------
# Level posteriors
# ---------------------------------------------------------------------------


def mc_plus(n: int, n_samples: int) -> BetaParams:
    """Posterior of a Monte Carlo failure fraction under a uniform prior."""
    if not 0 <= n <= n_samples:
        raise DomainError(f"need 0 <= n <= N, got n={n}, N={n_samples}")
    return BetaParams(n + 1, n_samples - n + 1)


def level_posteriors(result: SubsetRunResult) -> list[BetaParams]:
    if result.m < 1:
        raise DomainError("run has no recorded stages")
    return [mc_plus(rec.n, rec.n_samples) for rec in result.levels]


# ---------------------------------------------------------------------------
# Moments, Fan approximation, MAP
# ---------------------------------------------------------------------------


def posterior_moments(levels) -> tuple[float, float, float]:
    """Mean, second moment and c.o.v. of the product of beta factors."""
    params = _as_params(levels)
    mu1 = mu2 = 1.0
    log_ratio = 0.0
    for p in params:
        s = p.alpha + p.beta
        mu1 *= p.alpha / s
        mu2 *= p.alpha * (p.alpha + 1.0) / (s * (s + 1.0))
        # E[X^2] / E[X]^2 = 1 + b / (a (s + 1)) per factor
        log_ratio += math.log1p(p.beta / (p.alpha * (s + 1.0)))
    cov = math.sqrt(math.expm1(log_ratio))
    return mu1, mu2, cov


def fan_approximation(levels) -> BetaParams:
    """Single beta distribution matching the product's first two moments."""
    params = _as_params(levels)
    if len(params) == 1:
        return params[0]
    mu1 = 1.0
    mu2_over_mu1 = 1.0
    log_ratio = 0.0
    for p in params:
        s = p.alpha + p.beta
        mu1 *= p.alpha / s
        mu2_over_mu1 *= (p.alpha + 1.0) / (s + 1.0)
        log_ratio += math.log1p(p.beta / (p.alpha * (s + 1.0)))
    var_ratio = math.expm1(log_ratio)  # mu2 / mu1^2 - 1
    if not var_ratio > 0 or not mu2_over_mu1 < 1:
        raise PrecisionError("second moment does not exceed the squared mean")
    a = (1.0 - mu2_over_mu1) / var_ratio
    b = a * (1.0 - mu1) / mu1
    return BetaParams(a, b)


def map_estimate(levels) -> float:
    """Product of the per-level posterior modes.

    For posteriors built from counts this is ``prod(n_j / N)`` computed in
    the same order as the Subset Simulation point estimate.
    """
    params = _as_params(levels)
    counts, totals = [], set()
    for p in params:
        n, total = p.alpha - 1.0, p.alpha + p.beta - 2.0
        if n != round(n) or total != round(total) or n < 0 or total < 1:
            break
        counts.append(int(n))
        totals.add(int(total))
    else:
        if len(totals) == 1:
            return ss_estimate(counts, totals.pop())
    out = 1.0
    for p in params:
        out *= p.mode
    return out


def credible_interval(params: BetaParams, level: float = 0.95) -> tuple[float, float]:
    """Equal-tailed credible interval of a beta distribution."""
    if not 0 < level < 1:
        raise DomainError("credibility level must lie in (0, 1)")
    tail = 0.5 * (1.0 - level)
    dist = stats.beta(params.alpha, params.beta)
    return float(dist.ppf(tail)), float(dist.isf(tail))


# ---------------------------------------------------------------------------
# Exact density of a product of betas
# ---------------------------------------------------------------------------


def _signed_logsumexp(logs: np.ndarray, signs: np.ndarray, axis: int = -1):
    """log|sum(sign * exp(log))| and its sign along ``axis``."""
    m = np.max(logs, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(under="ignore"):
        total = np.sum(signs * np.exp(logs - m), axis=axis)
    m = np.squeeze(m, axis=axis)
    with np.errstate(divide="ignore"):
        return m + np.log(np.abs(total)), np.sign(total)


def _log_pochhammer_over_factorial(c: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """log|(c)_s / s!| and sign for s = 0..n-1."""
    s = np.arange(n, dtype=float)
    if c > 0:
        return special.gammaln(c + s) - special.gammaln(c) - special.gammaln(s + 1.0), np.ones(n)
    factors = c + s[:-1] if n > 1 else np.empty(0)
    with np.errstate(divide="ignore"):
        logs = np.concatenate([[0.0], np.cumsum(np.log(np.abs(factors)))])
    signs = np.concatenate([[1.0], np.cumprod(np.sign(factors))])
    logs = logs - special.gammaln(s + 1.0)
    logs[signs == 0] = -np.inf
    signs[signs == 0] = 1.0
    return logs, signs


class ProductBetaDensity:
    """Exact density of ``Y = X_1 ... X_m`` with independent ``X_j ~ Be(a_j, b_j)``.

    The density is ``C y^(a_m - 1) (1 - y)^(B - 1) sum_r s_r (1 - y)^r`` with
    ``B = sum b_j``; the coefficients ``s_r`` follow a convolution recurrence
    over the factors and are kept as log-magnitude plus sign. They depend
    only on the parameters, so they are computed once, extended on demand,
    and shared by every evaluation point.

    Factors are reordered so that every Pochhammer argument
    ``a_k + b_k - a_{k-1}`` is positive when possible.
    """

    _BLOCK = 256
    _DROP = 45.0  # nats: terms this far below the largest in a sum are ignored
    _FFT_FROM = 4096
    _Y_BATCH = 128

    def __init__(self, levels, rel_tol: float = 1e-10, max_terms: int = DEFAULT_MAX_TERMS):
        params = _as_params(levels)
        self.params = self._order(params)
        self.rel_tol = rel_tol
        self.max_terms = int(max_terms)
        self.m = len(self.params)
        a = np.array([p.alpha for p in self.params])
        b = np.array([p.beta for p in self.params])
        self.a_last = a[-1]
        self.b_total = b.sum()
        self.log_const = float(np.sum(special.gammaln(a + b) - special.gammaln(a)))
        self._b_cum = np.cumsum(b)
        self._c = [None] + [a[k] + b[k] - a[k - 1] for k in range(1, self.m)]
        self._n = 0
        self._log = [np.empty(0) for _ in range(self.m)]
        self._sgn = [np.empty(0) for _ in range(self.m)]
        self._w = [None] * self.m
        self._band = [0] * self.m
        self._conv = [np.empty(0) for _ in range(self.m)]
        self._positive = all(c > 0 for c in self._c[1:])

    @staticmethod
    def _order(params):
        desc = sorted(params, key=lambda p: -p.alpha)
        if all(desc[k].alpha + desc[k].beta - desc[k - 1].alpha > 0 for k in range(1, len(desc))):
            return desc
        return sorted(params, key=lambda p: p.alpha)

    # -- coefficients -------------------------------------------------------

    def _extend(self, n_new: int) -> None:
        n_old = self._n
        if n_new <= n_old:
            return
        r = np.arange(n_old, n_new, dtype=float)
        first = np.full(n_new - n_old, -np.inf)
        if n_old == 0:
            first[0] = -special.gammaln(self.params[0].beta)
        self._log[0] = np.concatenate([self._log[0], first])
        self._sgn[0] = np.ones(n_new)
        for k in range(1, self.m):
            logw, sgnw = _log_pochhammer_over_factorial(self._c[k], n_new)
            self._w[k] = (logw, sgnw)
            log_g = special.gammaln(self._b_cum[k - 1] + r) - special.gammaln(self._b_cum[k] + r)
            lse, sgn = self._convolve(k, n_old, n_new, logw, sgnw)
            self._log[k] = np.concatenate([self._log[k], log_g + lse])
            self._sgn[k] = np.concatenate([self._sgn[k], sgn])
        self._n = n_new

    def _convolve(self, k, n_old, n_new, logw, sgnw):
        """log|sum_{t=0}^{r} w_{r-t} v_t| and sign for r in [n_old, n_new).

        ``v`` holds the level k-1 coefficients. Small ``r`` and signed
        sequences use a direct banded sum; beyond that, positive sequences
        are convolved by FFT one block of rows at a time (see ``_fft_rows``).
        """
        logv, sgnv = self._log[k - 1], self._sgn[k - 1]
        positive = bool(np.all(sgnw > 0) and np.all(sgnv > 0))
        out_l = np.full(n_new - n_old, np.nan)
        out_s = np.ones(n_new - n_old)
        hist = self._conv[k]
        r0 = n_old
        while r0 < n_new:
            done = 0
            if positive and r0 >= self._FFT_FROM:
                logs = np.concatenate([hist, out_l[: r0 - n_old]])
                res = self._fft_rows(r0, n_new, logs, logw, logv)
                if res is not None and res.size >= 64:
                    done = res.size
                    out_l[r0 - n_old:r0 - n_old + done] = res
            if not done:
                stop = min(r0 + self._BLOCK, n_new)
                lse, sg = self._banded_rows(k, r0, stop, logw, sgnw, logv, sgnv)
                done = stop - r0
                out_l[r0 - n_old:stop - n_old] = lse
                out_s[r0 - n_old:stop - n_old] = sg
            r0 += done
        self._conv[k] = np.concatenate([hist, out_l])
        return out_l, out_s

    def _banded_rows(self, k, start, stop, logw, sgnw, logv, sgnv):
        """Rows [start, stop) summing only a leading band of ``t``.

        The band doubles until its last term is negligible against the row
        total, or covers the full range.
        """
        rows = np.arange(start, stop)
        band = max(self._band[k], 8)
        while True:
            width = min(band, stop)
            res = self._block_tilted(start, stop, width, logw, sgnw, logv, sgnv)
            if res is None:
                res = self._block_log(rows, width, logw, sgnw, logv, sgnv)
            lse, sg = res
            if width >= stop:
                break
            edge_idx = rows - (width - 1)
            safe = np.maximum(edge_idx, 0)
            edge = np.where(edge_idx >= 0, logw[safe] + logv[width - 1], -np.inf)
            if np.all(~(edge > lse - self._DROP)):
                break
            band *= 2
        self._band[k] = band
        return lse, sg

    @staticmethod
    def _fft_rows(r0, n_new, logs, logw, logv):
        """Rows from ``r0`` onward by an exponentially tilted FFT convolution.

        ``logs`` are the log row sums already known (rows < r0); their local
        slope and curvature set a tilt under which row ``r0`` is close to
        the largest entry of the tilted convolution. Only the leading rows
        within a factor 1e4 of that maximum are returned, which keeps the
        FFT round-off far below the series tolerance. Returns None when the
        history is unsuitable.
        """
        h = max(16, r0 // 64)
        i = r0 - 1
        if i - 2 * h < 0:
            return None
        y0, y1, y2 = logs[i], logs[i - h], logs[i - 2 * h]
        if not np.isfinite([y0, y1, y2]).all():
            return None
        slope = (y0 - y1) / h
        curv = -(y0 - 2.0 * y1 + y2) / (h * h)
        if not curv > 0:
            curv = max(abs(slope), 1e-12) / r0
        # tilt flat at r0; rows beyond fall off roughly quadratically
        lam = slope - curv * (r0 - (i - 0.5 * h))
        width = int(min(max(1.5 * math.sqrt(2.0 * math.log(1e4) / curv), 256), 4 * r0))
        r1 = min(n_new, r0 + width)
        idx = np.arange(r1)
        tw = logw[:r1] - lam * idx
        tv = logv[:r1] - lam * idx
        c1 = np.max(tw[np.isfinite(tw)])
        c2 = np.max(tv[np.isfinite(tv)])
        with np.errstate(under="ignore"):
            conv = signal.fftconvolve(np.exp(tw - c1), np.exp(tv - c2))
        peak = conv.max()
        rows = conv[r0:r1]
        good = rows >= 1e-4 * peak
        n_ok = int(np.argmin(good)) if not good.all() else good.size
        if n_ok == 0:
            return None
        return np.log(rows[:n_ok]) + lam * np.arange(r0, r0 + n_ok) + c1 + c2

    @staticmethod
    def _block_log(rows, width, logw, sgnw, logv, sgnv):
        t = np.arange(width)
        idx = rows[:, None] - t[None, :]
        valid = idx >= 0
        idx_c = np.where(valid, idx, 0)
        terms = np.where(valid, logw[idx_c] + logv[t][None, :], -np.inf)
        signs = sgnw[idx_c] * sgnv[t][None, :]
        return _signed_logsumexp(terms, signs, axis=1)

    @staticmethod
    def _block_tilted(start, stop, width, logw, sgnw, logv, sgnv):
        """Block of the convolution as a Toeplitz product in linear space.

        Both sequences are tilted by ``exp(-lam * index)`` so that the
        retained terms stay within floating range. Returns None when some
        row underflows, in which case the caller works in log space.
        """
        lo = start - width + 1
        s = np.arange(lo, stop)
        ws = np.full(s.size, -np.inf)
        ok = s >= 0
        ws[ok] = logw[s[ok]]
        finite = np.nonzero(np.isfinite(ws))[0]
        vs = logv[:width]
        if finite.size == 0 or not np.any(np.isfinite(vs)):
            return None
        i0, i1 = finite[0], finite[-1]
        lam = (ws[i1] - ws[i0]) / (i1 - i0) if i1 > i0 else 0.0
        tw = ws - lam * s
        c1 = np.max(tw[finite])
        t = np.arange(width)
        tv = vs - lam * t
        c2 = np.max(tv[np.isfinite(tv)])
        with np.errstate(under="ignore"):
            what = np.zeros(s.size)
            what[ok] = sgnw[s[ok]] * np.exp(tw[ok] - c1)
            vhat = sgnv[:width] * np.exp(tv - c2)
        mat = np.lib.stride_tricks.sliding_window_view(what, width)[: stop - start, ::-1]
        total = mat @ vhat
        if np.any(np.abs(total) < 1e-280) or not np.all(np.isfinite(total)):
            return None
        rows = np.arange(start, stop)
        return np.log(np.abs(total)) + lam * rows + c1 + c2, np.sign(total)

    # -- evaluation ---------------------------------------------------------

    def _series(self, y: float) -> float:
        """Sum of s_r (1 - y)^r, truncated by a geometric tail bound."""
        log_t = math.log1p(-y)
        n = 1024
        while True:
            n = min(n, self.max_terms)
            self._extend(n)
            logc = self._log[-1][:n]
            sgn = self._sgn[-1][:n]
            logterms = logc + np.arange(n) * log_t
            peak = np.max(logterms)
            scaled = sgn * np.exp(logterms - peak)
            partial = np.abs(np.cumsum(scaled))
            mag = np.abs(scaled)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.concatenate([[1.0], mag[1:] / mag[:-1]])
            q = np.minimum(np.maximum(np.nan_to_num(ratio, nan=0.0), math.exp(log_t)), 1.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                tail = np.where(q < 1.0, mag * q / (1.0 - q), np.inf)
            small = (partial > 0) & ((tail <= self.rel_tol * partial) | np.isneginf(logc))
            run = np.convolve(small.astype(int), np.ones(3, dtype=int), mode="valid") == 3
            hits = np.nonzero(run)[0]
            if hits.size:
                stop = hits[0] + 3
                total = math.fsum(scaled[:stop])
                if total <= 0:
                    raise TruncationError("series sum is not positive", partial_sum=total)
                return peak + math.log(total)
            if n >= self.max_terms:
                raise TruncationError(
                    f"series did not converge within {self.max_terms} terms at y={y:g}",
                    partial_sum=float(math.exp(peak) * partial[-1]) if peak < 700 else float("inf"),
                    bound=float(tail[-1] / max(partial[-1], 1e-300)),
                )
            n *= 2

    def _series_batch(self, ys: np.ndarray, strict: bool = True) -> np.ndarray:
        """Vectorised ``_series`` for positive coefficients, walking the terms in chunks."""
        log_t = np.log1p(-ys)
        log_tol = math.log(self.rel_tol)
        out = np.full(ys.size, np.nan)
        running = np.full(ys.size, -np.inf)
        prev = np.full(ys.size, -np.inf)
        streak = np.zeros(ys.size, dtype=int)
        active = np.arange(ys.size)
        start, chunk = 0, 1024
        while active.size:
            stop = min(start + chunk, self.max_terms)
            self._extend(stop)
            r = np.arange(start, stop, dtype=float)
            lt = log_t[active]
            logc = self._log[-1][start:stop]
            terms = logc[:, None] + r[:, None] * lt[None, :]
            cum = np.logaddexp(running[active][None, :], np.logaddexp.accumulate(terms, axis=0))
            before = np.vstack([prev[active][None, :], terms[:-1]])
            with np.errstate(invalid="ignore"):
                log_q = np.maximum(np.nan_to_num(terms - before, nan=-np.inf), lt[None, :])
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                log_tail = np.where(log_q < 0, terms + log_q - np.log(-np.expm1(log_q)), np.inf)
            small = (log_tail <= log_tol + cum) | np.isneginf(logc)[:, None]
            # three consecutive small terms, carrying the run from the previous chunk
            carry = streak[active]
            ext = np.vstack([(carry >= 2)[None, :], (carry >= 1)[None, :], small])
            triple = ext[2:] & ext[1:-1] & ext[:-2]
            hit = np.where(triple.any(axis=0), np.argmax(triple, axis=0), -1)
            run = np.where(ext[-1], np.where(ext[-2], np.where(ext[-3], 3, 2), 1), 0)
            finished = hit >= 0
            out[active[finished]] = cum[hit[finished], np.nonzero(finished)[0]]
            keep = ~finished
            running[active] = cum[-1]
            prev[active] = terms[-1]
            streak[active] = run
            if stop >= self.max_terms and keep.any():
                if not strict:
                    break
                raise TruncationError(
                    f"series did not converge within {self.max_terms} terms at y={ys[active[keep]][0]:g}",
                    partial_sum=float(np.exp(cum[-1][keep][0])),
                    bound=float(np.exp(log_tail[-1][keep][0] - cum[-1][keep][0])),
                )
            active = active[keep]
            start = stop
            chunk = min(chunk * 2, 16384)
        return out

    def _series_one(self, y: float, strict: bool) -> float:
        try:
            return self._series(y)
        except TruncationError:
            if strict:
                raise
            return float("nan")

    def logpdf(self, y, strict: bool = True):
        """Log density; with ``strict=False`` non-converged points come back as NaN."""
        y_arr = np.atleast_1d(np.asarray(y, dtype=float))
        if np.any((y_arr <= 0) | (y_arr >= 1)):
            raise DomainError("product density is evaluated on the open interval (0, 1)")
        if self._positive:
            flat = y_arr.ravel()
            series = np.concatenate(
                [self._series_batch(flat[i:i + self._Y_BATCH], strict) for i in range(0, flat.size, self._Y_BATCH)]
            ).reshape(y_arr.shape)
        else:
            series = np.array([self._series_one(v, strict) for v in y_arr.ravel()]).reshape(y_arr.shape)
        out = (
            self.log_const
            + (self.a_last - 1.0) * np.log(y_arr)
            + (self.b_total - 1.0) * np.log1p(-y_arr)
            + series
        )
        return float(out[0]) if np.ndim(y) == 0 else out

    def pdf(self, y, strict: bool = True):
        out = np.exp(self.logpdf(y, strict))
        return float(out) if np.ndim(out) == 0 else out

    __call__ = pdf


def exact_product_pdf(levels, y, rel_tol: float = 1e-10, max_terms: int = DEFAULT_MAX_TERMS):
    return ProductBetaDensity(levels, rel_tol, max_terms).pdf(y)


# ---------------------------------------------------------------------------
# Quadrature helpers
# ---------------------------------------------------------------------------


def rohatgi_oracle(f1: Callable, f2: Callable, y: float, points: Optional[Sequence[float]] = None,
                   rel_tol: float = 1e-8) -> float:
    """Density of ``X1 * X2`` at ``y`` for independent ``X1 ~ f1``, ``X2 ~ f2`` on [0, 1]."""
    if not 0.0 < y < 1.0:
        raise DomainError("y must lie in (0, 1)")
    pts = None
    if points is not None:
        pts = sorted(p for p in points if y < p < 1.0)
    val, err, info = integrate.quad(
        lambda x: f1(x) * f2(y / x) / x, y, 1.0, points=pts or None,
        epsabs=0.0, epsrel=rel_tol * 1e-2, limit=500, full_output=True,
    )[:3]
    if err > rel_tol * abs(val) and err > 1e-300:
        raise QuadratureError(f"Rohatgi quadrature reached only {err / abs(val):.2e} relative error",
                              achieved=err / abs(val) if val else float("inf"))
    return val


def rohatgi_beta_oracle(p1: BetaParams, p2: BetaParams, y: float, rel_tol: float = 1e-8) -> float:
    """Rohatgi oracle specialised to two beta densities, with the peaks as break points."""
    m1, m2 = p1.mode, p2.mode
    pts = [m1]
    if m2 > 0:
        pts.append(y / m2)
    return rohatgi_oracle(lambda x: beta_pdf(x, p1), lambda z: beta_pdf(min(z, 1.0), p2), y, pts, rel_tol)


def _gl_panels(func, lo, hi, panels):
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return float(np.dot(w, func(x)))


def expected_loss(levels, loss: Callable, rel_tol: float = 1e-8, max_panels: int = 4096) -> float:
    """Posterior expectation of ``loss(p_F)`` under the moment-matched beta.

    Composite 20-point Gauss-Legendre over [0, 1]; the central panels cover
    the bulk of the density and are doubled until successive estimates
    agree to ``rel_tol``.
    """
    fan = levels if isinstance(levels, BetaParams) else fan_approximation(levels)
    dist = stats.beta(fan.alpha, fan.beta)
    lo, hi = float(dist.ppf(1e-15)), float(dist.isf(1e-15))

    def integrand(x):
        return np.asarray(loss(x), dtype=float) * beta_pdf(x, fan)

    outer = 0.0
    if lo > 0.0:
        outer += _gl_panels(integrand, 0.0, lo, 8)
    if hi < 1.0:
        outer += _gl_panels(integrand, hi, 1.0, 8)
    panels = 4
    prev = _gl_panels(integrand, lo, hi, panels) + outer
    while panels < max_panels:
        panels *= 2
        cur = _gl_panels(integrand, lo, hi, panels) + outer
        if abs(cur - prev) <= rel_tol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    raise QuadratureError("expected-loss quadrature did not converge", achieved=abs(cur - prev))


# ---------------------------------------------------------------------------
# Summary
# ---------------------------------------------------------------------------


@dataclass
class PosteriorSummary:
    levels: list
    fan: BetaParams
    mean: float
    second_moment: float
    cov: float
    map: float
    m: int
    n_samples: int
    credible_95: tuple

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "N": self.n_samples,
            "levels": [{"alpha": p.alpha, "beta": p.beta} for p in self.levels],
            "fan": {"a": self.fan.alpha, "b": self.fan.beta},
            "mean": self.mean,
            "second_moment": self.second_moment,
            "cov": self.cov,
            "map": self.map,
            "credible_95": list(self.credible_95),
        }


def summarize_posterior(result: SubsetRunResult) -> PosteriorSummary:
    levels = level_posteriors(result)
    mu1, mu2, cov = posterior_moments(levels)
    fan = fan_approximation(levels)
    return PosteriorSummary(
        levels=levels,
        fan=fan,
        mean=mu1,
        second_moment=mu2,
        cov=cov,
        map=map_estimate(levels),
        m=result.m,
        n_samples=result.n_samples,
        credible_95=credible_interval(fan, 0.95),
    )
