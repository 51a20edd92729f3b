"""Reference implementations that share no code with the package."""

import math

import mpmath

mpmath.mp.dps = 40

# B_{2k} / (2k (2k - 1)) for k = 1..10
_STIRLING = [
    mpmath.bernoulli(2 * k) / (2 * k * (2 * k - 1)) for k in range(1, 11)
]


def stirling_log_gamma(x) -> mpmath.mpf:
    """log Gamma(x) by upward recurrence to x >= 30 and the Stirling series."""
    x = mpmath.mpf(x)
    shift = mpmath.mpf(0)
    while x < 30:
        shift -= mpmath.log(x)
        x += 1
    s = (x - mpmath.mpf("0.5")) * mpmath.log(x) - x + mpmath.log(2 * mpmath.pi) / 2
    xp = x
    for c in _STIRLING:
        s += c / xp
        xp *= x * x
    return s + shift


def normal_cdf_hp(x) -> mpmath.mpf:
    return (1 + mpmath.erf(mpmath.mpf(x) / mpmath.sqrt(2))) / 2


def normal_quantile_hp(p) -> float:
    p = mpmath.mpf(p)
    start = math.sqrt(2) * float(mpmath.erfinv(2 * p - 1))
    return float(mpmath.findroot(lambda x: normal_cdf_hp(x) - p, start))


def chi2_cdf_quad(v: float, d: int) -> float:
    """Integral of the chi-square density from 0 to v by adaptive quadrature."""
    k = mpmath.mpf(d) / 2
    log_norm = k * mpmath.log(2) + mpmath.loggamma(k)

    def dens(q):
        if q == 0:
            return mpmath.mpf(0) if d > 2 else (mpmath.mpf("0.5") if d == 2 else mpmath.inf)
        return mpmath.exp((k - 1) * mpmath.log(q) - q / 2 - log_norm)

    mode = max(d - 2, 0)
    width = 12 * math.sqrt(2 * d)
    pts = [0, max(mode - width, 0), mode, min(v, mode + width), v]
    pts = sorted(set(p for p in pts if p <= v))
    return float(mpmath.quad(dens, pts))
