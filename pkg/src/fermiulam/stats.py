"""Small statistics toolbox used by the Monte Carlo experiments.

Everything here has a closed-form sanity anchor somewhere in the tests:
the KS distance vanishes for a sample against its own empirical law, the
log-log slope is exact on pure power laws, and the half-stable survival
function is checked against direct quadrature of its density.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf, erfinv

from .quadrature import adaptive_simpson

__all__ = [
    "StatsSummary",
    "ks_distance",
    "loglog_slope",
    "autocorrelation",
    "stable_survival",
    "stable_survival_quad",
    "stable_median",
    "bm_hit_upper_prob",
    "combine_moments",
]


@dataclass
class StatsSummary:
    """Named point estimate with its uncertainty and sample accounting."""

    name: str
    estimate: float
    stderr: float
    n: int
    ks: float = None
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        out = {
            "name": self.name,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "n": self.n,
        }
        if self.ks is not None:
            out["ks"] = self.ks
        out.update(self.extra)
        return out


def ks_distance(sample, cdf, upper=None):
    """One-sample Kolmogorov-Smirnov distance sup |F_hat - F|.

    ``sample`` need not be sorted.  With ``upper`` set, the supremum is
    restricted to sample points <= upper (right-censored comparisons); the
    empirical CDF still counts the censored mass in its denominator.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    if n == 0:
        raise ValueError("empty sample")
    lo = np.arange(0, n) / n
    hi = np.arange(1, n + 1) / n
    f = cdf(x)
    d = np.maximum(np.abs(hi - f), np.abs(lo - f))
    if upper is not None:
        mask = x <= upper
        if not mask.any():
            raise ValueError("no sample points below the censoring bound")
        d = d[mask]
    return float(d.max())


def loglog_slope(x, y):
    """Least-squares slope of log y against log x; exact on power laws."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)


def autocorrelation(series, max_lag):
    """Normalized autocorrelation rho[0..max_lag] via FFT."""
    a = np.asarray(series, dtype=float)
    a = a - a.mean()
    n = len(a)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(a, nfft)
    acf = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1]
    acf /= acf[0]
    return acf


def stable_survival(t):
    """Survival of the index-1/2 stable hitting-time law: S(t) = erf(1/sqrt(2t))."""
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    pos = t > 0
    out[pos] = erf(1.0 / np.sqrt(2.0 * t[pos]))
    return out if out.ndim else float(out)


def _stable_density(x):
    return math.exp(-1.0 / (2.0 * x)) / math.sqrt(2.0 * math.pi * x**3)


def stable_survival_quad(t, x_max=None, tol=1e-10):
    """Quadrature of the density exp(-1/2x)/sqrt(2 pi x^3) over (t, inf).

    Independent check of ``stable_survival``: integrates the density (in the
    log substitution x = t*e^s, which tames the slow x^-3/2 decay) out to
    ``x_max`` and closes with the two-term asymptotic tail
    sqrt(2/(pi x)) - (2/3) (2x)^(-3/2) / sqrt(pi) of the half-stable law.
    """
    if t <= 0:
        return 1.0
    if x_max is None:
        x_max = max(1e7, 1e5 * t)
    s_max = math.log(x_max / t)
    body = adaptive_simpson(
        lambda s: _stable_density(t * math.exp(s)) * t * math.exp(s),
        0.0, s_max, tol=tol,
    )
    tail = math.sqrt(2.0 / (math.pi * x_max)) - (2.0 / (3.0 * math.sqrt(math.pi))) * (
        2.0 * x_max
    ) ** -1.5
    return body + tail


def stable_median():
    """Median of the index-1/2 hitting law: t with erf(1/sqrt(2t)) = 1/2."""
    return 0.5 / erfinv(0.5) ** 2


def bm_hit_upper_prob(a, b, start=1.0):
    """P(driftless BM from ``start`` hits b before a), the gambler's-ruin ratio."""
    if not a < start < b:
        raise ValueError("need a < start < b")
    return (start - a) / (b - a)


def combine_moments(n1, mean1, m2_1, n2, mean2, m2_2):
    """Merge two (count, mean, sum of squared deviations) accumulators."""
    if n1 == 0:
        return n2, mean2, m2_2
    if n2 == 0:
        return n1, mean1, m2_1
    n = n1 + n2
    d = mean2 - mean1
    mean = mean1 + d * n2 / n
    m2 = m2_1 + m2_2 + d * d * n1 * n2 / n
    return n, mean, m2
