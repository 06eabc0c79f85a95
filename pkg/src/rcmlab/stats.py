"""Shared statistical machinery: streaming moments, DKW bands, survival-curve
slope fits with censoring awareness, and bootstrap confidence intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps


class CensoredDataError(RuntimeError):
    """Raised when censoring makes an estimator unreliable by contract."""


@dataclass(frozen=True)
class KernelEstimate:
    """Monte Carlo (or exact) value of a kernel functional.

    method is one of "mc", "closed_form", "quadrature"; closed_form implies
    std_error == 0.  grid_sup marks essential suprema approximated by a
    maximum over a finite mark grid (a lower bound of the true sup).
    """

    value: float
    std_error: float
    n_samples: int
    method: str = "mc"
    grid_sup: bool = False

    def __post_init__(self):
        if self.method not in ("mc", "closed_form", "quadrature"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.std_error < 0:
            raise ValueError("std_error must be >= 0")
        if self.method == "closed_form" and self.std_error != 0:
            raise ValueError("closed_form estimates carry no sampling error")

    @classmethod
    def exact(cls, value: float) -> "KernelEstimate":
        return cls(float(value), 0.0, 0, method="closed_form")

    @classmethod
    def from_samples(cls, x: np.ndarray, **kw) -> "KernelEstimate":
        x = np.asarray(x, dtype=float)
        n = x.size
        se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(x.mean()), se, n, **kw)


@dataclass
class StreamingMoments:
    """Count/mean/M2/min/max accumulator with associative-within-fp merging."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    min: float = math.inf
    max: float = -math.inf

    @classmethod
    def from_samples(cls, x) -> "StreamingMoments":
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            return cls()
        mu = float(x.mean())
        return cls(
            count=int(x.size),
            mean=mu,
            m2=float(np.sum((x - mu) ** 2)),
            min=float(x.min()),
            max=float(x.max()),
        )

    def merge(self, other: "StreamingMoments") -> "StreamingMoments":
        if self.count == 0:
            return StreamingMoments(other.count, other.mean, other.m2, other.min, other.max)
        if other.count == 0:
            return StreamingMoments(self.count, self.mean, self.m2, self.min, self.max)
        n = self.count + other.count
        d = other.mean - self.mean
        mean = self.mean + d * other.count / n
        m2 = self.m2 + other.m2 + d * d * self.count * other.count / n
        return StreamingMoments(n, mean, m2, min(self.min, other.min), max(self.max, other.max))

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 1 else 0.0


def merge(a: StreamingMoments, b: StreamingMoments) -> StreamingMoments:
    return a.merge(b)


def dkw_band(n: int, level: float, one_sided: bool = False) -> float:
    """Dvoretzky–Kiefer–Wolfowitz band half-width at confidence `level`.

    P(sup_x |F_n - F| > eps) <= 2 exp(-2 n eps^2); the one-sided version drops
    the factor 2.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 < level < 1:
        raise ValueError("level must be in (0,1)")
    c = 1.0 if one_sided else 2.0
    return math.sqrt(math.log(c / level) / (2.0 * n))


@dataclass(frozen=True)
class TailFit:
    """Exponential tail exponent fit: log S(k) ~ intercept - decay * k."""

    decay: float
    intercept: float
    ci: tuple
    k_range: tuple
    censored_fraction: float
    n_samples: int = 0

    @property
    def ci_excludes_zero(self) -> bool:
        return self.ci[0] > 0.0


def tail_slope(k, log_survival, weights=None, level: float = 0.95) -> TailFit:
    """Weighted least-squares slope of a log-survival curve.

    Returns the decay rate (minus the slope) with a t-based confidence
    interval.  Points with non-finite log-survival are dropped.
    """
    k = np.asarray(k, dtype=float)
    y = np.asarray(log_survival, dtype=float)
    w = np.ones_like(k) if weights is None else np.asarray(weights, dtype=float)
    good = np.isfinite(y) & np.isfinite(k) & (w > 0)
    k, y, w = k[good], y[good], w[good]
    if k.size < 3:
        raise ValueError("need at least 3 finite survival points to fit a slope")
    sw = w.sum()
    kbar = np.sum(w * k) / sw
    ybar = np.sum(w * y) / sw
    skk = np.sum(w * (k - kbar) ** 2)
    slope = np.sum(w * (k - kbar) * (y - ybar)) / skk
    intercept = ybar - slope * kbar
    resid = y - (intercept + slope * k)
    dof = k.size - 2
    s2 = np.sum(w * resid**2) / dof
    se = math.sqrt(s2 / skk)
    tq = sps.t.ppf(0.5 + level / 2.0, dof)
    decay = -slope
    return TailFit(
        decay=float(decay),
        intercept=float(intercept),
        ci=(float(decay - tq * se), float(decay + tq * se)),
        k_range=(float(k.min()), float(k.max())),
        censored_fraction=0.0,
        n_samples=k.size,
    )


def survival_points(samples: np.ndarray, min_exceedances: int = 50):
    """(k, S(k)) pairs with S(k)=P(X > k), restricted to k with enough exceedances."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    ks = np.unique(x)
    # exceedance count of k = number of samples strictly above k
    exceed = n - np.searchsorted(x, ks, side="right")
    keep = exceed >= min_exceedances
    return ks[keep], exceed[keep] / n


def largest_decade(ks: np.ndarray) -> np.ndarray:
    """Restrict fit abscissae to the top order of magnitude [k_max/10, k_max]."""
    if ks.size == 0:
        return ks
    kmax = ks.max()
    return ks[ks >= kmax / 10.0]


def bootstrap_survival_decay(
    samples,
    grid,
    rng,
    n_boot: int = 200,
    level: float = 0.95,
):
    """Percentile-bootstrap CI for the log-survival decay rate over `grid`.

    Resampling is done on the multinomial histogram induced by the grid bins,
    which is equivalent to resampling the samples themselves.
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    grid = np.asarray(grid, dtype=float)
    # bins {x <= g1}, {g1 < x <= g2}, ..., {x > gm}; survival above g_i = suffix sum
    inner = np.nextafter(grid, np.inf)
    counts = np.histogram(x, bins=np.concatenate([[-np.inf], inner, [np.inf]]))[0]
    probs = counts / n
    point = _decay_from_counts(counts, grid, n)
    draws = np.empty(n_boot)
    for b in range(n_boot):
        c = rng.multinomial(n, probs)
        draws[b] = _decay_from_counts(c, grid, n)
    draws = draws[np.isfinite(draws)]
    alpha = 1.0 - level
    lo, hi = np.quantile(draws, [alpha / 2, 1 - alpha / 2])
    return point, (float(lo), float(hi))


def _decay_from_counts(counts, grid, n):
    suffix = counts[::-1].cumsum()[::-1]
    surv = suffix[1:] / n  # P(X > g_i) for each grid point
    good = surv > 0
    if good.sum() < 3:
        return np.nan
    fit = tail_slope(grid[good], np.log(surv[good]))
    return fit.decay


def bootstrap_ci_mean(x, rng, n_boot: int = 300, level: float = 0.95):
    """Percentile bootstrap CI for the mean."""
    x = np.asarray(x, dtype=float)
    n = x.size
    means = np.empty(n_boot)
    for b in range(n_boot):
        means[b] = x[rng.integers(0, n, size=n)].mean()
    alpha = 1.0 - level
    lo, hi = np.quantile(means, [alpha / 2, 1 - alpha / 2])
    return float(lo), float(hi)


def ks_two_sample(a, b):
    """Two-sample Kolmogorov–Smirnov statistic and p-value."""
    res = sps.ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)


def chi2_gof(observed, expected):
    """Chi-square goodness of fit; expected is rescaled to the observed total."""
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected, dtype=float)
    expected = expected * observed.sum() / expected.sum()
    res = sps.chisquare(observed, expected)
    return float(res.statistic), float(res.pvalue)


@dataclass
class ComparisonReport:
    """PASS/FAIL record for one statistical check."""

    name: str
    statistic: float
    threshold: float
    passed: bool
    detail: str = ""

    def __str__(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.name}: stat={self.statistic:.6g} thr={self.threshold:.6g} {self.detail}"


def within_margin(name, lhs, rhs, joint_se, n_sigma=4.0, one_sided=False) -> ComparisonReport:
    """Check lhs <= rhs (+margin) or |lhs-rhs| <= margin with margin = n_sigma*joint_se."""
    margin = n_sigma * joint_se
    gap = (lhs - rhs) if one_sided else abs(lhs - rhs)
    return ComparisonReport(
        name=name,
        statistic=float(gap),
        threshold=float(margin),
        passed=bool(gap <= margin),
        detail=f"lhs={lhs:.6g} rhs={rhs:.6g} se={joint_se:.3g}",
    )
