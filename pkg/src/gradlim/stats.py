"""Monte Carlo estimates, moment accumulators, KS tests and verdicts."""

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
from scipy.special import kolmogi

Number = Union[float, complex]

DEFAULT_LEVEL = 0.01
DEFAULT_K_SIGMA = 3.0
DEFAULT_K_SIGMA_MATRIX = 4.0
DEFAULT_INCONCLUSIVE_FRAC = 0.2


class Verdict(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class MCEstimate:
    """Point estimate with standard error.

    For complex quantities ``value`` is complex and ``stderr`` is the pair
    (stderr of real part, stderr of imaginary part).
    """

    value: Number
    stderr: Union[float, Tuple[float, float]]
    count: int

    @classmethod
    def from_samples(cls, samples) -> "MCEstimate":
        x = np.asarray(samples).ravel()
        if x.size < 1:
            raise ValueError("no samples")
        if np.iscomplexobj(x):
            re = cls.from_samples(x.real)
            im = cls.from_samples(x.imag)
            return cls(complex(re.value, im.value), (re.stderr, im.stderr), x.size)
        n = x.size
        sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
        return cls(float(np.mean(x)), sd / math.sqrt(n), n)

    @property
    def is_complex(self) -> bool:
        return isinstance(self.stderr, tuple)

    @property
    def real(self) -> "MCEstimate":
        if not self.is_complex:
            return self
        return MCEstimate(float(self.value.real), float(self.stderr[0]), self.count)

    @property
    def imag(self) -> "MCEstimate":
        if not self.is_complex:
            return MCEstimate(0.0, 0.0, self.count)
        return MCEstimate(float(self.value.imag), float(self.stderr[1]), self.count)

    @property
    def combined_stderr(self) -> float:
        """Scalar standard error; for complex values the hypot of both parts."""
        if self.is_complex:
            return float(math.hypot(*self.stderr))
        return float(self.stderr)

    def scaled(self, c: float) -> "MCEstimate":
        if self.is_complex:
            return MCEstimate(self.value * c, (abs(c) * self.stderr[0], abs(c) * self.stderr[1]), self.count)
        return MCEstimate(self.value * c, abs(c) * self.stderr, self.count)

    def distance(self, target: Number) -> float:
        """|value - target| in units of the (combined) standard error."""
        se = self.combined_stderr
        gap = abs(self.value - target)
        if se == 0.0:
            return 0.0 if gap == 0.0 else math.inf
        return gap / se

    def to_dict(self) -> dict:
        if self.is_complex:
            return {
                "value_re": self.value.real,
                "value_im": self.value.imag,
                "stderr_re": self.stderr[0],
                "stderr_im": self.stderr[1],
                "count": self.count,
            }
        return {"value": self.value, "stderr": self.stderr, "count": self.count}


@dataclass
class MomentAccumulator:
    """Mergeable (count, mean, centered sum of squares) for a real stream.

    Merging uses the pairwise update of Chan et al., which keeps splits of a
    sample in any grouping equal to a single pass up to rounding.
    """

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, samples) -> "MomentAccumulator":
        x = np.asarray(samples, dtype=float).ravel()
        if x.size == 0:
            return cls()
        mu = float(np.mean(x))
        return cls(int(x.size), mu, float(np.sum((x - mu) ** 2)))

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if other.count == 0:
            return MomentAccumulator(self.count, self.mean, self.m2)
        if self.count == 0:
            return MomentAccumulator(other.count, other.mean, other.m2)
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return MomentAccumulator(n, mean, m2)

    __add__ = merge

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    def estimate(self) -> MCEstimate:
        if self.count == 0:
            raise ValueError("empty accumulator")
        return MCEstimate(self.mean, math.sqrt(self.variance / self.count), self.count)


def merge_all(accs: Sequence[MomentAccumulator]) -> MomentAccumulator:
    out = MomentAccumulator()
    for a in accs:
        out = out.merge(a)
    return out


# --------------------------------------------------------------------------
# Kolmogorov-Smirnov

def ks_critical_constant(level: float) -> float:
    """Asymptotic constant c with P(sqrt(n) D_n > c) = level."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    return float(kolmogi(level))


@dataclass(frozen=True)
class KSResult:
    statistic: float
    critical_value: float
    passed: bool
    count: int
    level: float = DEFAULT_LEVEL

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "critical_value": self.critical_value,
            "pass": self.passed,
            "count": self.count,
            "level": self.level,
        }


MIN_KS_SAMPLES = 50


def ks_statistic(samples, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    m = x.size
    f = np.clip(np.asarray(cdf(x), dtype=float), 0.0, 1.0)
    upper = np.arange(1, m + 1) / m - f
    lower = f - np.arange(0, m) / m
    return float(max(upper.max(), lower.max()))


def ks_test(samples, cdf: Callable[[np.ndarray], np.ndarray], level: float = DEFAULT_LEVEL) -> KSResult:
    """One-sample KS test against a continuous ``cdf`` (vectorized)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < MIN_KS_SAMPLES:
        raise ValueError(f"ks_test needs at least {MIN_KS_SAMPLES} samples, got {x.size}")
    d = ks_statistic(x, cdf)
    crit = ks_critical_constant(level) / math.sqrt(x.size)
    return KSResult(d, crit, d < crit, int(x.size), level)


def ks_2samp(a, b, level: float = DEFAULT_LEVEL) -> KSResult:
    """Two-sample KS test with the asymptotic critical value."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if min(a.size, b.size) < MIN_KS_SAMPLES:
        raise ValueError(f"ks_2samp needs at least {MIN_KS_SAMPLES} samples per side")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    d = float(np.max(np.abs(fa - fb)))
    crit = ks_critical_constant(level) * math.sqrt((a.size + b.size) / (a.size * b.size))
    return KSResult(d, crit, d < crit, int(a.size + b.size), level)


# --------------------------------------------------------------------------
# Moments

@dataclass(frozen=True)
class Moments:
    mean: List[MCEstimate]
    variance: List[MCEstimate]
    covariance: List[List[MCEstimate]] = field(default_factory=list)

    def covariance_values(self) -> np.ndarray:
        return np.array([[c.value for c in row] for row in self.covariance])

    def covariance_stderrs(self) -> np.ndarray:
        return np.array([[c.stderr for c in row] for row in self.covariance])


def mc_moments(samples) -> Moments:
    """Means, unbiased variances and covariances with standard errors.

    ``samples`` is (count,) or (count, dim).  The standard error of a
    covariance entry is the standard deviation of the centered products over
    sqrt(count), which for diagonal entries reduces to the usual
    fourth-moment formula sqrt((m4 - m2^2) / count).
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n < 2:
        raise ValueError("mc_moments needs at least 2 samples")
    mu = x.mean(axis=0)
    xc = x - mu
    sd = x.std(axis=0, ddof=1)
    means = [MCEstimate(float(mu[i]), float(sd[i] / math.sqrt(n)), n) for i in range(d)]
    cov = []
    for i in range(d):
        row = []
        for j in range(d):
            prod = xc[:, i] * xc[:, j]
            value = float(prod.sum() / (n - 1))
            se = float(prod.std() / math.sqrt(n))
            row.append(MCEstimate(value, se, n))
        cov.append(row)
    variances = [cov[i][i] for i in range(d)]
    return Moments(means, variances, cov)


def correlation_estimate(x, y) -> MCEstimate:
    """Pearson correlation with the large-sample stderr (1 - r^2)/sqrt(n)."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    n = x.size
    sx, sy = x.std(), y.std()
    if sx == 0.0 or sy == 0.0:
        return MCEstimate(0.0, 0.0, n)
    r = float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))
    return MCEstimate(r, (1.0 - r * r) / math.sqrt(n), n)


def paired_difference(a, b) -> MCEstimate:
    """Mean of a - b with the paired standard error."""
    return MCEstimate.from_samples(np.asarray(a) - np.asarray(b))


def difference_distance(a: MCEstimate, b: MCEstimate) -> float:
    """|a - b| in units of the combined stderr of independent estimates."""
    se = math.hypot(a.combined_stderr, b.combined_stderr)
    gap = abs(a.value - b.value)
    if se == 0.0:
        return 0.0 if gap == 0.0 else math.inf
    return gap / se


# --------------------------------------------------------------------------
# Verdicts

def verdict(
    estimate: MCEstimate,
    target: Number,
    k_sigma: float = DEFAULT_K_SIGMA,
    inconclusive_frac: float = DEFAULT_INCONCLUSIVE_FRAC,
    floor: float = 0.0,
) -> Verdict:
    """Pass/fail/inconclusive for an estimate against an analytic target.

    Inconclusive when the stderr exceeds ``inconclusive_frac`` times
    max(|target|, floor).  A zero reference scale (zero target, no floor)
    disables the inconclusive branch.
    """
    if k_sigma <= 0:
        raise ValueError("k_sigma must be positive")
    se = estimate.combined_stderr
    scale = max(abs(target), floor)
    if scale > 0.0 and se > inconclusive_frac * scale:
        return Verdict.INCONCLUSIVE
    if abs(estimate.value - target) <= k_sigma * se:
        return Verdict.PASS
    return Verdict.FAIL


def combine_verdicts(verdicts: Sequence[Verdict]) -> Verdict:
    vs = list(verdicts)
    if any(v == Verdict.FAIL for v in vs):
        return Verdict.FAIL
    if any(v == Verdict.INCONCLUSIVE for v in vs):
        return Verdict.INCONCLUSIVE
    return Verdict.PASS


def bool_verdict(ok: bool) -> Verdict:
    return Verdict.PASS if ok else Verdict.FAIL
