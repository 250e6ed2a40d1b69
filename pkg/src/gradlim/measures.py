"""Probability laws, characteristic functions and Fourier-decay classification.

Conventions
-----------
Points are arrays of shape ``(count, dim)``; one-dimensional laws also accept
and return flat ``(count,)`` arrays at the public boundary.  The
``char_fn_exact`` attribute of a law uses angular frequency,
``E exp(i <u, X>)``.  :func:`cantor_char_fn` uses cycles,
``E exp(2 pi i u X)``, which makes the integer ladder ``3**m`` the natural
one for the middle-thirds set.  The two differ by a factor ``2 pi`` in ``u``.
"""

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import hermite_e, legendre

from .seeding import SeedLike, make_rng
from .stats import MCEstimate

Sampler = Callable[[np.random.Generator, int], np.ndarray]
QuadRule = Callable[[int], Tuple[np.ndarray, np.ndarray]]


class Rajchman(str, enum.Enum):
    YES = "yes"
    NO = "no"
    UNKNOWN = "unknown"


class DecayVerdict(str, enum.Enum):
    DECAYING = "decaying"
    NON_DECAYING = "non_decaying"
    INCONCLUSIVE = "inconclusive"


class PisotVerdict(str, enum.Enum):
    RAJCHMAN = "rajchman"
    NON_RAJCHMAN = "non_rajchman"
    UNKNOWN = "unknown"


def as_points(x, dim: int) -> np.ndarray:
    """Reshape to ``(count, dim)``."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1) if dim == 1 else a.reshape(1, -1)
    elif a.ndim == 1:
        a = a[:, None] if dim == 1 else a.reshape(1, -1)
    if a.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    return a


@dataclass
class ProbabilityLaw:
    """A sampleable law on R^dim with optional analytic companions.

    ``sampler(rng, count)`` returns a ``(count, dim)`` array.  ``score`` is
    the gradient of the log-density, returned as ``(count, dim)``.
    ``quad_rule(order)`` returns nodes ``(m, dim)`` and weights ``(m,)``
    summing to one; it is what analytic targets integrate against.
    """

    name: str
    dim: int
    sampler: Sampler
    char_fn_exact: Optional[Callable[[np.ndarray], np.ndarray]] = None
    density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    score: Optional[Callable[[np.ndarray], np.ndarray]] = None
    rajchman_expected: Rajchman = Rajchman.UNKNOWN
    quad_rule: Optional[QuadRule] = None
    params: Dict = field(default_factory=dict)

    def sample(self, count: int, seed: SeedLike = None) -> np.ndarray:
        return sample(self, count, seed)

    def describe(self) -> dict:
        return {"kind": self.name, **self.params}


def sample(law: ProbabilityLaw, count: int, seed: SeedLike = None) -> np.ndarray:
    """Draw ``count`` points; flat array for one-dimensional laws."""
    if count < 1:
        raise ValueError("count must be >= 1")
    pts = np.asarray(law.sampler(make_rng(seed), int(count)), dtype=float)
    pts = pts.reshape(count, law.dim)
    return pts[:, 0] if law.dim == 1 else pts


# --------------------------------------------------------------------------
# Constructors

def normal(mean: float = 0.0, std: float = 1.0) -> ProbabilityLaw:
    if std <= 0:
        raise ValueError("std must be positive")

    def sampler(rng, count):
        return mean + std * rng.standard_normal((count, 1))

    def char_fn(u):
        u = np.asarray(u, dtype=float).reshape(-1)
        return np.exp(1j * u * mean - 0.5 * (std * u) ** 2)

    def density(x):
        z = (as_points(x, 1)[:, 0] - mean) / std
        return np.exp(-0.5 * z * z) / (std * math.sqrt(2 * math.pi))

    def score(x):
        return -(as_points(x, 1) - mean) / std**2

    def quad(order):
        nodes, w = hermite_e.hermegauss(order)
        return (mean + std * nodes)[:, None], w / w.sum()

    return ProbabilityLaw(
        "normal", 1, sampler, char_fn, density, score, Rajchman.YES, quad,
        {"mean": mean, "std": std},
    )


def uniform(low: float = 0.0, high: float = 1.0) -> ProbabilityLaw:
    if not high > low:
        raise ValueError("need high > low")
    width = high - low

    def sampler(rng, count):
        return low + width * rng.random((count, 1))

    def char_fn(u):
        u = np.asarray(u, dtype=float).reshape(-1)
        out = np.ones(u.shape, dtype=complex)
        nz = u != 0
        un = u[nz]
        out[nz] = (np.exp(1j * un * high) - np.exp(1j * un * low)) / (1j * un * width)
        return out

    def density(x):
        y = as_points(x, 1)[:, 0]
        return np.where((y >= low) & (y < high), 1.0 / width, 0.0)

    def quad(order):
        nodes, w = legendre.leggauss(order)
        return (low + 0.5 * width * (nodes + 1))[:, None], w / w.sum()

    # no score: the distributional derivative of the density has atoms at the ends
    return ProbabilityLaw(
        "uniform", 1, sampler, char_fn, density, None, Rajchman.YES, quad,
        {"low": low, "high": high},
    )


def dirac(point: float) -> ProbabilityLaw:
    def sampler(rng, count):
        return np.full((count, 1), float(point))

    def char_fn(u):
        u = np.asarray(u, dtype=float).reshape(-1)
        return np.exp(1j * u * point)

    def quad(order):
        return np.array([[float(point)]]), np.array([1.0])

    return ProbabilityLaw(
        "dirac", 1, sampler, char_fn, None, None, Rajchman.NO, quad, {"point": point}
    )


@dataclass(frozen=True)
class CantorParams:
    """Symmetric Cantor measure keeping two intervals of ratio ``beta``."""

    beta: float
    product_truncation_tol: float = 1e-12
    sample_depth: int = 40

    def __post_init__(self):
        if not 0.0 < self.beta < 0.5:
            raise ValueError(f"beta must lie in (0, 1/2), got {self.beta}")
        if self.product_truncation_tol <= 0:
            raise ValueError("product_truncation_tol must be positive")
        if self.sample_depth < 1:
            raise ValueError("sample_depth must be positive")

    @property
    def truncation_error(self) -> float:
        """Bound on |X - X_depth| for the digit sampler."""
        return self.beta**self.sample_depth


def cantor_char_fn(params: CantorParams, u) -> np.ndarray:
    """``E exp(2 pi i u X)`` via the self-similar infinite product.

    X = sum_k b_k (1 - beta) beta^(k-1) with fair bits b_k, so the transform
    is prod_k (1 + exp(2 pi i u (1-beta) beta^(k-1))) / 2.  Each factor
    differs from one by at most pi |u| (1-beta) beta^(k-1), hence the tail
    after K factors is within exp(pi |u| beta^K) - 1 of one; K is the first
    index pushing that below the tolerance.  Returns a scalar for scalar u.
    """
    scalar = np.ndim(u) == 0
    uu = np.atleast_1d(np.asarray(u, dtype=float))
    beta = params.beta
    umax = float(np.max(np.abs(uu))) if uu.size else 0.0
    budget = math.log1p(params.product_truncation_tol)
    if umax == 0.0:
        n_factors = 1
    else:
        ratio = budget / (math.pi * umax)
        n_factors = max(1, math.ceil(math.log(ratio) / math.log(beta))) if ratio < 1 else 1
    k = np.arange(n_factors)
    half_angle = math.pi * (1.0 - beta) * np.outer(uu, beta**k)
    # factor = cos(a) exp(i a); magnitude and phase kept apart so |result| <= 1
    mag = np.prod(np.cos(half_angle), axis=1)
    phase = half_angle.sum(axis=1)
    out = mag * np.exp(1j * phase)
    big = np.abs(out) > 1.0
    out[big] /= np.abs(out[big])
    out[uu == 0.0] = 1.0
    return complex(out[0]) if scalar else out


def cantor(beta: float, sample_depth: int = 40, product_truncation_tol: float = 1e-12) -> ProbabilityLaw:
    params = CantorParams(beta, product_truncation_tol, sample_depth)
    scales = (1.0 - beta) * beta ** np.arange(sample_depth)

    def sampler(rng, count):
        bits = rng.integers(0, 2, size=(count, sample_depth), dtype=np.int8)
        return (bits @ scales)[:, None]

    def char_fn(u):
        u = np.asarray(u, dtype=float).reshape(-1)
        return cantor_char_fn(params, u / (2.0 * math.pi))

    verdict, _ = pisot_catalog_check(beta)
    expected = {
        PisotVerdict.RAJCHMAN: Rajchman.YES,
        PisotVerdict.NON_RAJCHMAN: Rajchman.NO,
    }.get(verdict, Rajchman.UNKNOWN)
    return ProbabilityLaw(
        "cantor", 1, sampler, char_fn, None, None, expected, None,
        {"beta": beta, "sample_depth": sample_depth,
         "product_truncation_tol": product_truncation_tol},
    )


def product(*factors: ProbabilityLaw) -> ProbabilityLaw:
    """Independent product law; companions are kept when every factor has them."""
    if not factors:
        raise ValueError("product of no laws")
    dims = [f.dim for f in factors]
    edges = np.cumsum([0] + dims)
    dim = int(edges[-1])

    def sampler(rng, count):
        return np.hstack([np.asarray(f.sampler(rng, count)).reshape(count, f.dim) for f in factors])

    char_fn = density = score = quad = None
    if all(f.char_fn_exact is not None for f in factors):
        def char_fn(u):
            u = np.asarray(u, dtype=float).reshape(-1, dim)
            out = np.ones(u.shape[0], dtype=complex)
            for f, a, b in zip(factors, edges[:-1], edges[1:]):
                part = u[:, a:b]
                out *= f.char_fn_exact(part[:, 0] if f.dim == 1 else part)
            return out

    if all(f.density is not None for f in factors):
        def density(x):
            x = as_points(x, dim)
            out = np.ones(x.shape[0])
            for f, a, b in zip(factors, edges[:-1], edges[1:]):
                out *= f.density(x[:, a:b])
            return out

    if all(f.score is not None for f in factors):
        def score(x):
            x = as_points(x, dim)
            return np.hstack([f.score(x[:, a:b]) for f, a, b in zip(factors, edges[:-1], edges[1:])])

    if all(f.quad_rule is not None for f in factors):
        def quad(order):
            per = max(4, int(round(order ** (1.0 / len(factors)))))
            rules = [f.quad_rule(per) for f in factors]
            nodes, weights = rules[0]
            for n2, w2 in rules[1:]:
                nodes = np.hstack([np.repeat(nodes, len(w2), axis=0), np.tile(n2, (len(weights), 1))])
                weights = np.outer(weights, w2).ravel()
            return nodes, weights

    expected = Rajchman.YES if all(f.rajchman_expected == Rajchman.YES for f in factors) else (
        Rajchman.NO if any(f.rajchman_expected == Rajchman.NO for f in factors) else Rajchman.UNKNOWN
    )
    return ProbabilityLaw(
        "product", dim, sampler, char_fn, density, score, expected, quad,
        {"factors": [f.describe() for f in factors]},
    )


_LAW_KINDS = ("normal", "uniform", "dirac", "cantor", "product")


def law_from_config(cfg: dict) -> ProbabilityLaw:
    """Build a law from ``{"kind": ..., parameters...}``."""
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind == "normal":
        return normal(**cfg)
    if kind == "uniform":
        return uniform(**cfg)
    if kind == "dirac":
        return dirac(**cfg)
    if kind == "cantor":
        return cantor(**cfg)
    if kind == "product":
        return product(*[law_from_config(f) for f in cfg.pop("factors")])
    raise ValueError(f"unknown law kind {kind!r}; expected one of {_LAW_KINDS}")


# --------------------------------------------------------------------------
# Expectations used for analytic targets

def expectation(
    law: ProbabilityLaw,
    g: Callable[[np.ndarray], np.ndarray],
    weight: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    order: int = 96,
    mc_samples: int = 1_000_000,
    seed: SeedLike = 0,
) -> MCEstimate:
    """E[g(Y)] (or E[w g] / E[w] when ``weight`` is given).

    Quadrature against ``law.quad_rule`` when present (stderr 0), else a
    Monte Carlo average over ``mc_samples`` draws.  ``g`` and ``weight``
    receive ``(m, dim)`` points.
    """
    if law.quad_rule is not None:
        nodes, w = law.quad_rule(order)
        vals = np.asarray(g(nodes), dtype=float)
        if weight is None:
            return MCEstimate(float(np.dot(w, vals)), 0.0, len(w))
        h = np.asarray(weight(nodes), dtype=float)
        return MCEstimate(float(np.dot(w, h * vals) / np.dot(w, h)), 0.0, len(w))
    pts = as_points(sample(law, mc_samples, seed), law.dim)
    vals = np.asarray(g(pts), dtype=float)
    if weight is None:
        return MCEstimate.from_samples(vals)
    return weighted_mean(vals, np.asarray(weight(pts), dtype=float))


def weighted_mean(values: np.ndarray, weights: np.ndarray) -> MCEstimate:
    """Self-normalized importance-weighted mean with delta-method stderr.

    The stderr carries the n/(n-1) correction so that unit weights give
    exactly the plain sample mean's std(ddof=1)/sqrt(n).
    """
    w = np.asarray(weights, dtype=float)
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("weighted_mean needs at least 2 samples")
    sw = w.sum()
    mu = float(np.dot(w, v) / sw)
    se = float(math.sqrt(np.sum((w * (v - mu)) ** 2) * v.size / (v.size - 1)) / sw)
    return MCEstimate(mu, se, v.size)


# --------------------------------------------------------------------------
# Characteristic functions

def char_fn_empirical(samples, u) -> MCEstimate:
    """Empirical E exp(i <u, X>) with real/imaginary standard errors."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    uu = np.atleast_1d(np.asarray(u, dtype=float))
    x = as_points(x, uu.size)
    if x.shape[0] < 2:
        raise ValueError("char_fn_empirical needs at least 2 samples")
    return MCEstimate.from_samples(np.exp(1j * (x @ uu)))


@dataclass
class DecayResult:
    verdict: DecayVerdict
    mode: str
    rows: List[dict]
    threshold: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["u", "re", "im", "abs", "stderr"], lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: repr(float(r[k])) for k in ("u", "re", "im", "abs", "stderr")})
        return buf.getvalue()

    @property
    def abs_values(self) -> np.ndarray:
        return np.array([r["abs"] for r in self.rows])


def geometric_ladder(ratio: float, powers: Sequence[int], scale: float = 1.0) -> np.ndarray:
    return scale * np.power(float(ratio), np.asarray(list(powers), dtype=float))


def rajchman_decay_test(
    law: ProbabilityLaw,
    frequency_ladder: Sequence[float],
    threshold: float = 0.05,
    samples: int = 100_000,
    seed: SeedLike = 0,
    z: float = 2.0,
    top_fraction: float = 0.25,
    direction: Optional[Sequence[float]] = None,
) -> DecayResult:
    """Classify |characteristic function| decay along a frequency ladder.

    The top rungs (last ``top_fraction`` of the ladder, at least two) decide:
    decaying when every |Psi| + z*stderr there is below ``threshold``,
    non-decaying when every |Psi| - z*stderr is above it, inconclusive
    otherwise.  The exact transform is used when the law has one; in
    empirical mode a stderr above threshold/2 forces inconclusive.  For
    dim > 1 the ladder runs along ``direction`` (default: first axis).
    """
    ladder = np.asarray(frequency_ladder, dtype=float)
    if ladder.ndim != 1 or ladder.size < 2 or np.any(np.diff(ladder) <= 0):
        raise ValueError("frequency ladder must be strictly increasing with >= 2 rungs")
    if direction is None:
        direction = np.eye(law.dim)[0]
    direction = np.asarray(direction, dtype=float).reshape(law.dim)
    freqs = np.outer(ladder, direction)
    rows = []
    if law.char_fn_exact is not None:
        mode = "exact"
        vals = law.char_fn_exact(freqs[:, 0] if law.dim == 1 else freqs)
        for u, v in zip(ladder, vals):
            rows.append({"u": u, "re": v.real, "im": v.imag, "abs": abs(v), "stderr": 0.0})
    else:
        mode = "empirical"
        x = sample(law, samples, seed)
        for u, freq in zip(ladder, freqs):
            est = char_fn_empirical(x, freq)
            rows.append({
                "u": u, "re": est.value.real, "im": est.value.imag,
                "abs": abs(est.value), "stderr": est.combined_stderr,
            })
    top = rows[-max(2, int(math.ceil(top_fraction * len(rows)))):]
    if mode == "empirical" and any(r["stderr"] > threshold / 2 for r in top):
        v = DecayVerdict.INCONCLUSIVE
    elif all(r["abs"] + z * r["stderr"] < threshold for r in top):
        v = DecayVerdict.DECAYING
    elif all(r["abs"] - z * r["stderr"] > threshold for r in top):
        v = DecayVerdict.NON_DECAYING
    else:
        v = DecayVerdict.INCONCLUSIVE
    return DecayResult(v, mode, rows, threshold)


# --------------------------------------------------------------------------
# Pisot catalog

# Minimal polynomials (highest degree first) of Pisot numbers above 2, the
# only ones that can equal 1/beta for beta in (0, 1/2).
PISOT_CATALOG: Tuple[Tuple[str, Tuple[int, ...]], ...] = (
    ("1+sqrt(2)", (1, -2, -1)),
    ("(3+sqrt(5))/2", (1, -3, 1)),
    ("1+sqrt(3)", (1, -2, -2)),
    ("(3+sqrt(13))/2", (1, -3, -1)),
    ("2+sqrt(3)", (1, -4, 1)),
    ("2+sqrt(5)", (1, -4, -1)),
    ("(5+sqrt(21))/2", (1, -5, 1)),
    ("root of x^3-2x^2-1", (1, -2, 0, -1)),
    ("root of x^3-3x^2+2x-1", (1, -3, 2, -1)),
    ("root of x^3-2x^2-x-1", (1, -2, -1, -1)),
)


@lru_cache(maxsize=None)
def _catalog_roots() -> Tuple[Tuple[str, float, Tuple[int, ...], float], ...]:
    out = []
    for name, coeffs in PISOT_CATALOG:
        roots = np.roots(coeffs)
        i_big = int(np.argmax(np.where(np.abs(roots.imag) < 1e-12, roots.real, -np.inf)))
        big = roots[i_big]
        others = np.delete(roots, i_big)
        conj_max = max(abs(r) for r in others)
        if abs(big.imag) > 1e-12 or big.real <= 2 or conj_max >= 1:
            raise AssertionError(f"catalog entry {name} is not a Pisot number above 2")
        out.append((name, float(big.real), coeffs, float(conj_max)))
    return tuple(out)


def pisot_catalog_check(beta: float, tol: float = 1e-9) -> Tuple[PisotVerdict, str]:
    """Expected Rajchman status of the Cantor measure with ratio ``beta``."""
    if not 0.0 < beta < 0.5:
        raise ValueError(f"beta must lie in (0, 1/2), got {beta}")
    q = 1.0 / beta
    k = round(q)
    if abs(q - k) <= tol * max(1.0, q):
        return PisotVerdict.NON_RAJCHMAN, f"1/beta = {k} is an integer >= 2, hence Pisot"
    for name, root, coeffs, conj in _catalog_roots():
        if abs(q - root) <= tol * max(1.0, q):
            return PisotVerdict.NON_RAJCHMAN, (
                f"1/beta = {name}, root of {list(coeffs)} with conjugates of modulus <= {conj:.6f} < 1"
            )
    frac = Fraction(q).limit_denominator(1000)
    if abs(q - float(frac)) <= tol * max(1.0, q) and frac.denominator > 1:
        return PisotVerdict.RAJCHMAN, (
            f"1/beta = {frac} is rational and not an integer, so not an algebraic integer"
        )
    return PisotVerdict.UNKNOWN, f"1/beta = {q!r} matches no catalog entry"
