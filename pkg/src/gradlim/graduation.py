"""Graduation maps, scaled errors and Monte Carlo estimators of the limit
Dirichlet-form operators they induce.

A graduation replaces Y by a deterministic Y_n (nearest mark, floor,
ceiling, dyadic digit damping, or a user perturbation).  The estimators
scale expectations of the increment ``phi(Y_n) - phi(Y)`` by ``alpha_n``
and compare them with the limits predicted by the smooth-density theory:

* ``alpha_n E[(phi(Y_n) - phi(Y))^2] -> E[Gamma[phi]]``
* the four bias-operator pairings against a second test function ``chi``
  (limit-model, approximating-model, symmetric and antisymmetric views),
* weak convergence of the rescaled error to a uniform variable
  independent of Y.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .measures import ProbabilityLaw, as_points, expectation, weighted_mean
from .seeding import SeedLike, map_chunks, make_rng
from .stats import (
    DEFAULT_INCONCLUSIVE_FRAC,
    DEFAULT_K_SIGMA,
    DEFAULT_LEVEL,
    KSResult,
    MCEstimate,
    Verdict,
    correlation_estimate,
    ks_test,
    verdict,
)

MODES = ("nearest", "default", "excess", "dyadic", "custom")
SAMPLE_CHUNK = 1 << 18
DYADIC_ORACLE_MAX_N = 20  # 2^n cells times the per-cell rule must fit in memory

Points = np.ndarray
AlphaRule = Union[None, str, float, Callable[[int], float]]


def theta(x):
    """Sawtooth 1/2 - {x} with {x} = x - floor(x); values in (-1/2, 1/2]."""
    x = np.asarray(x, dtype=float)
    out = 0.5 - (x - np.floor(x))
    return float(out) if out.ndim == 0 else out


def fractional_part(x):
    x = np.asarray(x, dtype=float)
    return x - np.floor(x)


# --------------------------------------------------------------------------
# Test functions

@dataclass(frozen=True)
class TestFunction:
    """A C^2 function on R^dim with analytic gradient and Laplacian.

    All callables take ``(count, dim)`` points; ``value`` and ``laplacian``
    return ``(count,)`` and ``grad`` returns ``(count, dim)``.  Products,
    sums and outer compositions keep the derivatives analytic.
    """

    __test__ = False  # not a pytest class

    dim: int
    value: Callable[[Points], np.ndarray]
    grad: Callable[[Points], np.ndarray]
    laplacian: Optional[Callable[[Points], np.ndarray]] = None
    lip_bound: Optional[float] = None
    name: str = "phi"

    def __call__(self, y) -> np.ndarray:
        return self.value(as_points(y, self.dim))

    def grad_sq(self, y) -> np.ndarray:
        g = self.grad(as_points(y, self.dim))
        return np.sum(g * g, axis=1)

    def __add__(self, other: "TestFunction") -> "TestFunction":
        lap = None
        if self.laplacian is not None and other.laplacian is not None:
            lap = lambda y: self.laplacian(y) + other.laplacian(y)
        lip = None
        if self.lip_bound is not None and other.lip_bound is not None:
            lip = self.lip_bound + other.lip_bound
        return TestFunction(
            self.dim,
            lambda y: self.value(y) + other.value(y),
            lambda y: self.grad(y) + other.grad(y),
            lap, lip, f"({self.name}+{other.name})",
        )

    def __mul__(self, other: "TestFunction") -> "TestFunction":
        def grad(y):
            return self.grad(y) * other.value(y)[:, None] + other.grad(y) * self.value(y)[:, None]

        lap = None
        if self.laplacian is not None and other.laplacian is not None:
            def lap(y):
                cross = np.sum(self.grad(y) * other.grad(y), axis=1)
                return self.laplacian(y) * other.value(y) + 2 * cross + self.value(y) * other.laplacian(y)

        return TestFunction(
            self.dim, lambda y: self.value(y) * other.value(y), grad, lap, None,
            f"{self.name}*{other.name}",
        )

    def square(self) -> "TestFunction":
        return self * self

    def scaled(self, c: float) -> "TestFunction":
        lap = None if self.laplacian is None else (lambda y: c * self.laplacian(y))
        lip = None if self.lip_bound is None else abs(c) * self.lip_bound
        return TestFunction(
            self.dim, lambda y: c * self.value(y), lambda y: c * self.grad(y), lap, lip,
            f"{c}*{self.name}",
        )

    def compose(self, f, df, d2f=None, name: Optional[str] = None) -> "TestFunction":
        """``f(self)`` for scalar f with derivatives df, d2f."""
        inner = self

        def grad(y):
            return df(inner.value(y))[:, None] * inner.grad(y)

        lap = None
        if d2f is not None and inner.laplacian is not None:
            def lap(y):
                v = inner.value(y)
                g = inner.grad(y)
                return d2f(v) * np.sum(g * g, axis=1) + df(v) * inner.laplacian(y)

        return TestFunction(
            inner.dim, lambda y: f(inner.value(y)), grad, lap, None,
            name or f"f({inner.name})",
        )


def coordinate(i: int = 0, dim: int = 1) -> TestFunction:
    e = np.eye(dim)[i]
    return TestFunction(
        dim,
        lambda y: y[:, i].copy(),
        lambda y: np.broadcast_to(e, y.shape).copy(),
        lambda y: np.zeros(y.shape[0]),
        1.0,
        f"y{i}" if dim > 1 else "y",
    )


def constant(c: float = 1.0, dim: int = 1) -> TestFunction:
    return TestFunction(
        dim,
        lambda y: np.full(y.shape[0], float(c)),
        lambda y: np.zeros_like(y),
        lambda y: np.zeros(y.shape[0]),
        0.0,
        f"const({c})",
    )


def univariate(f, df, d2f=None, name: str = "phi", lip_bound: Optional[float] = None) -> TestFunction:
    """Lift scalar callables on R to a one-dimensional TestFunction."""
    lap = None if d2f is None else (lambda y: d2f(y[:, 0]))
    return TestFunction(
        1, lambda y: f(y[:, 0]), lambda y: df(y[:, 0])[:, None], lap, lip_bound, name,
    )


def identity() -> TestFunction:
    return coordinate(0, 1)


def sine(freq: float = 1.0) -> TestFunction:
    w = float(freq)
    return univariate(
        lambda x: np.sin(w * x),
        lambda x: w * np.cos(w * x),
        lambda x: -w * w * np.sin(w * x),
        "sin" if w == 1.0 else f"sin({w:g}x)",
        abs(w),
    )


def cosine(freq: float = 1.0) -> TestFunction:
    w = float(freq)
    return univariate(
        lambda x: np.cos(w * x),
        lambda x: -w * np.sin(w * x),
        lambda x: -w * w * np.cos(w * x),
        "cos" if w == 1.0 else f"cos({w:g}x)",
        abs(w),
    )


# --------------------------------------------------------------------------
# Schemes

_NAMED_ALPHA = {
    "n^2": lambda n: float(n) ** 2,
    "n": lambda n: float(n),
    "3*4^n": lambda n: 3.0 * 4.0**n,
}
_DEFAULT_ALPHA = {"nearest": "n^2", "default": "n", "excess": "n", "dyadic": "3*4^n"}


@dataclass(frozen=True)
class GraduationScheme:
    """A deterministic perturbation y -> y_n and its bias scaling alpha_n.

    ``alpha_rule`` is one of ``"n^2"``, ``"n"``, ``"3*4^n"``, a number c
    (meaning c * 4**n), or a callable of n.  ``None`` picks the mode's
    default (n^2 for nearest, n for default/excess, 3*4^n for dyadic).
    For ``mode="custom"``, ``custom_xi(points, n)`` returns the perturbation
    and ``gamma`` is the isotropic constant g of the limit covariance g*I,
    used only for analytic targets.
    """

    mode: str = "nearest"
    n: int = 1
    alpha_rule: AlphaRule = None
    custom_xi: Optional[Callable[[Points, int], Points]] = None
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown graduation mode {self.mode!r}; expected one of {MODES}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"resolution index must be a positive integer, got {self.n}")
        if self.mode == "custom" and self.custom_xi is None:
            raise ValueError("custom mode needs custom_xi")
        if self.mode == "custom" and self.alpha_rule is None:
            raise ValueError("custom mode needs an explicit alpha_rule")
        if isinstance(self.alpha_rule, str) and self.alpha_rule not in _NAMED_ALPHA:
            raise ValueError(f"unknown alpha rule {self.alpha_rule!r}")

    @property
    def rule(self) -> AlphaRule:
        return _DEFAULT_ALPHA.get(self.mode) if self.alpha_rule is None else self.alpha_rule

    @property
    def alpha(self) -> float:
        rule = self.rule
        if isinstance(rule, str):
            return _NAMED_ALPHA[rule](self.n)
        if callable(rule):
            return float(rule(self.n))
        return float(rule) * 4.0**self.n

    @property
    def resolution(self) -> float:
        """Scale turning Y_n - Y into an O(1) error: n, or 2^n for dyadic."""
        return 2.0**self.n if self.mode == "dyadic" else float(self.n)

    def with_n(self, n: int) -> "GraduationScheme":
        return replace(self, n=int(n))

    def describe(self) -> dict:
        rule = self.rule
        return {
            "mode": self.mode,
            "n": self.n,
            "alpha_rule": rule if isinstance(rule, (str, int, float)) else "custom",
        }


def graduate(y, scheme: GraduationScheme) -> np.ndarray:
    """Apply the graduation componentwise; output has the shape of ``y``."""
    y = np.asarray(y, dtype=float)
    n = scheme.n
    if scheme.mode == "nearest":
        return np.floor(n * y) / n + 0.5 / n
    if scheme.mode == "default":
        return np.floor(n * y) / n
    if scheme.mode == "excess":
        return (np.floor(n * y) + 1.0) / n
    if scheme.mode == "dyadic":
        if y.ndim > 1 and y.shape[-1] != 1:
            raise ValueError("dyadic graduation is one-dimensional")
        if np.any((y < 0) | (y >= 1)):
            raise ValueError("dyadic graduation needs points in [0, 1)")
        scale = 2.0**n
        return y - 0.5 * fractional_part(scale * y) / scale
    pts = y.reshape(-1, 1) if y.ndim <= 1 else y
    out = pts + np.asarray(scheme.custom_xi(pts, n), dtype=float).reshape(pts.shape)
    return out.reshape(y.shape)


def scaled_error(y, scheme: GraduationScheme) -> np.ndarray:
    """resolution * (graduate(y) - y); equals theta(n y) exactly for nearest."""
    if scheme.mode == "nearest":
        return theta(scheme.n * np.asarray(y, dtype=float))
    y = np.asarray(y, dtype=float)
    return scheme.resolution * (graduate(y, scheme) - y)


def unit_residual(y, scheme: GraduationScheme) -> np.ndarray:
    """The rescaled error mapped onto [0, 1) (limit law: uniform)."""
    y = np.asarray(y, dtype=float)
    n = scheme.n
    if scheme.mode == "nearest":
        return 0.5 + theta(n * y)
    if scheme.mode == "default":
        return fractional_part(n * y)
    if scheme.mode == "excess":
        return 1.0 - fractional_part(n * y)
    if scheme.mode == "dyadic":
        return fractional_part(2.0**n * y)
    raise ValueError("unit_residual is undefined for custom perturbations")


# --------------------------------------------------------------------------
# Sampling helper

def draw(law: ProbabilityLaw, samples: int, seed: SeedLike, chunk: int = SAMPLE_CHUNK) -> Points:
    """``samples`` points as ``(samples, dim)``, drawn in seed-addressed chunks."""
    if samples < 2:
        raise ValueError("need at least 2 samples")

    def one(size, ss):
        return np.asarray(law.sampler(make_rng(ss), size), dtype=float).reshape(size, law.dim)

    return np.concatenate(map_chunks(one, samples, chunk, seed), axis=0)


def _check_scheme_law(law: ProbabilityLaw, scheme: GraduationScheme) -> None:
    if scheme.mode == "dyadic" and law.dim != 1:
        raise ValueError("dyadic graduation is one-dimensional")


# --------------------------------------------------------------------------
# Gamma

@dataclass
class EstimateRow:
    n: int
    alpha: float
    estimate: MCEstimate
    target: Optional[float]
    verdict: Optional[Verdict]

    def to_dict(self) -> dict:
        return {
            "n": self.n, "alpha": self.alpha, **self.estimate.to_dict(),
            "target": self.target, "verdict": None if self.verdict is None else self.verdict.value,
        }


@dataclass
class GammaResult:
    rows: List[EstimateRow]
    target: Optional[float]
    literal_target: Optional[float] = None
    target_method: str = ""
    notes: List[str] = field(default_factory=list)

    @property
    def final(self) -> EstimateRow:
        return self.rows[-1]


def gamma_target(
    law: ProbabilityLaw, phi: TestFunction, scheme: GraduationScheme,
    weight: Optional[Callable[[Points], np.ndarray]] = None,
    mc_samples: int = 1_000_000, seed: SeedLike = 0,
) -> Tuple[Optional[float], Optional[float], str]:
    """(target, literal-constant target, method) for alpha_n E[(dphi)^2].

    The integrand is always ``c * |grad phi|^2`` for a scheme constant c, so
    reweighting only changes the measure it is integrated against.
    """
    rule = scheme.rule
    const = literal_const = None
    if scheme.mode == "nearest" and rule == "n^2":
        const = 1.0 / 12.0
    elif scheme.mode in ("default", "excess") and rule == "n^2":
        const = 1.0 / 3.0
    elif scheme.mode == "dyadic" and not isinstance(rule, str) and not callable(rule):
        # c * 4^n E[(dphi)^2] -> (c/12) E[phi'^2]; E[{2^n Y}^2] / 4 = 1/12
        const, literal_const = float(rule) / 12.0, float(rule) / 3.0
    elif scheme.mode == "dyadic" and rule == "3*4^n":
        const, literal_const = 0.25, 1.0
    elif scheme.mode == "custom" and scheme.gamma is not None:
        const = float(scheme.gamma)
    if const is None:
        return None, None, "none"
    est = expectation(law, phi.grad_sq, weight=weight, mc_samples=mc_samples, seed=seed)
    method = "quadrature" if est.stderr == 0.0 else "monte-carlo"
    base = est.value
    if scheme.mode == "custom":
        # literal form sum_ij phi'_i phi'_j, without the covariance constant
        lit = expectation(
            law, lambda y: np.sum(phi.grad(y), axis=1) ** 2, weight=weight,
            mc_samples=mc_samples, seed=seed,
        ).value
        return const * base, lit, method
    return const * base, None if literal_const is None else literal_const * base, method


def estimate_gamma(
    law: ProbabilityLaw,
    phi: TestFunction,
    scheme: GraduationScheme,
    n_list: Sequence[int],
    samples: int = 200_000,
    seed: SeedLike = 0,
    k_sigma: float = DEFAULT_K_SIGMA,
    inconclusive_frac: float = DEFAULT_INCONCLUSIVE_FRAC,
) -> GammaResult:
    """alpha_n E[(phi(Y_n) - phi(Y))^2] for each n, with the analytic limit."""
    _check_scheme_law(law, scheme)
    y = draw(law, samples, seed)
    target, literal, method = gamma_target(law, phi, scheme, mc_samples=10 * samples, seed=seed)
    phi_y = phi.value(y)
    rows = []
    for n in n_list:
        s = scheme.with_n(n)
        d = phi.value(graduate(y, s)) - phi_y
        est = MCEstimate.from_samples(s.alpha * d * d)
        v = None if target is None else verdict(est, target, k_sigma, inconclusive_frac)
        rows.append(EstimateRow(int(n), s.alpha, est, target, v))
    notes = []
    if literal is not None and target is not None and not math.isclose(literal, target):
        notes.append(f"literal constant gives limit {literal!r}; derived limit {target!r}")
    return GammaResult(rows, target, literal, method, notes)


# --------------------------------------------------------------------------
# Bias operators

BIAS_NAMES = ("a_bar", "a_under", "a_tilde", "a_slash", "gamma", "fourth_moment")


@dataclass
class BiasEstimates:
    a_bar: MCEstimate
    a_under: MCEstimate
    a_tilde: MCEstimate
    a_slash: MCEstimate
    gamma: MCEstimate
    fourth_moment: MCEstimate

    def as_dict(self) -> Dict[str, MCEstimate]:
        return {k: getattr(self, k) for k in BIAS_NAMES}


def bias_pairings(phi_y, phi_n, chi_y, chi_n, alpha: float) -> BiasEstimates:
    """The four pairings from one batch of (phi, chi) values at Y and Y_n.

    a_tilde and a_slash are the half-sum and half-difference of a_bar and
    a_under; their standard errors come from the per-sample combinations.
    """
    d = phi_n - phi_y
    bar = alpha * d * chi_y
    under = -alpha * d * chi_n
    a_bar = MCEstimate.from_samples(bar)
    a_under = MCEstimate.from_samples(under)
    tilde_se = MCEstimate.from_samples(0.5 * (bar + under)).stderr
    slash_se = MCEstimate.from_samples(0.5 * (bar - under)).stderr
    n = a_bar.count
    a_tilde = MCEstimate((a_bar.value + a_under.value) / 2, tilde_se, n)
    a_slash = MCEstimate((a_bar.value - a_under.value) / 2, slash_se, n)
    gamma = MCEstimate.from_samples(alpha * d * d * (chi_n + chi_y) / 2)
    fourth = MCEstimate.from_samples(alpha * d**4)
    return BiasEstimates(a_bar, a_under, a_tilde, a_slash, gamma, fourth)


@dataclass
class BiasRow:
    n: int
    alpha: float
    estimates: BiasEstimates
    verdicts: Dict[str, Verdict]


@dataclass
class BiasResult:
    rows: List[BiasRow]
    targets: Dict[str, Optional[float]]
    literal_targets: Dict[str, Optional[float]] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def locality_ratio(self) -> float:
        """Last over first fourth-moment diagnostic."""
        first = self.rows[0].estimates.fourth_moment.value
        last = self.rows[-1].estimates.fourth_moment.value
        return last / first if first != 0 else 0.0


def bias_targets(
    law: ProbabilityLaw, phi: TestFunction, chi: TestFunction, scheme: GraduationScheme,
    mc_samples: int = 1_000_000, seed: SeedLike = 0,
) -> Tuple[Dict[str, Optional[float]], Dict[str, Optional[float]], List[str]]:
    """Limits of the pairings E[A[phi] chi] for the supported schemes."""
    targets: Dict[str, Optional[float]] = {k: None for k in BIAS_NAMES}
    literal: Dict[str, Optional[float]] = {}
    notes: List[str] = []
    rule = scheme.rule

    def E(g):
        return expectation(law, g, mc_samples=mc_samples, seed=seed).value

    def chi_v(y):
        return chi.value(y)

    if scheme.mode in ("nearest", "custom"):
        if scheme.mode == "nearest":
            if rule != "n^2":
                notes.append("bias targets for nearest mode assume alpha_n = n^2")
                return targets, literal, notes
            g = 1.0 / 12.0
        else:
            if scheme.gamma is None:
                notes.append("custom perturbation without gamma: targets omitted")
                return targets, literal, notes
            g = float(scheme.gamma)
        if phi.laplacian is None:
            notes.append("phi has no Laplacian: bias targets omitted")
            return targets, literal, notes
        targets["a_bar"] = E(lambda y: 0.5 * g * phi.laplacian(y) * chi_v(y))
        targets["gamma"] = E(lambda y: g * phi.grad_sq(y) * chi_v(y))
        if law.score is not None:
            drift = E(lambda y: np.sum(phi.grad(y) * law.score(y), axis=1) * chi_v(y))
            targets["a_tilde"] = targets["a_bar"] + 0.5 * g * drift
            targets["a_under"] = 2 * targets["a_tilde"] - targets["a_bar"]
            targets["a_slash"] = targets["a_bar"] - targets["a_tilde"]
            if scheme.mode == "custom":
                # literal drift coefficient g (not g/2) in the symmetric operator
                literal["a_tilde"] = targets["a_bar"] + g * drift
                literal["gamma"] = E(lambda y: np.sum(phi.grad(y), axis=1) ** 2 * chi_v(y))
        else:
            notes.append("law has no score: symmetric-operator targets omitted")
        return targets, literal, notes

    if scheme.mode in ("default", "excess"):
        if rule != "n":
            notes.append("shift-bias targets assume alpha_n = n")
            return targets, literal, notes
        sign = -1.0 if scheme.mode == "default" else 1.0
        first = E(lambda y: np.sum(phi.grad(y), axis=1) * chi_v(y))
        targets["a_bar"] = sign * 0.5 * first
        targets["a_under"] = -targets["a_bar"]
        targets["a_tilde"] = 0.0
        targets["a_slash"] = targets["a_bar"]
        # n E[(dphi)^2] is O(1/n) with stderr O(1/(n sqrt(N))): not testable
        return targets, literal, notes

    notes.append(f"no analytic bias targets for mode {scheme.mode!r}")
    return targets, literal, notes


def estimate_bias_operators(
    law: ProbabilityLaw,
    phi: TestFunction,
    chi: TestFunction,
    scheme: GraduationScheme,
    n_list: Sequence[int],
    samples: int = 1_000_000,
    seed: SeedLike = 0,
    k_sigma: float = DEFAULT_K_SIGMA,
    inconclusive_frac: float = DEFAULT_INCONCLUSIVE_FRAC,
    scale_floor: Optional[float] = None,
) -> BiasResult:
    """Per-n estimates of the four bias pairings, Gamma and the locality term.

    Zero targets are judged against ``scale_floor`` (default: the largest
    nonzero target magnitude) for the inconclusive rule.
    """
    _check_scheme_law(law, scheme)
    y = draw(law, samples, seed)
    targets, literal, notes = bias_targets(law, phi, chi, scheme, mc_samples=10 * samples, seed=seed)
    if scale_floor is None:
        nz = [abs(t) for t in targets.values() if t]
        scale_floor = max(nz) if nz else 0.0
    phi_y, chi_y = phi.value(y), chi.value(y)
    rows = []
    for n in n_list:
        s = scheme.with_n(n)
        yn = graduate(y, s)
        est = bias_pairings(phi_y, phi.value(yn), chi_y, chi.value(yn), s.alpha)
        verdicts = {
            k: verdict(e, targets[k], k_sigma, inconclusive_frac, scale_floor)
            for k, e in est.as_dict().items() if targets.get(k) is not None
        }
        rows.append(BiasRow(int(n), s.alpha, est, verdicts))
    return BiasResult(rows, targets, literal, notes)


# --------------------------------------------------------------------------
# Square field identity

@dataclass
class ConsistencyRow:
    n: int
    direct: MCEstimate
    combination: MCEstimate
    difference: MCEstimate
    discrepancy_sigma: float
    verdict_direct: Optional[Verdict]
    verdict_combination: Optional[Verdict]


@dataclass
class ConsistencyResult:
    rows: List[ConsistencyRow]
    target: Optional[float]


def gamma_consistency_check(
    law: ProbabilityLaw,
    phi: TestFunction,
    scheme: GraduationScheme,
    n_list: Sequence[int],
    chi: Optional[TestFunction] = None,
    samples: int = 200_000,
    seed: SeedLike = 0,
    k_sigma: float = DEFAULT_K_SIGMA,
    inconclusive_frac: float = DEFAULT_INCONCLUSIVE_FRAC,
) -> ConsistencyResult:
    """Compare two estimators of E[Gamma[phi] chi].

    direct:      alpha E[(dphi)^2 (chi(Y_n) + chi(Y)) / 2]
    combination: E[A~[phi^2] chi] - 2 E[A~[phi] phi chi], each symmetric
                 pairing estimated as -alpha/2 E[d(first) d(second)].
    The difference is estimated pairwise on the same samples.
    """
    _check_scheme_law(law, scheme)
    chi = chi or constant(1.0, law.dim)
    phi2 = phi.square()
    phichi = phi * chi
    y = draw(law, samples, seed)
    target = None
    if scheme.mode == "nearest" and scheme.rule == "n^2":
        target = expectation(law, lambda p: phi.grad_sq(p) * chi.value(p) / 12.0).value
    rows = []
    for n in n_list:
        s = scheme.with_n(n)
        yn = graduate(y, s)
        a = s.alpha
        d_phi = phi.value(yn) - phi.value(y)
        direct_s = a * d_phi**2 * (chi.value(yn) + chi.value(y)) / 2
        combo_s = (
            -0.5 * a * (phi2.value(yn) - phi2.value(y)) * (chi.value(yn) - chi.value(y))
            + a * d_phi * (phichi.value(yn) - phichi.value(y))
        )
        direct = MCEstimate.from_samples(direct_s)
        combo = MCEstimate.from_samples(combo_s)
        diff = MCEstimate.from_samples(direct_s - combo_s)
        sigma = diff.distance(0.0)
        vd = vc = None
        if target is not None:
            vd = verdict(direct, target, k_sigma, inconclusive_frac)
            vc = verdict(combo, target, k_sigma, inconclusive_frac)
        rows.append(ConsistencyRow(int(n), direct, combo, diff, sigma, vd, vc))
    return ConsistencyResult(rows, target)


# --------------------------------------------------------------------------
# Weak convergence: uniform residual independent of Y

@dataclass
class UniformityRow:
    n: int
    ks: List[KSResult]
    joint: List[dict]
    correlation: Optional[MCEstimate]
    psi_moment: Optional[MCEstimate]
    psi_target: Optional[float]


@dataclass
class UniformityResult:
    rows: List[UniformityRow]
    level: float


def _unit_interval_integral(psi: Callable[[np.ndarray], np.ndarray], order: int = 200) -> float:
    nodes, w = np.polynomial.legendre.leggauss(order)
    return float(0.5 * np.dot(w, psi(0.5 * (nodes + 1))))


def uniformity_independence_test(
    law: ProbabilityLaw,
    scheme: Optional[GraduationScheme],
    n_list: Sequence[int],
    samples: int = 100_000,
    seed: SeedLike = 0,
    level: float = DEFAULT_LEVEL,
    joint_points: Sequence[Tuple] = ((1, 1.0),),
    psi: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    psi_integral: Optional[float] = None,
    pair_form: bool = False,
) -> UniformityResult:
    """KS, joint-character and psi-moment checks of the residual's limit.

    The residual is ``unit_residual(Y, scheme)`` (values in [0, 1]), or for
    ``pair_form=True`` the fractional part {n X + Y} of a two-dimensional
    law (X, Y).  Each joint point is ``(k, zeta)`` with integer ``k`` (one
    per residual component) and frequency ``zeta`` paired with the sampled
    point; its target is Psi(zeta) when k = 0 and zero otherwise.
    """
    if pair_form and law.dim != 2:
        raise ValueError("pair form needs a two-dimensional law (X, Y)")
    if not pair_form and scheme is None:
        raise ValueError("a scheme is required unless pair_form is set")
    if not pair_form:
        _check_scheme_law(law, scheme)
    y = draw(law, samples, seed)
    if psi is not None and psi_integral is None:
        psi_integral = _unit_interval_integral(psi)
    rows = []
    for n in n_list:
        if pair_form:
            v = fractional_part(n * y[:, 0] + y[:, 1])[:, None]
        else:
            v = unit_residual(y, scheme.with_n(n))
        ks = [ks_test(v[:, j], lambda t: np.clip(t, 0.0, 1.0), level) for j in range(v.shape[1])]
        joint = []
        for k, zeta in joint_points:
            kk = np.broadcast_to(np.atleast_1d(np.asarray(k, dtype=float)), (v.shape[1],))
            zz = np.broadcast_to(np.atleast_1d(np.asarray(zeta, dtype=float)), (law.dim,))
            est = MCEstimate.from_samples(np.exp(2j * math.pi * (v @ kk) + 1j * (y @ zz)))
            target: Optional[complex] = 0j
            if not np.any(kk):
                target = None
                if law.char_fn_exact is not None:
                    target = complex(law.char_fn_exact(zz[0] if law.dim == 1 else zz[None, :])[0])
            gap = None if target is None else abs(est.value - target)
            joint.append({
                "k": kk.tolist(), "zeta": zz.tolist(), "estimate": est, "target": target,
                "modulus": gap, "sigma": None if gap is None else est.distance(target),
            })
        corr = None
        if not pair_form and law.dim == 1:
            corr = correlation_estimate(scaled_error(y[:, 0], scheme.with_n(n)), y[:, 0])
        pm = None
        if psi is not None:
            pm = MCEstimate.from_samples(psi(v[:, 0]))
        rows.append(UniformityRow(int(n), ks, joint, corr, pm, psi_integral))
    return UniformityResult(rows, level)


# --------------------------------------------------------------------------
# Change of measure

@dataclass
class ChangeOfMeasureRow:
    n: int
    alpha: float
    estimate: MCEstimate
    target: Optional[float]
    verdict: Optional[Verdict]


@dataclass
class ChangeOfMeasureResult:
    rows: List[ChangeOfMeasureRow]
    target: Optional[float]
    unweighted_target: Optional[float]


def gamma_change_of_measure(
    law: ProbabilityLaw,
    density_factor: Callable[[Points], np.ndarray],
    phi: TestFunction,
    scheme: GraduationScheme,
    n_list: Sequence[int],
    samples: int = 200_000,
    seed: SeedLike = 0,
    k_sigma: float = DEFAULT_K_SIGMA,
    inconclusive_frac: float = DEFAULT_INCONCLUSIVE_FRAC,
) -> ChangeOfMeasureResult:
    """Gamma estimate under the reweighted law h.P (self-normalized).

    The target integrates the same integrand as :func:`estimate_gamma`
    against the reweighted law, through the same quadrature routine.
    """
    _check_scheme_law(law, scheme)
    y = draw(law, samples, seed)
    h = np.asarray(density_factor(y), dtype=float)
    if np.any(~np.isfinite(h)) or np.any(h <= 0):
        raise ValueError("density factor must be finite and strictly positive on the sample")
    target, _, _ = gamma_target(law, phi, scheme, weight=density_factor, mc_samples=10 * samples, seed=seed)
    plain, _, _ = gamma_target(law, phi, scheme, mc_samples=10 * samples, seed=seed)
    phi_y = phi.value(y)
    rows = []
    for n in n_list:
        s = scheme.with_n(n)
        d = phi.value(graduate(y, s)) - phi_y
        est = weighted_mean(s.alpha * d * d, h)
        v = None if target is None else verdict(est, target, k_sigma, inconclusive_frac)
        rows.append(ChangeOfMeasureRow(int(n), s.alpha, est, target, v))
    return ChangeOfMeasureResult(rows, target, plain)


def dyadic_gamma_oracle(phi: TestFunction, n: int, alpha: float = 1.0, order: int = 16) -> float:
    """alpha E[(phi(Y_n) - phi(Y))^2] for Y uniform on [0, 1), dyadic mode.

    Deterministic: Gauss-Legendre on each of the 2^n dyadic cells, inside
    which {2^n y} is linear and the graduation is smooth.
    """
    if phi.dim != 1:
        raise ValueError("dyadic oracle is one-dimensional")
    if not 0 <= n <= DYADIC_ORACLE_MAX_N:
        raise ValueError(f"dyadic oracle supports 0 <= n <= {DYADIC_ORACLE_MAX_N}, got {n}")
    x, w = np.polynomial.legendre.leggauss(order)
    cells = 2**n
    pts = ((np.arange(cells)[:, None] + 0.5 * (x[None, :] + 1.0)) / cells).ravel()
    scheme = GraduationScheme("dyadic", n)
    d = phi.value(graduate(pts, scheme)[:, None]) - phi.value(pts[:, None])
    return float(alpha * np.dot(np.tile(w, cells), d * d) / (2 * cells))
