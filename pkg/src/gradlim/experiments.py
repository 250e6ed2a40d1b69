"""Named experiments: each turns a config into an :class:`ExperimentReport`.

Defaults reproduce the desk-scale budgets of the acceptance suite; any
field set in the config overrides them for every block of the experiment.
"""

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import euler, graduation, measures, paths
from .registry import LADDERS, REGISTRY_VERSION, build, lookup
from .report import Check, ExperimentReport, SuiteReport
from .seeding import derive, make_rng
from .stats import (
    DEFAULT_K_SIGMA,
    DEFAULT_K_SIGMA_MATRIX,
    DEFAULT_LEVEL,
    MCEstimate,
    Verdict,
    bool_verdict,
    difference_distance,
    verdict,
)

EXPERIMENTS = (
    "rajchman", "uniformity", "gamma", "bias", "change_of_measure",
    "rootzen", "eq19", "quadratic_form", "euler_error",
)
ALL = "all"
FORMATS = ("json", "csv")

ANCHORS = {
    "rajchman": "Fourier decay of self-similar Cantor measures: Rajchman exactly when 1/beta is not a Pisot number",
    "uniformity": "rescaled graduation error converges to a uniform variable independent of Y",
    "gamma": "scaled quadratic graduation error converges to the square field operator",
    "bias": "bias operators of nearest and one-sided graduation",
    "change_of_measure": "square field operator unchanged under an equivalent change of measure",
    "rootzen": "fast oscillatory Wiener integrals converge stably to an independent Brownian motion",
    "eq19": "joint limit of the two Euler-error integrals with the driving Brownian motion",
    "quadratic_form": "quadratic form of the perturbed Brownian martingale in the limit",
    "euler_error": "rescaled Euler error of the mechanical system converges to the linear error process",
}


@dataclass
class ExperimentConfig:
    """Declarative run description; ``None`` means the experiment default."""

    experiment: str = ALL
    seed: Optional[int] = None
    law: Optional[str] = None
    scheme: Optional[str] = None
    phi: Optional[str] = None
    chi: Optional[str] = None
    h: Optional[str] = None
    f: Optional[str] = None
    eta: Optional[str] = None
    zeta: Optional[str] = None
    sde: Optional[str] = None
    time_change: Optional[str] = None
    n_list: Optional[List[int]] = None
    samples: Optional[int] = None
    K: Optional[int] = None
    alpha: Optional[float] = None
    level: float = DEFAULT_LEVEL
    k_sigma: float = DEFAULT_K_SIGMA
    out: Optional[str] = None
    format: str = "json"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS + (ALL,):
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS + (ALL,)}")
        if self.format not in FORMATS:
            raise ValueError(f"unknown format {self.format!r}")
        if self.experiment == ALL and self.seed is None:
            raise ValueError("a seed is required for the full suite")
        for kind in ("law", "scheme", "phi", "chi", "h", "f", "eta", "zeta", "sde", "time_change"):
            name = getattr(self, kind)
            if name is not None:
                lookup(kind, name)
        if self.n_list is not None:
            self.n_list = [int(n) for n in self.n_list]
            if not self.n_list or any(n < 1 for n in self.n_list):
                raise ValueError("n_list must hold positive integers")
        if self.samples is not None and self.samples < 2:
            raise ValueError("samples must be at least 2")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if self.k_sigma <= 0:
            raise ValueError("k_sigma must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config fields: {sorted(extra)}")
        return cls(**d)

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d["registry_version"] = REGISTRY_VERSION
        return d

    @property
    def k_matrix(self) -> float:
        return self.k_sigma * DEFAULT_K_SIGMA_MATRIX / DEFAULT_K_SIGMA

    def pick(self, name: str, default):
        v = getattr(self, name)
        return default if v is None else v


def _tol(k: float) -> str:
    return f"{k:g} sigma"


def _seed(cfg: ExperimentConfig) -> int:
    return 0 if cfg.seed is None else int(cfg.seed)


def _new_report(cfg: ExperimentConfig, name: str) -> ExperimentReport:
    echo = cfg.echo()
    echo["experiment"] = name
    return ExperimentReport(name, ANCHORS[name], echo, cfg.seed)


# --------------------------------------------------------------------------
# measures

def _product_oracle(beta: float, u_cycles: float, factors: int = 80) -> complex:
    """Plain truncated product, independent of the library routine."""
    out = 1.0 + 0j
    for k in range(factors):
        out *= 0.5 * (1.0 + np.exp(2j * math.pi * u_cycles * (1.0 - beta) * beta**k))
    return complex(out)


def run_rajchman(cfg: ExperimentConfig) -> ExperimentReport:
    rep = _new_report(cfg, "rajchman")
    names = [cfg.law] if cfg.law else ["normal", "cantor_third", "cantor_0.4", "dirac"]
    samples = cfg.pick("samples", 100_000)
    seed = _seed(cfg)
    expected_of = {
        measures.Rajchman.YES: measures.DecayVerdict.DECAYING,
        measures.Rajchman.NO: measures.DecayVerdict.NON_DECAYING,
    }
    for i, name in enumerate(names):
        law = build("law", name)
        ladder = LADDERS[name]()
        res = measures.rajchman_decay_test(law, ladder, samples=samples, seed=derive(seed, i))
        rep.tables[f"decay_{name}"] = res.to_csv()
        expected = expected_of.get(law.rajchman_expected)
        rep.add(Check(
            f"decay[{name}]", bool_verdict(expected is not None and res.verdict == expected),
            float(res.abs_values[-1]), None, None, None, "verdict equals expected class",
            {"verdict": res.verdict.value, "expected": law.rajchman_expected.value,
             "threshold": res.threshold, "mode": res.mode},
        ))
        if law.name == "cantor":
            beta = law.params["beta"]
            pv, why = measures.pisot_catalog_check(beta)
            agree = expected_of.get(
                {measures.PisotVerdict.RAJCHMAN: measures.Rajchman.YES,
                 measures.PisotVerdict.NON_RAJCHMAN: measures.Rajchman.NO}.get(pv)
            ) == res.verdict
            rep.add(Check(
                f"pisot_agreement[{name}]", bool_verdict(agree), None, None, None, None,
                "catalog class matches decay verdict", {"pisot": pv.value, "explanation": why},
            ))
            if 1.0 / beta == round(1.0 / beta):
                # at u = 2 pi beta^-m the modulus is the same for every m
                oracle = np.array([abs(_product_oracle(beta, u / (2 * math.pi))) for u in ladder])
                dev = float(np.max(np.abs(res.abs_values - oracle)))
                rep.add(Check(
                    f"plateau[{name}]", bool_verdict(dev <= 0.01), float(np.mean(res.abs_values)), None,
                    float(oracle[0]), None, "abs 0.01 against a truncated product",
                    {"max_deviation": dev},
                ))
        if law.char_fn_exact is not None:
            x = measures.sample(law, samples, derive(seed, i, 1))
            u = float(ladder[0])
            emp = measures.char_fn_empirical(x, u)
            exact = complex(law.char_fn_exact(np.array([u]))[0])
            ok = emp.distance(exact) <= 4.0 or abs(emp.value - exact) <= 1e-12
            rep.add(Check.from_estimate(
                f"char_fn_empirical[{name}]", emp, exact, bool_verdict(ok), tolerance=_tol(4.0), u=u,
            ))
    return rep


# --------------------------------------------------------------------------
# graduation

def run_uniformity(cfg: ExperimentConfig) -> ExperimentReport:
    rep = _new_report(cfg, "uniformity")
    law = build("law", cfg.pick("law", "normal"))
    scheme = build("scheme", cfg.pick("scheme", "nearest"))
    n_list = cfg.pick("n_list", [1024])
    res = graduation.uniformity_independence_test(
        law, scheme, n_list, cfg.pick("samples", 100_000), _seed(cfg), cfg.level,
        joint_points=((1, 1.0), (0, 1.0)),
    )
    k_joint = cfg.k_matrix
    for row in res.rows:
        for j, ks in enumerate(row.ks):
            rep.add(Check(
                f"ks[{j}]", bool_verdict(ks.passed), ks.statistic, None, None, row.n,
                f"KS level {cfg.level:g}", {"critical_value": ks.critical_value, "count": ks.count},
            ))
        if row.correlation is not None:
            rep.add(Check.from_estimate(
                "correlation", row.correlation, 0.0, verdict(row.correlation, 0.0, cfg.k_sigma),
                row.n, _tol(cfg.k_sigma),
            ))
        for jp in row.joint:
            if jp["target"] is None:
                continue
            est = jp["estimate"]
            rep.add(Check.from_estimate(
                f"joint_character[k={jp['k'][0]:g}]", est, jp["target"],
                verdict(est, jp["target"], k_joint), row.n, _tol(k_joint),
                zeta=jp["zeta"], modulus=jp["modulus"],
            ))
    return rep


def _gamma_rows(rep, res, label, k):
    for row in res.rows:
        if row.verdict is not None:
            rep.add(Check.from_estimate(
                f"gamma[{label}]", row.estimate, row.target, row.verdict, row.n, _tol(k), alpha=row.alpha,
            ))
    rep.notes.extend(f"{label}: {note}" for note in res.notes)


def _gamma_blocks(cfg: ExperimentConfig) -> List[tuple]:
    """(scheme, law, phi) triples: nearest on two test functions plus dyadic."""
    if cfg.scheme is None:
        law = cfg.pick("law", "normal")
        blocks = [("nearest", law, p) for p in ([cfg.phi] if cfg.phi else ["identity", "sin"])]
        # a user ladder is meant for the nearest blocks; dyadic n is an exponent
        if cfg.law is None and cfg.phi is None and cfg.n_list is None:
            blocks.append(("dyadic", "uniform", "sin2pi"))
        return blocks
    if cfg.scheme == "dyadic":
        return [("dyadic", cfg.pick("law", "uniform"), cfg.pick("phi", "sin2pi"))]
    return [(cfg.scheme, cfg.pick("law", "normal"), cfg.pick("phi", "sin"))]


def run_gamma(cfg: ExperimentConfig) -> ExperimentReport:
    rep = _new_report(cfg, "gamma")
    seed = _seed(cfg)
    samples = cfg.pick("samples", 200_000)
    for b, (sname, lname, pname) in enumerate(_gamma_blocks(cfg)):
        law, phi, scheme = build("law", lname), build("phi", pname), build("scheme", sname)
        label = f"{sname},{lname},{pname}"
        if sname != "dyadic":
            res = graduation.estimate_gamma(
                law, phi, scheme, cfg.pick("n_list", [64, 256, 1024]), samples, derive(seed, b), cfg.k_sigma,
            )
            _gamma_rows(rep, res, label, cfg.k_sigma)
            continue
        c = 3.0 if cfg.alpha is None else float(cfg.alpha)
        scheme = graduation.GraduationScheme("dyadic", alpha_rule=c)
        res = graduation.estimate_gamma(
            law, phi, scheme, cfg.pick("n_list", [8, 10, 12]), samples, derive(seed, b), cfg.k_sigma,
        )
        _gamma_rows(rep, res, label, cfg.k_sigma)
        if law.name != "uniform":
            continue
        grad_sq = measures.expectation(law, phi.grad_sq).value
        for row in res.rows:
            if row.n > graduation.DYADIC_ORACLE_MAX_N:
                continue
            oracle = graduation.dyadic_gamma_oracle(phi, row.n, row.alpha)
            rep.add(Check.from_estimate(
                f"gamma_vs_exact[{label}]", row.estimate, oracle,
                verdict(row.estimate, oracle, cfg.k_sigma), row.n, _tol(cfg.k_sigma),
            ))
        last = max((r for r in res.rows if r.n <= graduation.DYADIC_ORACLE_MAX_N), key=lambda r: r.n, default=None)
        if last is None:
            rep.notes.append(f"{label}: every n exceeds the exact-oracle range")
            continue
        ratio = graduation.dyadic_gamma_oracle(phi, last.n, last.alpha) / (c * grad_sq)
        rep.add(Check(
            f"limit_constant[{label}]", bool_verdict(abs(ratio - 1 / 12) <= 1e-4 / 12), ratio, None,
            1 / 12, last.n, "relative 1e-4",
            {"literal_constant": 1 / 3, "literal_limit": res.literal_target},
        ))
    return rep


def run_bias(cfg: ExperimentConfig) -> ExperimentReport:
    rep = _new_report(cfg, "bias")
    seed = _seed(cfg)
    law = build("law", cfg.pick("law", "normal"))
    for mode in ([cfg.scheme] if cfg.scheme else ["nearest", "default", "excess"]):
        scheme = build("scheme", mode)
        local = scheme.rule == "n^2"
        phi = build("phi", cfg.pick("phi", "sin"))
        chi = build("chi", cfg.pick("chi", "sin" if local else "one"))
        n_list = cfg.pick("n_list", [8, 16, 32] if local else [64, 256, 1024])
        samples = cfg.pick("samples", 2_000_000 if local else 1_000_000)
        label = f"{mode},{phi.name},{chi.name}"
        # every mode draws the same sample, so default and excess are paired
        res = graduation.estimate_bias_operators(
            law, phi, chi, scheme, n_list, samples, derive(seed, 0), cfg.k_sigma,
        )
        for row in res.rows:
            est = row.estimates.as_dict()
            for name, v in row.verdicts.items():
                rep.add(Check.from_estimate(
                    f"{name}[{label}]", est[name], res.targets[name], v, row.n, _tol(cfg.k_sigma),
                ))
            e = row.estimates
            exact = (
                e.a_tilde.value == (e.a_bar.value + e.a_under.value) / 2
                and e.a_slash.value == (e.a_bar.value - e.a_under.value) / 2
            )
            rep.add(Check(f"estimator_identity[{label}]", bool_verdict(exact), None, None, None, row.n, "exact"))
        rep.notes.extend(f"{label}: {note}" for note in res.notes)
        rep.notes.extend(
            f"{label}: literal {k} limit {v!r}" for k, v in sorted(res.literal_targets.items()) if v is not None
        )
        if local:
            ratio = res.locality_ratio()
            rep.add(Check(
                f"locality[{label}]", bool_verdict(ratio <= 0.1), ratio, None, 0.1, None,
                "last over first fourth moment <= 0.1",
                {"fourth_moments": [r.estimates.fourth_moment.value for r in res.rows]},
            ))
    return rep


def run_change_of_measure(cfg: ExperimentConfig) -> ExperimentReport:
    rep = _new_report(cfg, "change_of_measure")
    seed = _seed(cfg)
    law = build("law", cfg.pick("law", "normal"))
    h = build("h", cfg.pick("h", "one_plus_half_sin"))
    scheme = build("scheme", cfg.pick("scheme", "nearest"))
    n_list = cfg.pick("n_list", [256, 1024])
    samples = cfg.pick("samples", 200_000)
    phis = [cfg.phi] if cfg.phi else ["sin", "identity"]
    for b, pname in enumerate(phis):
        phi = build("phi", pname)
        res = graduation.gamma_change_of_measure(law, h, phi, scheme, n_list, samples, derive(seed, b), cfg.k_sigma)
        label = f"{scheme.mode},{pname}"
        for row in res.rows:
            if row.verdict is not None:
                rep.add(Check.from_estimate(
                    f"weighted_gamma[{label}]", row.estimate, row.target, row.verdict, row.n,
                    _tol(cfg.k_sigma), unweighted_target=res.unweighted_target,
                ))
        if pname == "identity" and res.target is not None:
            same = abs(res.target - res.unweighted_target) <= 1e-12
            rep.add(Check(
                f"target_invariance[{label}]", bool_verdict(same), res.target, None, res.unweighted_target,
                None, "abs 1e-12",
            ))
    return rep


# --------------------------------------------------------------------------
# paths

def run_rootzen(cfg: ExperimentConfig) -> ExperimentReport:
    rep = _new_report(cfg, "rootzen")
    f = build("f", cfg.pick("f", "theta"))
    clock = build("time_change", cfg.time_change) if cfg.time_change else None
    res = paths.verify_rootzen_limit(
        f, cfg.pick("n_list", [256]), 1.0, cfg.pick("K", paths.DEFAULT_K), cfg.pick("samples", 20_000),
        _seed(cfg), clock, cfg.level, cfg.k_sigma,
    )
    for row in res.rows:
        extra = {"K": row.K, "rule": res.rule}
        rep.add(Check.from_estimate(
            "terminal_variance", row.variance, row.variance_target, row.verdict_variance, row.n,
            _tol(cfg.k_sigma), grid_target=row.grid_variance_target, **extra,
        ))
        rep.add(Check(
            "ks_gaussian", bool_verdict(row.ks.passed), row.ks.statistic, None, None, row.n,
            f"KS level {cfg.level:g}", {"critical_value": row.ks.critical_value, **extra},
        ))
        rep.add(Check.from_estimate(
            "covariance_with_M", row.covariance, row.covariance_target, row.verdict_covariance, row.n,
            _tol(cfg.k_sigma), **extra,
        ))
    return rep


def run_error_covariance(cfg: ExperimentConfig) -> ExperimentReport:
    rep = _new_report(cfg, "eq19")
    seed = _seed(cfg)
    n = cfg.pick("n_list", [64])[0]
    K = cfg.pick("K", 256)
    res = paths.euler_error_covariance(n, K, cfg.pick("samples", 20_000), derive(seed, 0), cfg.k_matrix)
    names = ("I1", "I2", "B")
    for i in range(3):
        for j in range(i, 3):
            rep.add(Check.from_estimate(
                f"cov[{names[i]},{names[j]}]", res.moments.covariance[i][j], float(res.target[i, j]),
                res.verdicts[i][j], n, _tol(cfg.k_matrix), K=K, grid_target=float(res.grid_target[i, j]),
            ))
    tele = paths.telescoping_errors(n, [16, 64, 256], 2_000, derive(seed, 1))
    values = [r.mean_abs_error.value for r in tele]
    for r in tele:
        if r.K == 64:
            rep.add(Check.from_estimate(
                "telescoping[K=64]", r.mean_abs_error, 0.02, bool_verdict(r.mean_abs_error.value < 0.02), n,
                "mean abs < 0.02", predicted=r.predicted,
            ))
    rep.add(Check(
        "telescoping_decreasing", bool_verdict(all(a > b for a, b in zip(values, values[1:]))), None, None,
        None, n, "strictly decreasing in K", {"K": [r.K for r in tele], "mean_abs_error": values},
    ))
    return rep


def run_quadratic_form(cfg: ExperimentConfig) -> ExperimentReport:
    rep = _new_report(cfg, "quadratic_form")
    eta = build("eta", cfg.pick("eta", "one"))
    zeta = build("zeta", cfg.pick("zeta", "one"))
    f = build("f", cfg.pick("f", "theta"))
    res = paths.quadratic_form_limit(
        eta, zeta, f, cfg.pick("n_list", [256]), cfg.pick("K", 32), cfg.pick("samples", 100_000),
        _seed(cfg), k_sigma=cfg.k_sigma,
    )
    rep.tables["rows"] = [row.to_dict() for row in res.rows]
    for row in res.rows:
        extra = {"K": row.K, "halved_target": row.halved_target, "grid_target": row.grid_target}
        rep.add(Check.from_estimate(
            "real_part", row.estimate.real, row.target, row.verdict_re, row.n, _tol(cfg.k_sigma), **extra,
        ))
        rep.add(Check.from_estimate(
            "imaginary_part", row.estimate.imag, 0.0, row.verdict_im, row.n, _tol(cfg.k_sigma), **extra,
        ))
    rep.notes.extend(res.notes)
    return rep


# --------------------------------------------------------------------------
# euler

def driver_identity_checks(reps: int, N: int, seed, k: float) -> List[Check]:
    """Z12 + Z21 = B pathwise, Var Z12_1 = Var Z21_1 = 1/3, Cov = 1/6."""
    rng = make_rng(seed)
    dB = rng.standard_normal((reps, N)) / math.sqrt(N)
    dW = rng.standard_normal((reps, N)) / math.sqrt(N)
    Z12 = np.cumsum(dW / math.sqrt(12.0) + 0.5 * dB, axis=1)
    Z21 = np.cumsum(-dW / math.sqrt(12.0) + 0.5 * dB, axis=1)
    B = np.cumsum(dB, axis=1)
    gap = float(np.max(np.abs(Z12 + Z21 - B)))
    from .stats import mc_moments

    mom = mc_moments(np.column_stack([Z12[:, -1], Z21[:, -1]]))
    checks = [Check("driver_sum_identity", bool_verdict(gap <= 1e-12), gap, None, 0.0, None, "abs 1e-12")]
    for name, est, target in (
        ("var_Z12", mom.covariance[0][0], 1 / 3),
        ("var_Z21", mom.covariance[1][1], 1 / 3),
        ("cov_Z12_Z21", mom.covariance[0][1], 1 / 6),
    ):
        checks.append(Check.from_estimate(name, est, target, verdict(est, target, k), None, _tol(k)))
    return checks


def run_euler_error(cfg: ExperimentConfig) -> ExperimentReport:
    rep = _new_report(cfg, "euler_error")
    seed = _seed(cfg)
    k = cfg.k_matrix
    n_list = cfg.pick("n_list", [128])
    reps = cfg.pick("samples", 10_000)
    sde = build("sde", cfg.pick("sde", "sine_mechanical"))
    blocks = euler.error_distribution_compare(sde, n_list, reps, derive(seed, 0), cfg.level, k)
    rep.tables[f"blocks_{sde.name}"] = [b.to_dict() for b in blocks]
    for blk in blocks:
        for name, d in blk.distances.items():
            i = 0 if name.endswith("x1") or "_x1_" in name else 1
            kind = name.split("_")[0]
            lhs = {"mean": blk.moments_lhs.mean[i], "var": blk.moments_lhs.variance[i],
                   "cov": blk.moments_lhs.covariance[i][2]}[kind]
            rhs = {"mean": blk.moments_rhs.mean[i], "var": blk.moments_rhs.variance[i],
                   "cov": blk.moments_rhs.covariance[i][2]}[kind]
            rep.add(Check.from_estimate(
                f"{name}[{sde.name}]", lhs, rhs.value, bool_verdict(d <= k), blk.n, _tol(k),
                target_stderr=rhs.stderr, distance=d, aborted=blk.aborted,
            ))
        for j, ks in enumerate(blk.ks):
            rep.add(Check(
                f"ks_two_sample[{sde.name},x{j + 1}]", bool_verdict(ks.passed), ks.statistic, None, None,
                blk.n, f"KS level {cfg.level:g}", {"critical_value": ks.critical_value},
            ))
        if blk.aborted:
            rep.notes.append(f"n={blk.n}: {blk.aborted} replications aborted on non-finite states")
    if cfg.sde is None:
        const = euler.constant_system()
        blk = euler.error_distribution_compare(const, n_list[:1], 1_000, derive(seed, 1), cfg.level, k)[0]
        rep.add(Check(
            "constant_system_zero", bool_verdict(blk.identically_zero), None, None, 0.0, blk.n,
            f"|error| <= {euler.ZERO_TOL:g} and U == 0",
        ))
    for c in driver_identity_checks(20_000, 64, derive(seed, 2), k):
        rep.add(c)
    return rep


RUNNERS: Dict[str, Callable[[ExperimentConfig], ExperimentReport]] = {
    "rajchman": run_rajchman,
    "uniformity": run_uniformity,
    "gamma": run_gamma,
    "bias": run_bias,
    "change_of_measure": run_change_of_measure,
    "rootzen": run_rootzen,
    "eq19": run_error_covariance,
    "quadratic_form": run_quadratic_form,
    "euler_error": run_euler_error,
}


def run(cfg: ExperimentConfig) -> SuiteReport:
    """Run one experiment, or every experiment for ``all`` (seeded per name)."""
    if cfg.experiment != ALL:
        return SuiteReport(cfg.seed, [RUNNERS[cfg.experiment](cfg)])
    reports = []
    for i, name in enumerate(EXPERIMENTS):
        sub = ExperimentConfig(**{**asdict(cfg), "experiment": name, "seed": cfg.seed})
        reports.append(RUNNERS[name](sub))
    return SuiteReport(cfg.seed, reports)
