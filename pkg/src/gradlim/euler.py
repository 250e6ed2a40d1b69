"""Euler scheme for a two-component mechanical SDE and its error limit.

The system is

    dX1 = f11(X2) dB + f12(X1, X2) dt
    dX2 = f22(X1, X2) dt

on [0, 1], so X2 has no Brownian term.  The rescaled Euler error
n (X^n - X) converges stably to the solution U of the linear equation
(U_0 = 0)

    dU1 = f11'(X2) U2 dB + (d1 f12 U1 + d2 f12 U2) dt
          - f11'(X2) f22 dZ21 - d1 f12 f11 dZ12 - (d1 f12 f12 + d2 f12 f22) dZ22
    dU2 = (d1 f22 U1 + d2 f22 U2) dt
          - d1 f22 f11 dZ12 - (d1 f22 f12 + d2 f22 f22) dZ22

driven by

    dZ12 = dW / sqrt(12) + dB / 2,   dZ21 = -dW / sqrt(12) + dB / 2,
    dZ22 = dt / 2,

with W a Brownian motion independent of B.  This is the general
linearized-error equation dU = df(X) U dY - df(X) f(X) dZ with
Y = (B, t), restricted to the sparsity of the mechanical system; the
component Z11 never receives a nonzero coefficient here.

The exact solution is replaced by Euler on a grid 64 times finer, driven
by the same Brownian increments.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from ._accel import USE_NUMBA
from .paths import SamplePath, simulate_brownian
from .seeding import SeedLike, derive, make_rng, map_chunks
from .stats import (
    DEFAULT_K_SIGMA_MATRIX,
    DEFAULT_LEVEL,
    KSResult,
    Moments,
    Verdict,
    difference_distance,
    ks_2samp,
    mc_moments,
)

REFERENCE_RATIO = 64
ZERO_TOL = 1e-9
REP_CHUNK_ELEMENTS = 1 << 21

Scalar = Callable[[np.ndarray], np.ndarray]
Planar = Callable[[np.ndarray, np.ndarray], np.ndarray]
PlanarGrad = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


class NonFiniteError(FloatingPointError):
    """Raised when a coefficient evaluation produces inf or nan."""


@dataclass(frozen=True)
class MechanicalSDE:
    """Coefficients, their derivatives and the starting point.

    ``coef`` is set for members of the affine-plus-sine family handled by
    the compiled kernels; it is ``None`` for arbitrary callables.
    """

    f11: Scalar
    df11: Scalar
    f12: Planar
    grad_f12: PlanarGrad
    f22: Planar
    grad_f22: PlanarGrad
    x0: Tuple[float, float] = (0.0, 0.0)
    coef: Optional[Tuple[float, ...]] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @classmethod
    def from_coefficients(
        cls,
        a: Sequence[float] = (0.0, 0.0, 0.0),
        b: Sequence[float] = (0.0, 0.0, 0.0),
        c: Sequence[float] = (0.0, 0.0, 0.0),
        x0: Sequence[float] = (0.0, 0.0),
        name: str = "family",
    ) -> "MechanicalSDE":
        """f11 = a0 + a1 x2 + a2 sin x2, f12 = b . (1, x1, x2), f22 = c . (1, x1, x2)."""
        a0, a1, a2 = map(float, a)
        b0, b1, b2 = map(float, b)
        c0, c1, c2 = map(float, c)

        def const_grad(p, q):
            return lambda x1, x2: (np.full(np.shape(x1), p), np.full(np.shape(x1), q))

        return cls(
            f11=lambda x2: a0 + a1 * x2 + a2 * np.sin(x2),
            df11=lambda x2: a1 + a2 * np.cos(x2),
            f12=lambda x1, x2: b0 + b1 * x1 + b2 * x2,
            grad_f12=const_grad(b1, b2),
            f22=lambda x1, x2: c0 + c1 * x1 + c2 * x2,
            grad_f22=const_grad(c1, c2),
            x0=(float(x0[0]), float(x0[1])),
            coef=(a0, a1, a2, b0, b1, b2, c0, c1, c2),
            name=name,
            params={"a": [a0, a1, a2], "b": [b0, b1, b2], "c": [c0, c1, c2], "x0": [float(x0[0]), float(x0[1])]},
        )

    def scaled(self, factor: float) -> "MechanicalSDE":
        """Every f^{ij} multiplied by ``factor``."""
        k = float(factor)
        if self.coef is not None:
            co = np.asarray(self.coef) * k
            return MechanicalSDE.from_coefficients(co[0:3], co[3:6], co[6:9], self.x0, f"{k:g}*{self.name}")
        return MechanicalSDE(
            lambda x2: k * self.f11(x2),
            lambda x2: k * self.df11(x2),
            lambda x1, x2: k * self.f12(x1, x2),
            lambda x1, x2: tuple(k * g for g in self.grad_f12(x1, x2)),
            lambda x1, x2: k * self.f22(x1, x2),
            lambda x1, x2: tuple(k * g for g in self.grad_f22(x1, x2)),
            self.x0, None, f"{k:g}*{self.name}",
        )

    def describe(self) -> dict:
        return {"kind": self.name, **self.params}


def constant_system(a0: float = 1.0, b0: float = 0.0, c0: float = 0.0, x0=(0.0, 0.0)) -> MechanicalSDE:
    return MechanicalSDE.from_coefficients((a0, 0, 0), (b0, 0, 0), (c0, 0, 0), x0, "constant")


def linear_system(x0=(1.0, 1.0)) -> MechanicalSDE:
    """f11 = x2, f12 = 0, f22 = x1 + x2."""
    return MechanicalSDE.from_coefficients((0, 1, 0), (0, 0, 0), (0, 1, 1), x0, "linear")


def sine_mechanical(x0=(0.5, 0.5)) -> MechanicalSDE:
    """f11 = sin(x2), f12 = 0, f22 = x1."""
    return MechanicalSDE.from_coefficients((0, 0, 1), (0, 0, 0), (0, 1, 0), x0, "sine_mechanical")


SDE_PRESETS = {"constant": constant_system, "linear": linear_system, "sine_mechanical": sine_mechanical}


def sde_from_config(cfg: dict) -> MechanicalSDE:
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind == "family":
        return MechanicalSDE.from_coefficients(**cfg)
    if kind not in SDE_PRESETS:
        raise ValueError(f"unknown SDE preset {kind!r}; expected one of {sorted(SDE_PRESETS) + ['family']}")
    if "x0" in cfg:
        cfg["x0"] = tuple(cfg["x0"])
    return SDE_PRESETS[kind](**cfg)


# --------------------------------------------------------------------------
# Batch solvers

def _use_compiled(sde: MechanicalSDE) -> bool:
    return USE_NUMBA and sde.coef is not None


def euler_batch(sde: MechanicalSDE, dB: np.ndarray, T: float = 1.0) -> np.ndarray:
    """Euler trajectories (reps, N+1, 2) for increments dB of shape (reps, N)."""
    dB = np.ascontiguousarray(np.atleast_2d(dB), dtype=float)
    h = T / dB.shape[1]
    with np.errstate(all="ignore"):
        if _use_compiled(sde):
            return _kernels.euler_coef(np.asarray(sde.x0, float), dB, h, np.asarray(sde.coef, float))
        return _kernels.euler_numpy(sde.x0, dB, h, sde.f11, sde.f12, sde.f22)


def error_limit_batch(
    sde: MechanicalSDE, X: np.ndarray, dB: np.ndarray, dW: np.ndarray, T: float = 1.0,
    forcing_scale: float = 1.0,
) -> np.ndarray:
    """U trajectories (reps, N+1, 2) along the reference states X."""
    dB = np.ascontiguousarray(np.atleast_2d(dB), dtype=float)
    dW = np.ascontiguousarray(np.atleast_2d(dW), dtype=float)
    X = np.ascontiguousarray(X, dtype=float)
    if X.shape[:2] != (dB.shape[0], dB.shape[1] + 1) or dW.shape != dB.shape:
        raise ValueError("X, B and W must share a grid")
    h = T / dB.shape[1]
    with np.errstate(all="ignore"):
        if _use_compiled(sde):
            return _kernels.error_limit_coef(X, dB, dW, h, np.asarray(sde.coef, float), float(forcing_scale))
        return _kernels.error_limit_numpy(X, dB, dW, h, sde, forcing_scale)


def forcing_increments(sde: MechanicalSDE, X: np.ndarray, dZ12, dZ21, dZ22) -> np.ndarray:
    """The per-step forcing -df(X) f(X) dZ of the U equation, shape (reps, N, 2)."""
    x1, x2 = X[:, :-1, 0], X[:, :-1, 1]
    f11, d11 = sde.f11(x2), sde.df11(x2)
    f12, (p1, p2) = sde.f12(x1, x2), sde.grad_f12(x1, x2)
    f22, (q1, q2) = sde.f22(x1, x2), sde.grad_f22(x1, x2)
    g1 = -d11 * f22 * dZ21 - p1 * f11 * dZ12 - (p1 * f12 + p2 * f22) * dZ22
    g2 = -q1 * f11 * dZ12 - (q1 * f12 + q2 * f22) * dZ22
    return np.stack([g1, g2], axis=-1)


# --------------------------------------------------------------------------
# Path-level operations

def _raise_if_nonfinite(X: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(X)
    if bad.any():
        step = int(np.argwhere(bad.reshape(bad.shape[0], -1).any(axis=0))[0][0] // 2)
        raise NonFiniteError(f"{what}: non-finite state at grid index {step}")


def euler_solve(sde: MechanicalSDE, n: int, B: SamplePath) -> SamplePath:
    """Euler with n steps on [0, T] driven by B restricted to the grid k T/n."""
    coarse = B.restrict(n)
    X = euler_batch(sde, coarse.increments()[None, :], coarse.T)
    _raise_if_nonfinite(X, "euler_solve")
    return SamplePath(coarse.times.copy(), X[0])


def reference_solve(sde: MechanicalSDE, n_fine: int, B: SamplePath, n_coarse: Optional[int] = None) -> SamplePath:
    """Fine-grid Euler (proxy for the exact solution), optionally restricted."""
    if n_coarse is not None and n_fine < REFERENCE_RATIO * n_coarse:
        raise ValueError(f"reference grid must be at least {REFERENCE_RATIO}x the comparison grid")
    path = euler_solve(sde, n_fine, B)
    return path if n_coarse is None else path.restrict(n_coarse)


@dataclass
class ErrorLimitDrivers:
    """Brownian B and an independent W on a common grid, with Z increments."""

    B: SamplePath
    W: SamplePath

    def __post_init__(self):
        if self.B.N != self.W.N or abs(self.B.T - self.W.T) > 1e-12:
            raise ValueError("B and W must share a grid")

    @classmethod
    def simulate(cls, B: SamplePath, seed: SeedLike) -> "ErrorLimitDrivers":
        return cls(B, simulate_brownian(B.T, B.N, seed))

    def dZ12(self) -> np.ndarray:
        return self.W.increments() / math.sqrt(12.0) + 0.5 * self.B.increments()

    def dZ21(self) -> np.ndarray:
        return -self.W.increments() / math.sqrt(12.0) + 0.5 * self.B.increments()

    def dZ22(self) -> np.ndarray:
        return np.full(self.B.N, 0.5 * self.B.dt)

    def Z(self) -> Tuple[SamplePath, SamplePath, SamplePath]:
        t = self.B.times
        paths = [np.concatenate([[0.0], np.cumsum(d)]) for d in (self.dZ12(), self.dZ21(), self.dZ22())]
        return tuple(SamplePath(t.copy(), p) for p in paths)


def simulate_error_limit(
    sde: MechanicalSDE, X: SamplePath, drivers: ErrorLimitDrivers, forcing_scale: float = 1.0
) -> SamplePath:
    """Euler integration of the U equation along the reference path X.

    ``forcing_scale`` multiplies the Z-driven terms only; since U_0 = 0 the
    solution is linear in it.
    """
    if X.N != drivers.B.N:
        raise ValueError("X, B and W must share a grid")
    U = error_limit_batch(
        sde, X.values[None], drivers.B.increments()[None], drivers.W.increments()[None],
        X.T, forcing_scale,
    )
    _raise_if_nonfinite(U, "simulate_error_limit")
    return SamplePath(X.times.copy(), U[0])


# --------------------------------------------------------------------------
# Experiments

@dataclass
class ErrorBlock:
    """One n: moments of (n (X^n_1 - X_1), B_1) against (U_1, B_1)."""

    n: int
    reps: int
    aborted: int
    moments_lhs: Moments
    moments_rhs: Moments
    distances: dict
    ks: List[KSResult]
    identically_zero: bool
    verdict: Verdict

    def to_dict(self) -> dict:
        """Per-n block: moments of (error, B_1) and (U_1, B_1), KS and verdict."""

        def moments(m: Moments) -> dict:
            return {
                "mean": [e.value for e in m.mean[:2]],
                "variance": [e.value for e in m.variance[:2]],
                "cov_with_B": [m.covariance[i][2].value for i in range(2)],
            }

        def stderr(m: Moments) -> dict:
            return {
                "mean": [e.stderr for e in m.mean[:2]],
                "variance": [e.stderr for e in m.variance[:2]],
                "cov_with_B": [m.covariance[i][2].stderr for i in range(2)],
            }

        return {
            "n": self.n, "reps": self.reps, "aborted": self.aborted,
            "moments_lhs": moments(self.moments_lhs), "moments_rhs": moments(self.moments_rhs),
            "stderr": {"lhs": stderr(self.moments_lhs), "rhs": stderr(self.moments_rhs)},
            "distances": dict(self.distances),
            "ks": [k.to_dict() for k in self.ks],
            "identically_zero": self.identically_zero,
            "verdict": self.verdict.value,
        }


def _compare_moments(lhs: Moments, rhs: Moments) -> dict:
    out = {}
    for i, name in enumerate(("x1", "x2")):
        out[f"mean_{name}"] = difference_distance(lhs.mean[i], rhs.mean[i])
        out[f"var_{name}"] = difference_distance(lhs.variance[i], rhs.variance[i])
        out[f"cov_{name}_B"] = difference_distance(lhs.covariance[i][2], rhs.covariance[i][2])
    return out


def simulate_error_samples(
    sde: MechanicalSDE, n: int, reps: int, seed: SeedLike, ratio: int = REFERENCE_RATIO
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """(scaled error (R, 2), U_1 (R, 2), B_1 (R,), aborted count).

    Per replication: fine B increments, Euler at n and at ratio*n on the
    same path, and U along the fine reference with a fresh W.
    """
    N = n * ratio

    def one(size, ss):
        rng = make_rng(ss)
        dB = rng.standard_normal((size, N)) * math.sqrt(1.0 / N)
        dW = rng.standard_normal((size, N)) * math.sqrt(1.0 / N)
        Xf = euler_batch(sde, dB)
        Xc = euler_batch(sde, dB.reshape(size, n, ratio).sum(axis=2))
        U = error_limit_batch(sde, Xf, dB, dW)
        ok = np.isfinite(Xf).all(axis=(1, 2)) & np.isfinite(Xc).all(axis=(1, 2)) & np.isfinite(U).all(axis=(1, 2))
        err = n * (Xc[:, -1] - Xf[:, -1])
        return err[ok], U[ok, -1], dB[ok].sum(axis=1), int((~ok).sum())

    chunk = max(1, REP_CHUNK_ELEMENTS // (3 * N))
    parts = map_chunks(one, reps, chunk, seed)
    err = np.concatenate([p[0] for p in parts])
    U = np.concatenate([p[1] for p in parts])
    B1 = np.concatenate([p[2] for p in parts])
    return err, U, B1, sum(p[3] for p in parts)


def error_distribution_compare(
    sde: MechanicalSDE,
    n_list: Sequence[int],
    reps: int = 10_000,
    seed: SeedLike = 0,
    level: float = DEFAULT_LEVEL,
    k_sigma: float = DEFAULT_K_SIGMA_MATRIX,
    ratio: int = REFERENCE_RATIO,
) -> List[ErrorBlock]:
    """Compare n (X^n_1 - X_1) with the simulated U_1, jointly with B_1.

    Means, variances and covariances with B_1 must agree within
    ``k_sigma`` combined standard errors, and a two-sample KS test must
    pass for each component.  When both sides vanish (the error within
    ``ZERO_TOL``) the block passes without a KS test.
    """
    blocks = []
    for n in n_list:
        err, U, B1, aborted = simulate_error_samples(sde, n, reps, derive(seed, n), ratio)
        lhs = mc_moments(np.column_stack([err, B1]))
        rhs = mc_moments(np.column_stack([U, B1]))
        # coarse and fine sums of the same increments differ by rounding only
        zero = bool(np.max(np.abs(err), initial=0.0) <= ZERO_TOL and np.all(U == 0.0))
        if zero:
            dist = {k: 0.0 for k in _compare_moments(lhs, lhs)}
            ks = []
        else:
            dist = _compare_moments(lhs, rhs)
            ks = [ks_2samp(err[:, j], U[:, j], level) for j in range(2)]
        ok = all(d <= k_sigma for d in dist.values()) and all(k.passed for k in ks)
        blocks.append(ErrorBlock(
            int(n), err.shape[0], aborted, lhs, rhs, dist, ks, zero,
            Verdict.PASS if ok else Verdict.FAIL,
        ))
    return blocks


@dataclass
class OrderFit:
    n_list: List[int]
    sup_gaps: List[float]
    slope: float


def strong_error_order(
    sde: MechanicalSDE, n_list: Sequence[int], reps: int = 200, seed: SeedLike = 0,
    ratio: int = REFERENCE_RATIO,
) -> OrderFit:
    """Mean sup-norm gap between Euler at n and the fine reference, with
    the least-squares log-log slope against n."""
    gaps = []
    for n in n_list:
        N = n * ratio
        dB = make_rng(derive(seed, n)).standard_normal((reps, N)) * math.sqrt(1.0 / N)
        Xf = euler_batch(sde, dB)[:, ::ratio]
        Xc = euler_batch(sde, dB.reshape(reps, n, ratio).sum(axis=2))
        gaps.append(float(np.mean(np.max(np.abs(Xc - Xf), axis=(1, 2)))))
    slope = float(np.polyfit(np.log(n_list), np.log(gaps), 1)[0])
    return OrderFit([int(n) for n in n_list], gaps, slope)
