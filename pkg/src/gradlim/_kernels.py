"""Time-stepping kernels for the mechanical SDE and its error-limit process.

The compiled kernels work on the coefficient family

    f11(x2)     = a0 + a1 x2 + a2 sin(x2)
    f12(x1, x2) = b0 + b1 x1 + b2 x2
    f22(x1, x2) = c0 + c1 x1 + c2 x2

packed as ``coef = (a0, a1, a2, b0, b1, b2, c0, c1, c2)``.  The numpy
versions take arbitrary vectorized callables and step all replications
at once; they are the fallback when numba is disabled and the only path
for user-supplied coefficient functions.

Array layout: increments are ``(reps, N)``, states are ``(reps, N+1, 2)``.
"""

import math

import numpy as np

from ._accel import njit

INV_SQRT12 = 1.0 / math.sqrt(12.0)


@njit
def euler_coef(x0, dB, h, coef):
    reps, N = dB.shape
    a0, a1, a2 = coef[0], coef[1], coef[2]
    b0, b1, b2 = coef[3], coef[4], coef[5]
    c0, c1, c2 = coef[6], coef[7], coef[8]
    X = np.empty((reps, N + 1, 2))
    for r in range(reps):
        x1 = x0[0]
        x2 = x0[1]
        X[r, 0, 0] = x1
        X[r, 0, 1] = x2
        for k in range(N):
            f11 = a0 + a1 * x2 + a2 * math.sin(x2)
            f12 = b0 + b1 * x1 + b2 * x2
            f22 = c0 + c1 * x1 + c2 * x2
            x1, x2 = x1 + f11 * dB[r, k] + f12 * h, x2 + f22 * h
            X[r, k + 1, 0] = x1
            X[r, k + 1, 1] = x2
    return X


@njit
def error_limit_coef(X, dB, dW, h, coef, forcing_scale):
    reps, N = dB.shape
    a0, a1, a2 = coef[0], coef[1], coef[2]
    b0, b1, b2 = coef[3], coef[4], coef[5]
    c0, c1, c2 = coef[6], coef[7], coef[8]
    U = np.zeros((reps, N + 1, 2))
    dz22 = 0.5 * h * forcing_scale
    for r in range(reps):
        u1 = 0.0
        u2 = 0.0
        for k in range(N):
            x1 = X[r, k, 0]
            x2 = X[r, k, 1]
            f11 = a0 + a1 * x2 + a2 * math.sin(x2)
            d11 = a1 + a2 * math.cos(x2)
            f12 = b0 + b1 * x1 + b2 * x2
            f22 = c0 + c1 * x1 + c2 * x2
            db = dB[r, k]
            dz12 = forcing_scale * (INV_SQRT12 * dW[r, k] + 0.5 * db)
            dz21 = forcing_scale * (-INV_SQRT12 * dW[r, k] + 0.5 * db)
            du1 = (
                d11 * u2 * db + (b1 * u1 + b2 * u2) * h
                - d11 * f22 * dz21 - b1 * f11 * dz12 - (b1 * f12 + b2 * f22) * dz22
            )
            du2 = (c1 * u1 + c2 * u2) * h - c1 * f11 * dz12 - (c1 * f12 + c2 * f22) * dz22
            u1 += du1
            u2 += du2
            U[r, k + 1, 0] = u1
            U[r, k + 1, 1] = u2
    return U


def euler_numpy(x0, dB, h, f11, f12, f22):
    reps, N = dB.shape
    X = np.empty((reps, N + 1, 2))
    x1 = np.full(reps, float(x0[0]))
    x2 = np.full(reps, float(x0[1]))
    X[:, 0, 0], X[:, 0, 1] = x1, x2
    for k in range(N):
        x1, x2 = x1 + f11(x2) * dB[:, k] + f12(x1, x2) * h, x2 + f22(x1, x2) * h
        X[:, k + 1, 0], X[:, k + 1, 1] = x1, x2
    return X


def error_limit_numpy(X, dB, dW, h, sde, forcing_scale=1.0):
    """Same recursion as :func:`error_limit_coef` for callable coefficients.

    ``sde`` provides ``f11, df11, f12, grad_f12, f22, grad_f22``.
    """
    reps, N = dB.shape
    U = np.zeros((reps, N + 1, 2))
    u1 = np.zeros(reps)
    u2 = np.zeros(reps)
    dz22 = 0.5 * h * forcing_scale
    for k in range(N):
        x1, x2 = X[:, k, 0], X[:, k, 1]
        f11, d11 = sde.f11(x2), sde.df11(x2)
        f12, (p1, p2) = sde.f12(x1, x2), sde.grad_f12(x1, x2)
        f22, (q1, q2) = sde.f22(x1, x2), sde.grad_f22(x1, x2)
        db = dB[:, k]
        dz12 = forcing_scale * (INV_SQRT12 * dW[:, k] + 0.5 * db)
        dz21 = forcing_scale * (-INV_SQRT12 * dW[:, k] + 0.5 * db)
        du1 = (
            d11 * u2 * db + (p1 * u1 + p2 * u2) * h
            - d11 * f22 * dz21 - p1 * f11 * dz12 - (p1 * f12 + p2 * f22) * dz22
        )
        du2 = (q1 * u1 + q2 * u2) * h - q1 * f11 * dz12 - (q1 * f12 + q2 * f22) * dz22
        u1 = u1 + du1
        u2 = u2 + du2
        U[:, k + 1, 0], U[:, k + 1, 1] = u1, u2
    return U
