"""Compare the compiled and pure-numpy Euler / error-limit kernels.

    python3 benchmarks/bench_kernels.py [--reps 2000] [--steps 4096] [--repeat 3]

The numpy kernels step all replications together, so the gap narrows as
``reps`` grows; the compiled ones loop per replication without temporaries.
"""

import argparse
import math
import time

import numpy as np

from gradlim import _kernels, euler
from gradlim._accel import HAVE_NUMBA


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--reps", type=int, default=2000)
    parser.add_argument("--steps", type=int, default=4096)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--sde", default="sine_mechanical", choices=sorted(euler.SDE_PRESETS))
    args = parser.parse_args(argv)
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    sde = euler.SDE_PRESETS[args.sde]()
    rng = np.random.default_rng(0)
    dB = rng.standard_normal((args.reps, args.steps)) / math.sqrt(args.steps)
    dW = rng.standard_normal((args.reps, args.steps)) / math.sqrt(args.steps)
    h = 1.0 / args.steps
    coef = np.asarray(sde.coef, dtype=float)
    x0 = np.asarray(sde.x0, dtype=float)

    # compile outside the timed region
    _kernels.euler_coef(x0, dB[:1, :2], h, coef)
    _kernels.error_limit_coef(np.zeros((1, 3, 2)), dB[:1, :2], dW[:1, :2], h, coef, 1.0)

    t_jit, X_jit = best_of(lambda: _kernels.euler_coef(x0, dB, h, coef), args.repeat)
    t_np, X_np = best_of(lambda: _kernels.euler_numpy(sde.x0, dB, h, sde.f11, sde.f12, sde.f22), args.repeat)
    u_jit, U_jit = best_of(lambda: _kernels.error_limit_coef(X_np, dB, dW, h, coef, 1.0), args.repeat)
    u_np, U_np = best_of(lambda: _kernels.error_limit_numpy(X_np, dB, dW, h, sde, 1.0), args.repeat)

    print(f"{args.sde}: {args.reps} replications x {args.steps} steps, best of {args.repeat}")
    print(f"{'kernel':<14}{'numba s':>10}{'numpy s':>10}{'speedup':>9}{'max diff':>11}")
    for name, a, b, xa, xb in (("euler", t_jit, t_np, X_jit, X_np), ("error_limit", u_jit, u_np, U_jit, U_np)):
        print(f"{name:<14}{a:>10.4f}{b:>10.4f}{b / a:>9.1f}{float(np.max(np.abs(xa - xb))):>11.1e}")


if __name__ == "__main__":
    main()
