import math

import numpy as np
import pytest

from gradlim import _kernels, euler
from gradlim._accel import USE_NUMBA
from gradlim.paths import SamplePath, simulate_brownian
from gradlim.stats import Verdict

FAMILY = [
    euler.constant_system(a0=1.5, b0=0.2, c0=-0.3),
    euler.linear_system(),
    euler.sine_mechanical(),
    euler.MechanicalSDE.from_coefficients((0.3, -0.2, 0.7), (0.1, -0.5, 0.25), (0.4, 0.6, -0.8), (0.2, -0.1)),
]


def _increments(reps, N, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((reps, N)) / math.sqrt(N), rng.standard_normal((reps, N)) / math.sqrt(N)


def _kernel(fn):
    """The pure-python body of a compiled kernel (the function itself when numba is off)."""
    return getattr(fn, "py_func", fn)


@pytest.mark.parametrize("sde", FAMILY, ids=lambda s: s.name)
def test_compiled_and_numpy_kernels_agree(sde):
    dB, dW = _increments(5, 64, 1)
    coef = np.asarray(sde.coef)
    x0 = np.asarray(sde.x0)
    X_fast = _kernels.euler_coef(x0, dB, 1 / 64, coef)
    X_np = _kernels.euler_numpy(sde.x0, dB, 1 / 64, sde.f11, sde.f12, sde.f22)
    X_py = _kernel(_kernels.euler_coef)(x0, dB, 1 / 64, coef)
    assert np.allclose(X_fast, X_np, atol=1e-12) and np.allclose(X_py, X_np, atol=1e-12)
    U_fast = _kernels.error_limit_coef(X_np, dB, dW, 1 / 64, coef, 1.0)
    U_np = _kernels.error_limit_numpy(X_np, dB, dW, 1 / 64, sde, 1.0)
    assert np.allclose(U_fast, U_np, atol=1e-12)


def test_numba_is_used_by_default():
    from gradlim import _accel

    assert _accel.HAVE_NUMBA
    assert USE_NUMBA == (not _accel._flag("GRADLIM_DISABLE_NUMBA"))


def test_fallback_selected_by_environment(tmp_path):
    import subprocess
    import sys

    code = "from gradlim._accel import USE_NUMBA; print(USE_NUMBA)"
    out = subprocess.run([sys.executable, "-c", code], env={"GRADLIM_DISABLE_NUMBA": "1", "PATH": ""},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"


def test_constant_system_is_exact():
    sde = euler.constant_system(a0=2.0, b0=0.5, c0=1.0, x0=(1.0, -1.0))
    B = simulate_brownian(1.0, 128, seed=2)
    X = euler.euler_solve(sde, 32, B)
    t = X.times
    assert np.allclose(X.values[:, 0], 1.0 + 2.0 * B.restrict(32).values + 0.5 * t, atol=1e-12)
    assert np.allclose(X.values[:, 1], -1.0 + t, atol=1e-12)


def test_reference_ratio_enforced():
    B = simulate_brownian(1.0, 256, seed=3)
    with pytest.raises(ValueError):
        euler.reference_solve(euler.sine_mechanical(), 256, B, n_coarse=8)
    assert euler.reference_solve(euler.sine_mechanical(), 256, B, n_coarse=4).N == 4


def test_nonfinite_states_raise():
    sde = euler.MechanicalSDE.from_coefficients((1, 0, 0), (0, 0, 0), (0, 0, 1e200), x0=(0.0, 1e200))
    with pytest.raises(euler.NonFiniteError):
        euler.euler_solve(sde, 64, simulate_brownian(1.0, 64, seed=1))


def test_driver_identities():
    reps = 20_000
    Z12, Z21, B1 = [], [], []
    rng = np.random.default_rng(4)
    for _ in range(3):
        B = simulate_brownian(1.0, 32, seed=rng)
        d = euler.ErrorLimitDrivers.simulate(B, rng)
        z12, z21, z22 = d.Z()
        assert np.max(np.abs(z12.values + z21.values - B.values)) <= 1e-12
        assert z22.values[-1] == pytest.approx(0.5)
    # moment checks over many replications, vectorized
    dB = rng.standard_normal((reps, 16)) / 4
    dW = rng.standard_normal((reps, 16)) / 4
    z12 = (dW / math.sqrt(12) + dB / 2).sum(axis=1)
    z21 = (-dW / math.sqrt(12) + dB / 2).sum(axis=1)
    from gradlim.stats import mc_moments

    m = mc_moments(np.column_stack([z12, z21]))
    assert m.variance[0].distance(1 / 3) <= 4
    assert m.variance[1].distance(1 / 3) <= 4
    assert m.covariance[0][1].distance(1 / 6) <= 4


def test_drivers_need_common_grid():
    with pytest.raises(ValueError):
        euler.ErrorLimitDrivers(simulate_brownian(1.0, 8, seed=1), simulate_brownian(1.0, 16, seed=2))


@pytest.mark.parametrize("sde", [euler.linear_system(), euler.sine_mechanical()], ids=lambda s: s.name)
def test_error_process_linear_in_forcing(sde):
    B = simulate_brownian(1.0, 256, seed=5)
    X = euler.euler_solve(sde, 256, B)
    drivers = euler.ErrorLimitDrivers.simulate(B, 6)
    base = euler.simulate_error_limit(sde, X, drivers, 1.0).values
    for c in (-2.0, 0.5, 3.0):
        scaled = euler.simulate_error_limit(sde, X, drivers, c).values
        assert np.max(np.abs(scaled - c * base)) <= 1e-10


def test_forcing_quadruples_when_coefficients_double():
    sde = FAMILY[3]
    dB, dW = _increments(3, 32, 7)
    X = euler.euler_batch(sde, dB)
    dz12, dz21 = dW / math.sqrt(12) + dB / 2, -dW / math.sqrt(12) + dB / 2
    dz22 = np.full(dB.shape, 0.5 / 32)
    one = euler.forcing_increments(sde, X, dz12, dz21, dz22)
    two = euler.forcing_increments(sde.scaled(2.0), X, dz12, dz21, dz22)
    assert np.allclose(two, 4 * one, atol=1e-12)
    # the callable (non-family) path scales the same way
    generic = euler.MechanicalSDE(sde.f11, sde.df11, sde.f12, sde.grad_f12, sde.f22, sde.grad_f22, sde.x0)
    assert np.allclose(euler.forcing_increments(generic.scaled(2.0), X, dz12, dz21, dz22), two, atol=1e-12)


def test_constant_system_has_zero_error_limit():
    block = euler.error_distribution_compare(euler.constant_system(), [16], reps=200, seed=8)[0]
    assert block.identically_zero and block.verdict == Verdict.PASS and block.ks == []


def test_compare_is_deterministic_and_thread_independent(monkeypatch):
    sde = euler.sine_mechanical()
    monkeypatch.setenv("GRADLIM_THREADS", "1")
    a = euler.simulate_error_samples(sde, 8, 300, seed=9, ratio=16)
    b = euler.simulate_error_samples(sde, 8, 300, seed=9, ratio=16)
    monkeypatch.setenv("GRADLIM_THREADS", "3")
    c = euler.simulate_error_samples(sde, 8, 300, seed=9, ratio=16)
    for x, y, z in zip(a[:3], b[:3], c[:3]):
        assert np.array_equal(x, y) and np.array_equal(x, z)


def test_error_distribution_on_linear_system():
    blocks = euler.error_distribution_compare(euler.linear_system(), [64], reps=3000, seed=10)
    blk = blocks[0]
    assert blk.verdict == Verdict.PASS
    d = blk.to_dict()
    assert set(d) >= {"moments_lhs", "moments_rhs", "stderr", "ks", "verdict"}


def test_strong_order_close_to_one():
    fit = euler.strong_error_order(euler.sine_mechanical(), [16, 32, 64], reps=100, seed=11, ratio=16)
    assert -1.3 < fit.slope < -0.7


def test_sde_from_config():
    assert euler.sde_from_config({"kind": "linear", "x0": [2, 3]}).x0 == (2.0, 3.0)
    fam = euler.sde_from_config({"kind": "family", "a": [1, 0, 0], "c": [0, 1, 0]})
    assert fam.coef[0] == 1.0 and fam.coef[7] == 1.0
    with pytest.raises(ValueError):
        euler.sde_from_config({"kind": "cubic"})


def test_solution_path_shape():
    B = simulate_brownian(1.0, 64, seed=12)
    X = euler.euler_solve(euler.sine_mechanical(), 16, B)
    assert isinstance(X, SamplePath) and X.values.shape == (17, 2)
