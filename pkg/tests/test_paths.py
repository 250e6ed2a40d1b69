import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gradlim import paths
from gradlim.paths import OscillatorySpec, PeriodicFunction, SamplePath, StepFunction
from gradlim.stats import Verdict, mc_moments


# periodic and step functions ---------------------------------------------

def test_periodic_function_moments():
    th = PeriodicFunction.theta()
    assert th.mean == 0.0 and th.l2sq == pytest.approx(1 / 12)
    num = PeriodicFunction.from_callable(lambda s: 0.5 - s)
    assert num.mean == pytest.approx(0.0, abs=1e-12) and num.l2sq == pytest.approx(1 / 12, rel=1e-9)
    shifted = th.plus_constant(1.0)
    assert shifted.mean == 1.0 and shifted.l2sq == pytest.approx(1 + 1 / 12)
    assert th.scaled(2.0).l2sq == pytest.approx(1 / 3)
    assert th(np.array([1.25])) == pytest.approx(th(np.array([0.25])))


def test_grid_means_of_theta():
    th = PeriodicFunction.theta()
    # left points l/K average to 1/(2K); cell averages are exact
    assert th.grid_mean(64, "left") == pytest.approx(1 / 128)
    assert th.grid_mean(64, "cell") == pytest.approx(0.0, abs=1e-15)
    assert th.grid_l2sq(64, "cell") == pytest.approx(1 / 12 - 1 / (12 * 64**2), rel=1e-12)
    with pytest.raises(ValueError):
        th.weights(8, "midpoint")


def test_step_function_inner_products():
    one = StepFunction.constant(1.0)
    half = StepFunction((0.0, 0.5, 1.0), (1.0, 0.0))
    odd = StepFunction((0.0, 0.25, 1.0), (2.0, -1.0))
    assert one.inner(half) == pytest.approx(0.5)
    assert half.inner(odd) == pytest.approx(2 * 0.25 - 0.25)
    assert (half + odd).sq_norm() == pytest.approx(3**2 * 0.25 + 0.0 + (-1) ** 2 * 0.5)
    assert list(half(np.array([0.0, 0.49, 0.5, 1.0]))) == [1.0, 1.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        StepFunction((0.0, 1.0), (1.0, 2.0))


# sample paths ------------------------------------------------------------

def test_sample_path_grid_and_restriction():
    B = paths.simulate_brownian(2.0, 64, seed=1)
    assert B.N == 64 and B.T == 2.0 and B.dt == pytest.approx(1 / 32)
    coarse = B.restrict(16)
    assert np.array_equal(coarse.values, B.values[::4])
    with pytest.raises(ValueError):
        B.restrict(5)
    csv = B.to_csv().splitlines()
    assert csv[0] == "t,value" and len(csv) == 66
    with pytest.raises(ValueError):
        SamplePath(np.array([0.0, 0.1, 0.3]), np.zeros(3))


def test_brownian_increment_variance():
    incs = np.concatenate([paths.simulate_brownian(1.0, 100, seed=s).increments() for s in range(200)])
    assert incs.var() == pytest.approx(0.01, rel=0.05)


# oscillatory integrals ----------------------------------------------------

@pytest.mark.parametrize("rule", ["left", "cell"])
def test_isometry(rule):
    f = PeriodicFunction.theta().plus_constant(0.3)
    n, K, N = 16, 32, 16 * 32
    w = paths.oscillatory_weights(f, n, N, 1.0, rule)
    grid_var = float(np.sum(w**2) / N)
    spec = OscillatorySpec(f, n, K)
    vals = np.array([paths.oscillatory_integral(paths.simulate_brownian(1.0, N, seed=s), spec, rule).values[-1] for s in range(4000)])
    est = mc_moments(vals).variance[0]
    assert est.distance(grid_var) <= 4


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(a, b):
    B = paths.simulate_brownian(1.0, 8 * 16, seed=5)
    g, h = PeriodicFunction.theta(), PeriodicFunction.from_callable(lambda s: np.sin(2 * math.pi * s), resolution=1 << 10)
    combo = paths.linear_combination(a, g, b, h)
    lhs = paths.oscillatory_integral(B, OscillatorySpec(combo, 8, 16)).values
    rhs = a * paths.oscillatory_integral(B, OscillatorySpec(g, 8, 16)).values + b * paths.oscillatory_integral(B, OscillatorySpec(h, 8, 16)).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_oscillatory_grid_validation():
    with pytest.raises(ValueError):
        OscillatorySpec(PeriodicFunction.theta(), 4, 4)
    with pytest.raises(ValueError):
        paths.oscillatory_integral(paths.simulate_brownian(1.0, 100, seed=1), OscillatorySpec(PeriodicFunction.theta(), 4, 8))


def test_rootzen_limit_with_time_change():
    res = paths.verify_rootzen_limit(PeriodicFunction.theta(), [64], K=32, reps=4000, seed=2, time_change=lambda t: t**2)
    row = res.rows[0]
    assert res.clock_end == 1.0
    assert row.variance_target == pytest.approx(1 / 12)
    assert all(v != Verdict.FAIL for v in row.verdicts)


def test_rootzen_nonzero_mean_integrand():
    f = PeriodicFunction.theta().plus_constant(1.0)
    row = paths.verify_rootzen_limit(f, [32], K=16, reps=4000, seed=3).rows[0]
    assert row.covariance_target == pytest.approx(1.0)
    assert row.verdict_covariance == Verdict.PASS


# error integrals ----------------------------------------------------------

def test_period_weights_reproduce_path_integrals():
    n, K = 8, 16
    B = paths.simulate_brownian(1.0, n * K, seed=4)
    I1, I2 = paths.euler_error_integrals(B, n)
    w = np.tile(paths.error_integral_weights(K), (n, 1))
    dB = B.increments()
    assert I1.values[-1] == pytest.approx(dB @ w[:, 0], abs=1e-12)
    assert I2.values[-1] == pytest.approx(dB @ w[:, 1], abs=1e-12)


def test_telescoping_per_period():
    n, K = 4, 32
    B = paths.simulate_brownian(1.0, n * K, seed=6)
    I1, I2 = paths.euler_error_integrals(B, n)
    gap = (I1.values + I2.values - B.values)[K::K]
    assert np.allclose(gap, -B.values[K::K] / (2 * K), atol=1e-12)


def test_telescoping_errors_shrink_like_one_over_K():
    rows = paths.telescoping_errors(16, [8, 32, 128], reps=500, seed=7)
    errs = [r.mean_abs_error.value for r in rows]
    assert errs[0] > errs[1] > errs[2]
    for r in rows:
        assert r.mean_abs_error.value == pytest.approx(r.predicted, rel=0.15)


def test_grid_covariance_limit():
    assert np.allclose(paths.error_integral_grid_covariance(4096), paths.ERROR_INTEGRAL_TARGET, atol=1e-3)


def test_error_integrals_need_unit_horizon():
    with pytest.raises(ValueError):
        paths.euler_error_integrals(paths.simulate_brownian(2.0, 64, seed=1), 4)


# quadratic form ----------------------------------------------------------

def test_quadratic_form_target_values():
    one, minus = StepFunction.constant(1.0), StepFunction.constant(-1.0)
    assert paths.quadratic_form_target(one, one, 1 / 12) == pytest.approx(-math.exp(-2) / 12)
    assert paths.quadratic_form_target(one, minus, 1 / 12) == pytest.approx(1 / 12)
    assert paths.quadratic_form_target(one, StepFunction.constant(0.0), 1 / 12) == 0.0


def test_quadratic_form_symmetry():
    eta = StepFunction((0.0, 0.5, 1.0), (1.0, -0.5))
    zeta = StepFunction.constant(1.0)
    f = PeriodicFunction.theta()
    a = paths.quadratic_form_limit(eta, zeta, f, [16], K=8, reps=5000, seed=8)
    b = paths.quadratic_form_limit(zeta, eta, f, [16], K=8, reps=5000, seed=8)
    assert a.target == b.target
    ea, eb = a.rows[0].estimate.value, b.rows[0].estimate.value
    assert abs(ea - eb) <= 1e-12 * max(1.0, abs(ea))


def test_quadratic_form_zero_direction_is_exactly_zero():
    res = paths.quadratic_form_limit(StepFunction.constant(1.0), StepFunction.constant(0.0), PeriodicFunction.theta(), [16], K=8, reps=1000, seed=9)
    assert res.rows[0].estimate.value == 0
    assert res.rows[0].verdict_re == Verdict.PASS


def test_quadratic_form_methods_agree():
    one = StepFunction.constant(1.0)
    kw = dict(n_list=[32], K=16, reps=40_000, seed=10)
    a = paths.quadratic_form_limit(one, StepFunction.constant(-1.0), PeriodicFunction.theta(), method="paths", **kw)
    b = paths.quadratic_form_limit(one, StepFunction.constant(-1.0), PeriodicFunction.theta(), method="gaussian", **kw)
    for r in (a.rows[0], b.rows[0]):
        assert r.verdict_re == Verdict.PASS
    d = r.to_dict()
    assert set(d) >= {"n", "K", "estimate_re", "estimate_im", "stderr_re", "stderr_im", "target_re", "target_im", "verdict"}
    with pytest.raises(ValueError):
        paths.quadratic_form_limit(one, one, PeriodicFunction.theta(), [4], method="exact")
