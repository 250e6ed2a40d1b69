import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from gradlim import graduation as g
from gradlim import measures
from gradlim.registry import build
from gradlim.stats import Verdict

E2 = math.exp(-2.0)


# theta and the graduation maps -------------------------------------------

def test_theta_integrals_closed_form():
    # one period of theta is 1/2 - s on [0, 1)
    assert quad(lambda s: g.theta(s), 0, 1, points=[0.5])[0] == pytest.approx(0.0, abs=1e-14)
    assert quad(lambda s: g.theta(s) ** 2, 0, 1)[0] == pytest.approx(1 / 12, abs=1e-14)


def test_theta_periodic_and_floor_convention():
    x = np.array([-2.25, -0.5, 0.0, 0.3, 7.75])
    assert np.allclose(g.theta(x), g.theta(x + 3.0))
    assert g.theta(-0.25) == pytest.approx(-0.25)  # {-0.25} = 0.75
    assert g.theta(0.0) == 0.5
    assert np.all((g.fractional_part(x) >= 0) & (g.fractional_part(x) < 1))


@pytest.mark.parametrize("n", [1, 7, 64, 1000])
def test_nearest_identity(n):
    y = np.random.default_rng(n).standard_normal(10_000)
    s = g.GraduationScheme("nearest", n)
    assert np.max(np.abs(n * (g.graduate(y, s) - y) - g.theta(n * y))) <= 1e-12
    assert np.array_equal(g.scaled_error(y, s), g.theta(n * y))


@given(st.floats(-1e3, 1e3, allow_nan=False), st.integers(1, 2000))
def test_graduation_bounds(y, n):
    slack = 1e-12 * (1 + abs(y))  # floating-point rounding of n*y
    near = g.graduate(y, g.GraduationScheme("nearest", n)) - y
    low = g.graduate(y, g.GraduationScheme("default", n)) - y
    high = g.graduate(y, g.GraduationScheme("excess", n)) - y
    assert abs(near) <= 0.5 / n + slack
    assert -1.0 / n - slack < low <= slack
    assert -slack <= high < 1.0 / n + slack


@given(st.floats(0.0, 1.0, exclude_max=True), st.integers(1, 40))
def test_dyadic_bound(y, n):
    s = g.GraduationScheme("dyadic", n)
    assert abs(g.graduate(y, s) - y) < 2.0 ** (-n - 1)


def test_dyadic_domain_and_dimension():
    s = g.GraduationScheme("dyadic", 3)
    with pytest.raises(ValueError):
        g.graduate(np.array([1.0]), s)
    with pytest.raises(ValueError):
        g.graduate(np.zeros((4, 2)), s)


def test_custom_sawtooth_equals_nearest():
    y = np.random.default_rng(1).normal(size=(1000, 1))
    custom = build("scheme", "custom_sawtooth").with_n(37)
    near = g.GraduationScheme("nearest", 37)
    assert np.allclose(g.graduate(y, custom), g.graduate(y, near), atol=1e-12)


def test_scheme_validation_and_alpha():
    assert g.GraduationScheme("nearest", 8).alpha == 64
    assert g.GraduationScheme("default", 8).alpha == 8
    assert g.GraduationScheme("dyadic", 3).alpha == 3 * 64
    assert g.GraduationScheme("dyadic", 3, alpha_rule=1.0).alpha == 64
    assert g.GraduationScheme("nearest", 3, alpha_rule=lambda n: 2.0 * n).alpha == 6
    assert g.GraduationScheme("dyadic", 5).resolution == 32
    for bad in (dict(mode="round"), dict(n=0), dict(mode="custom", alpha_rule="n^2"),
                dict(mode="custom", custom_xi=lambda y, n: y), dict(alpha_rule="n^3")):
        with pytest.raises(ValueError):
            g.GraduationScheme(**bad)


def test_unit_residual_in_unit_interval():
    y = np.random.default_rng(2).normal(size=5000)
    for mode in ("nearest", "default", "excess"):
        r = g.unit_residual(y, g.GraduationScheme(mode, 13))
        assert r.min() >= 0.0 and r.max() <= 1.0
    with pytest.raises(ValueError):
        g.unit_residual(y, build("scheme", "custom_sawtooth"))


# test functions ------------------------------------------------------------

def _fd_check(phi, dim, seed=0):
    y = np.random.default_rng(seed).uniform(-2, 2, size=(20, dim))
    h = 1e-5
    grad = np.empty((20, dim))
    lap = np.zeros(20)
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = h
        grad[:, j] = (phi.value(y + e) - phi.value(y - e)) / (2 * h)
        lap += (phi.value(y + e) - 2 * phi.value(y) + phi.value(y - e)) / (h * h)
    assert np.allclose(phi.grad(y), grad, atol=1e-6)
    if phi.laplacian is not None:
        assert np.allclose(phi.laplacian(y), lap, atol=1e-3)


@pytest.mark.parametrize("phi", [g.identity(), g.sine(), g.cosine(), g.sine(2 * math.pi), g.constant(3.0)])
def test_test_function_derivatives(phi):
    _fd_check(phi, 1)


def test_test_function_algebra_derivatives():
    x, y = g.coordinate(0, 2), g.coordinate(1, 2)
    phi = x * y + (x * x).scaled(0.5)
    _fd_check(phi, 2)
    comp = g.sine().compose(np.exp, np.exp, np.exp, "exp(sin)")
    _fd_check(comp, 1)
    _fd_check(g.sine().square(), 1)
    assert phi(np.array([2.0, 3.0]))[0] == pytest.approx(8.0)


# square field --------------------------------------------------------------

def test_gamma_target_values():
    law = measures.normal()
    near = g.GraduationScheme("nearest")
    assert g.gamma_target(law, g.sine(), near)[0] == pytest.approx((1 + E2) / 24, rel=1e-12)
    assert g.gamma_target(law, g.identity(), near)[0] == pytest.approx(1 / 12, rel=1e-12)
    assert g.gamma_target(law, g.identity(), g.GraduationScheme("default", alpha_rule="n^2"))[0] == pytest.approx(1 / 3)
    # alpha = n for the one-sided modes has no testable limit
    assert g.gamma_target(law, g.identity(), g.GraduationScheme("default"))[0] is None
    t, lit, _ = g.gamma_target(measures.uniform(), g.sine(2 * math.pi), g.GraduationScheme("dyadic", alpha_rule=3.0))
    assert t == pytest.approx(0.25 * 2 * math.pi**2) and lit == pytest.approx(2 * math.pi**2)


def test_estimate_gamma_nearest():
    res = g.estimate_gamma(measures.normal(), g.sine(), g.GraduationScheme("nearest"), [256], 100_000, seed=3)
    assert res.final.verdict == Verdict.PASS


# value of 4^n E[(phi(Y_n) - phi(Y))^2] / (2 pi^2) for phi = sin(2 pi y)
DYADIC_FROZEN = {1: 0.0306342, 2: 0.0808006, 6: 0.0833233, 12: 0.08333333088}


@pytest.mark.parametrize("n", sorted(DYADIC_FROZEN))
def test_dyadic_oracle_frozen(n):
    val = g.dyadic_gamma_oracle(g.sine(2 * math.pi), n, alpha=4.0**n) / (2 * math.pi**2)
    assert val == pytest.approx(DYADIC_FROZEN[n], abs=1e-7 if n < 12 else 1e-10)


def test_dyadic_oracle_against_midpoint_sum():
    n = 3
    m = 1 << 22
    y = (np.arange(m) + 0.5) / m
    yn = y - 0.5 * g.fractional_part(8 * y) / 8
    brute = np.mean((np.sin(2 * math.pi * yn) - np.sin(2 * math.pi * y)) ** 2)
    assert g.dyadic_gamma_oracle(g.sine(2 * math.pi), n) == pytest.approx(brute, rel=1e-9)


def test_consistency_of_two_gamma_estimators():
    res = g.gamma_consistency_check(measures.normal(), g.sine(), g.GraduationScheme("nearest"), [128], chi=g.cosine(), samples=100_000, seed=4)
    row = res.rows[0]
    assert row.discrepancy_sigma < 4
    assert row.verdict_direct == Verdict.PASS


# bias operators ------------------------------------------------------------

def test_bias_targets_nearest_closed_form():
    t, _, _ = g.bias_targets(measures.normal(), g.sine(), g.sine(), g.GraduationScheme("nearest"))
    assert t["a_bar"] == pytest.approx(-(1 - E2) / 48, rel=1e-12)
    assert t["a_tilde"] == pytest.approx(-(1 + E2) / 48, rel=1e-12)
    assert t["a_under"] == pytest.approx(2 * t["a_tilde"] - t["a_bar"])
    assert t["a_slash"] == pytest.approx(t["a_bar"] - t["a_tilde"])


def test_bias_targets_shift():
    half = 0.5 * math.exp(-0.5)
    d, _, _ = g.bias_targets(measures.normal(), g.sine(), g.constant(1.0), g.GraduationScheme("default"))
    e, _, _ = g.bias_targets(measures.normal(), g.sine(), g.constant(1.0), g.GraduationScheme("excess"))
    assert d["a_bar"] == pytest.approx(-half) and e["a_bar"] == pytest.approx(half)
    assert d["a_tilde"] == 0.0


def test_bias_targets_custom_records_literal_forms():
    t, lit, _ = g.bias_targets(measures.normal(), g.sine(), g.sine(), build("scheme", "custom_sawtooth"))
    near, _, _ = g.bias_targets(measures.normal(), g.sine(), g.sine(), g.GraduationScheme("nearest"))
    assert t["a_tilde"] == pytest.approx(near["a_tilde"])
    assert lit["a_tilde"] != pytest.approx(t["a_tilde"])


def test_estimator_identity_exact():
    rng = np.random.default_rng(5)
    a, b, c, d = rng.normal(size=(4, 1000))
    est = g.bias_pairings(a, b, c, d, 9.0)
    assert est.a_tilde.value == (est.a_bar.value + est.a_under.value) / 2
    assert est.a_slash.value == (est.a_bar.value - est.a_under.value) / 2


def test_affine_phi_has_no_nearest_bias():
    res = g.estimate_bias_operators(measures.normal(), g.identity(), g.sine(), g.GraduationScheme("nearest"), [64], 200_000, seed=6)
    abar = res.rows[0].estimates.a_bar
    assert abs(abar.value) <= 3 * abar.stderr


def test_locality_diagnostic_decreases():
    res = g.estimate_bias_operators(measures.normal(), g.sine(), g.sine(), g.GraduationScheme("nearest"), [4, 8, 16, 32], 100_000, seed=7)
    fourth = [r.estimates.fourth_moment.value for r in res.rows]
    assert all(a > b for a, b in zip(fourth, fourth[1:]))
    assert res.locality_ratio() < 0.1


# uniformity ---------------------------------------------------------------

def test_uniformity_on_normal_law():
    res = g.uniformity_independence_test(measures.normal(), g.GraduationScheme("nearest"), [1024], 50_000, seed=8,
                                         joint_points=((1, 1.0), (0, 1.0)), psi=lambda v: v**2)
    row = res.rows[0]
    assert row.ks[0].passed
    assert abs(row.correlation.value) <= 3 * row.correlation.stderr
    assert row.joint[1]["target"] == pytest.approx(math.exp(-0.5))
    assert row.psi_target == pytest.approx(1 / 3)
    assert row.psi_moment.distance(1 / 3) < 4


def test_uniformity_pair_form():
    law = measures.product(measures.normal(), measures.uniform())
    res = g.uniformity_independence_test(law, None, [512], 20_000, seed=9, pair_form=True, joint_points=((1, (1.0, 0.0)),))
    assert res.rows[0].ks[0].passed
    with pytest.raises(ValueError):
        g.uniformity_independence_test(measures.normal(), None, [4], 100, pair_form=True)


def test_uniformity_fails_at_coarse_resolution_for_a_point_mass():
    res = g.uniformity_independence_test(measures.dirac(0.3), g.GraduationScheme("nearest"), [8], 1000, seed=1)
    assert not res.rows[0].ks[0].passed


# change of measure ----------------------------------------------------------

def test_change_of_measure_unit_density_reduces_to_plain_estimate():
    law, phi, s = measures.normal(), g.sine(), g.GraduationScheme("nearest")
    plain = g.estimate_gamma(law, phi, s, [64], 20_000, seed=10)
    weighted = g.gamma_change_of_measure(law, lambda y: np.ones(y.shape[0]), phi, s, [64], 20_000, seed=10)
    assert weighted.rows[0].estimate.value == pytest.approx(plain.rows[0].estimate.value, rel=1e-12)
    assert weighted.rows[0].estimate.stderr == pytest.approx(plain.rows[0].estimate.stderr, rel=1e-12)
    assert weighted.target == pytest.approx(plain.target, rel=1e-12)


def test_change_of_measure_targets_share_integrand():
    law, s = measures.normal(), g.GraduationScheme("nearest")
    h = build("h", "one_plus_half_sin")
    res = g.gamma_change_of_measure(law, h, g.identity(), s, [256], 20_000, seed=11)
    assert res.target == pytest.approx(1 / 12, abs=1e-12)
    assert res.unweighted_target == pytest.approx(1 / 12, abs=1e-12)
    # for sin the weighted target is E[h cos^2] / E[h] / 12
    res = g.gamma_change_of_measure(law, h, g.sine(), s, [256], 20_000, seed=11)
    num = measures.expectation(law, lambda y: h(y) * np.cos(y[:, 0]) ** 2).value
    den = measures.expectation(law, h).value
    assert res.target == pytest.approx(num / den / 12, rel=1e-12)


def test_change_of_measure_rejects_nonpositive_density():
    with pytest.raises(ValueError):
        g.gamma_change_of_measure(measures.normal(), lambda y: y[:, 0], g.sine(), g.GraduationScheme("nearest"), [4], 100)


def test_draw_is_deterministic_and_chunk_addressed():
    a = g.draw(measures.normal(), 1000, seed=3, chunk=128)
    b = g.draw(measures.normal(), 1000, seed=3, chunk=128)
    assert a.shape == (1000, 1) and np.array_equal(a, b)


def test_dyadic_oracle_range():
    with pytest.raises(ValueError):
        g.dyadic_gamma_oracle(g.sine(2 * math.pi), g.DYADIC_ORACLE_MAX_N + 1)
