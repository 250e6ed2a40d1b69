import math

import numpy as np
import pytest

from gradlim import measures
from gradlim.measures import DecayVerdict, PisotVerdict, Rajchman
from gradlim.registry import LADDERS, build

# |Psi| of the middle-third Cantor measure at u = 2 pi 3^m (m >= 0):
# the factor k = m is |cos(2 pi / 3)| = 1/2, the ones below it equal 1,
# and the tail is prod_{j >= 2} cos(2 pi / 3^j).
CANTOR_THIRD_PLATEAU = 0.5 * math.prod(math.cos(2 * math.pi / 3**j) for j in range(2, 60))


LAWS_WITH_TRANSFORM = ["normal", "uniform", "dirac", "cantor_third", "cantor_0.4", "normal2"]


@pytest.mark.parametrize("name", LAWS_WITH_TRANSFORM)
def test_empirical_char_fn_agrees_with_exact(name):
    law = build("law", name)
    x = measures.sample(law, 100_000, seed=21)
    rng = np.random.default_rng(22)
    for _ in range(20):
        u = rng.uniform(-10, 10, size=law.dim)
        emp = measures.char_fn_empirical(x, u)
        exact = complex(law.char_fn_exact(u if law.dim > 1 else u[:1])[0])
        # a point mass gives a rounding-level stderr, so also accept exact agreement
        assert emp.distance(exact) <= 4.0 or abs(emp.value - exact) < 1e-12


@pytest.mark.parametrize("beta", [1 / 3, 0.4, 0.25, 0.45])
def test_cantor_truncation_stability(beta):
    u = np.linspace(-200, 200, 101)
    fine = measures.cantor_char_fn(measures.CantorParams(beta, 1e-12), u)
    coarse = measures.cantor_char_fn(measures.CantorParams(beta, 1e-10), u)
    assert np.max(np.abs(fine - coarse)) <= 1e-9


@pytest.mark.parametrize("beta", [1 / 3, 0.4, 0.2])
def test_cantor_self_similarity(beta):
    params = measures.CantorParams(beta)
    u = np.random.default_rng(23).uniform(-50, 50, 50)
    lhs = measures.cantor_char_fn(params, u)
    rhs = measures.cantor_char_fn(params, beta * u) * 0.5 * (1 + np.exp(2j * math.pi * u * (1 - beta)))
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_cantor_samples_live_on_the_attractor():
    x = measures.sample(measures.cantor(1 / 3), 20_000, seed=3)
    assert x.min() >= 0.0 and x.max() <= 1.0
    # no mass in the removed middle third
    assert not np.any((x > 1 / 3 + 1e-12) & (x < 2 / 3 - 1e-12))
    assert abs(x.mean() - 0.5) < 4 * x.std() / math.sqrt(x.size)


def test_cantor_rejects_bad_parameters():
    with pytest.raises(ValueError):
        measures.cantor(0.5)
    with pytest.raises(ValueError):
        measures.CantorParams(0.3, product_truncation_tol=0.0)


@pytest.mark.parametrize("law", [measures.normal(0.5, 2.0), measures.product(measures.normal(), measures.normal(1, 0.5))])
def test_score_is_gradient_of_log_density(law):
    x = np.random.default_rng(5).normal(size=(50, law.dim))
    h = 1e-5
    num = np.empty_like(x)
    for j in range(law.dim):
        e = np.zeros(law.dim)
        e[j] = h
        num[:, j] = (np.log(law.density(x + e)) - np.log(law.density(x - e))) / (2 * h)
    assert np.allclose(law.score(x), num, atol=1e-6)


def test_quadrature_rules_integrate_moments():
    n = measures.normal(1.0, 2.0)
    assert measures.expectation(n, lambda y: y[:, 0] ** 2).value == pytest.approx(5.0, rel=1e-12)
    u = measures.uniform(0.0, 1.0)
    assert measures.expectation(u, lambda y: np.sin(2 * math.pi * y[:, 0]) ** 2).value == pytest.approx(0.5)
    p = measures.product(measures.normal(), measures.uniform())
    val = measures.expectation(p, lambda y: y[:, 0] ** 2 * y[:, 1])
    assert val.value == pytest.approx(0.5, rel=1e-10) and val.stderr == 0.0


def test_expectation_with_weight_quadrature_vs_monte_carlo():
    law = measures.normal()
    w = lambda y: 1.0 + 0.5 * np.sin(y[:, 0])  # noqa: E731
    g = lambda y: np.cos(y[:, 0]) ** 2  # noqa: E731
    quad = measures.expectation(law, g, weight=w)
    mc_law = measures.ProbabilityLaw("normal-mc", 1, law.sampler)
    mc = measures.expectation(mc_law, g, weight=w, mc_samples=200_000, seed=1)
    assert mc.stderr > 0 and mc.distance(quad.value) < 4


def test_weighted_mean_with_unit_weights_is_plain_mean():
    x = np.random.default_rng(8).normal(size=1000)
    a = measures.weighted_mean(x, np.ones_like(x))
    b = measures.MCEstimate.from_samples(x)
    assert a.value == pytest.approx(b.value, abs=1e-14)
    assert a.stderr == pytest.approx(b.stderr, rel=1e-12)


def test_pisot_catalog():
    assert measures.pisot_catalog_check(1 / 3)[0] == PisotVerdict.NON_RAJCHMAN
    assert measures.pisot_catalog_check(0.4)[0] == PisotVerdict.RAJCHMAN
    assert measures.pisot_catalog_check(1 / (1 + math.sqrt(2)))[0] == PisotVerdict.NON_RAJCHMAN
    assert measures.pisot_catalog_check(2 / (3 + math.sqrt(5)))[0] == PisotVerdict.NON_RAJCHMAN
    assert measures.pisot_catalog_check(1 / math.pi)[0] == PisotVerdict.UNKNOWN
    with pytest.raises(ValueError):
        measures.pisot_catalog_check(0.6)


@pytest.mark.parametrize(
    "name, expected",
    [
        ("normal", DecayVerdict.DECAYING),
        ("uniform", DecayVerdict.DECAYING),
        ("dirac", DecayVerdict.NON_DECAYING),
        ("cantor_third", DecayVerdict.NON_DECAYING),
        ("cantor_0.4", DecayVerdict.DECAYING),
    ],
)
def test_decay_verdicts(name, expected):
    law = build("law", name)
    res = measures.rajchman_decay_test(law, LADDERS[name]())
    assert res.verdict == expected
    assert {Rajchman.YES: DecayVerdict.DECAYING, Rajchman.NO: DecayVerdict.NON_DECAYING}[law.rajchman_expected] == expected


def test_pisot_agrees_with_decay_on_catalog_examples():
    for name in ("cantor_third", "cantor_0.4"):
        law = build("law", name)
        res = measures.rajchman_decay_test(law, LADDERS[name]())
        pv, _ = measures.pisot_catalog_check(law.params["beta"])
        assert (pv == PisotVerdict.RAJCHMAN) == (res.verdict == DecayVerdict.DECAYING)


def test_cantor_third_plateau_matches_frozen_value():
    res = measures.rajchman_decay_test(build("law", "cantor_third"), LADDERS["cantor_third"]())
    assert CANTOR_THIRD_PLATEAU == pytest.approx(0.3711, abs=1e-3)
    assert np.allclose(res.abs_values, CANTOR_THIRD_PLATEAU, atol=1e-9)


def test_empirical_decay_mode_without_transform():
    law = measures.ProbabilityLaw("normal-mc", 1, measures.normal().sampler)
    res = measures.rajchman_decay_test(law, measures.geometric_ladder(2.0, range(1, 8)), samples=100_000, seed=2)
    assert res.mode == "empirical"
    assert res.verdict == DecayVerdict.DECAYING
    few = measures.rajchman_decay_test(law, [1.0, 2.0], samples=50, seed=2)
    assert few.verdict == DecayVerdict.INCONCLUSIVE


def test_decay_table_csv():
    res = measures.rajchman_decay_test(measures.normal(), [1.0, 2.0, 4.0])
    lines = res.to_csv().strip().splitlines()
    assert lines[0] == "u,re,im,abs,stderr"
    assert len(lines) == 4
    assert float(lines[1].split(",")[3]) == pytest.approx(math.exp(-0.5))


def test_decay_ladder_validation():
    with pytest.raises(ValueError):
        measures.rajchman_decay_test(measures.normal(), [2.0, 1.0])


def test_law_from_config():
    law = measures.law_from_config({"kind": "product", "factors": [{"kind": "normal"}, {"kind": "cantor", "beta": 0.3}]})
    assert law.dim == 2
    assert law.rajchman_expected == Rajchman.YES  # 1/0.3 is rational, not an integer
    odd = measures.law_from_config({"kind": "product", "factors": [{"kind": "normal"}, {"kind": "cantor", "beta": 1 / math.pi}]})
    assert odd.rajchman_expected == Rajchman.UNKNOWN
    assert measures.law_from_config({"kind": "uniform", "low": -1, "high": 1}).params["low"] == -1
    with pytest.raises(ValueError):
        measures.law_from_config({"kind": "laplace"})


def test_geometric_ladder():
    assert np.allclose(measures.geometric_ladder(3.0, range(3), 2.0), [2.0, 6.0, 18.0])
