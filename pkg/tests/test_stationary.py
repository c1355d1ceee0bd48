import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln
from scipy.stats import poisson

from crnstat.averaging import constrained_fast_subsystem, constrained_theta
from crnstat.equilibrium import solve_complex_balanced
from crnstat.kinetics import KineticModel, ThetaFunction, build_phi
from crnstat.models import DimerParams, two_pair_network
from crnstat.network import ReactionNetwork
from crnstat.stationary import (
    Box,
    ConservationClass,
    OutOfSupport,
    ProductFormMeasure,
    Reachability,
    UnboundedClass,
    condition,
    enumerate_class,
    mass_action_like_log_measure,
    marginal,
    normalize,
    total_variation,
)

mpmath.mp.dps = 40


def _mp_log_pi(c, thetas, x):
    total = mpmath.mpf(0)
    for ci, theta, xi in zip(c, thetas, x):
        total += xi * mpmath.log(mpmath.mpf(ci))
        for j in range(xi // theta.alpha):
            total -= mpmath.log(mpmath.mpf(theta(xi - j * theta.alpha)))
    return total


def test_product_form_against_extended_precision():
    p = DimerParams()
    model = constrained_fast_subsystem(p)
    c = solve_complex_balanced(model.network, None, [((1, 2), 1.0)]).c
    measure = ProductFormMeasure.from_model(model, c)
    rng = np.random.default_rng(0)
    states = rng.integers(0, 3000, size=(200, 2))
    got = measure.log_pi_many(states)
    for x, g in zip(states, got):
        ref = _mp_log_pi(c, model.thetas, [int(v) for v in x])
        assert abs(g - float(ref)) <= 1e-12 * max(1.0, abs(float(ref)))


def test_step_one_form_equals_general_form():
    # with phi as a step-one factor, Eq.-(7)-style evaluation equals the
    # alpha-step product
    theta = constrained_theta(DimerParams())
    phi = build_phi(theta)
    c = np.array([0.3, 1.7])
    step_one = (phi.as_theta(600), ThetaFunction.falling(1))
    general = ProductFormMeasure(c, (theta, ThetaFunction.falling(1)))
    for x in [(0, 0), (1, 3), (2, 5), (37, 1), (500, 12)]:
        assert mass_action_like_log_measure(c, step_one, x) == pytest.approx(general.log_pi(x), rel=1e-12)


def test_alpha_one_mass_action_is_poisson():
    c = np.array([2.5, 0.4, 7.0])
    measure = ProductFormMeasure(c, tuple(ThetaFunction.falling(1) for _ in c))
    x = np.array([[0, 0, 0], [3, 1, 9], [40, 2, 0]])
    ref = (x * np.log(c) - gammaln(x + 1.0)).sum(axis=1)
    np.testing.assert_allclose(measure.log_pi_many(x), ref, rtol=0, atol=1e-13)
    dist = normalize(measure, enumerate_class(Box.from_upper((40, 15, 60))))
    mx = marginal(dist, [0])
    for k in (0, 2, 5):
        assert mx[(k,)] == pytest.approx(poisson.pmf(k, c[0]), rel=1e-10)


def _balance_error(model, measure, x):
    """|inflow - outflow| / outflow of the global balance equation at x."""
    net = model.network
    src, dst = net.source_matrix, net.product_matrix
    out = math.exp(measure.log_pi(x)) * model.propensities([x]).sum()
    inflow = 0.0
    for k in range(net.K):
        y = np.asarray(x) - dst[k] + src[k]
        if np.all(y >= 0) and measure.in_support([y])[0]:
            inflow += math.exp(measure.log_pi(y)) * model.propensities([y])[0, k]
    return abs(inflow - out) / out


def test_stationarity_two_pair():
    net = two_pair_network((1.0, 2.0, 0.5, 3.0))
    thetas = (
        ThetaFunction.expression("x*(x-1) + ind(x>=2)", 2),
        ThetaFunction.falling(1),
        ThetaFunction.expression("x/(1+x)", 1),
    )
    model = KineticModel(net, thetas)
    c = solve_complex_balanced(net, None, [((1, 2, 8), 1.0)]).c
    measure = ProductFormMeasure.from_model(model, c)
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = (2 * int(rng.integers(3, 30)), int(rng.integers(2, 30)), int(rng.integers(1, 10)))
        assert _balance_error(model, measure, x) <= 1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 20.0), st.integers(2, 60))
def test_c_scaling_leaves_class_law_unchanged(t, s):
    theta = constrained_theta(DimerParams())
    thetas = (theta, ThetaFunction.falling(1))
    cls = enumerate_class(ConservationClass((1, 2), s))
    c = np.array([0.9, 0.05])
    a = normalize(ProductFormMeasure(c, thetas), cls)
    b = normalize(ProductFormMeasure(c * np.array([t, t**2]), thetas), cls)
    assert total_variation(a, b) <= 1e-12


def test_conservation_class_enumeration():
    cls = enumerate_class(ConservationClass((1, 2), 6))
    assert cls.states.tolist() == [[0, 3], [2, 2], [4, 1], [6, 0]]
    assert cls.index((4, 1)) == 2
    assert (1, 1) not in cls
    with pytest.raises(UnboundedClass):
        enumerate_class(ConservationClass((1, 0), 3))


def test_reachability_parity():
    net = ReactionNetwork.from_strings(["A", "B"], ["2 A -> 0", "0 -> 2 A", "A -> B", "B -> A"])
    even = enumerate_class(Reachability((0, 0), Box.from_upper((6, 6)), net))
    odd = enumerate_class(Reachability((1, 0), Box.from_upper((6, 6)), net))
    assert np.all(even.states.sum(axis=1) % 2 == 0)
    assert np.all(odd.states.sum(axis=1) % 2 == 1)
    assert len(even) + len(odd) == 49


def test_out_of_support():
    theta = ThetaFunction.tabulated([0.0, 0.0, 1.0, 2.0, 3.0], 2, validate=False)
    theta_bad = ThetaFunction.tabulated([0.0, 0.0, 0.0, 2.0, 3.0], 2, validate=False)
    assert ProductFormMeasure(np.ones(1), (theta,)).in_support([[4]])[0]
    with pytest.raises(OutOfSupport):
        ProductFormMeasure(np.ones(1), (theta_bad,)).log_pi([4])


def test_marginals_and_conditioning():
    c = np.array([1.5, 0.7])
    measure = ProductFormMeasure(c, (ThetaFunction.falling(1), ThetaFunction.falling(1)))
    dist = normalize(measure, enumerate_class(Box.from_upper((30, 30))))
    total = marginal(dist, ("linear", np.array([1, 1])))
    # sum of independent Poissons
    for n in (0, 1, 4):
        assert total[n] == pytest.approx(poisson.pmf(n, c.sum()), rel=1e-9)
    assert sum(marginal(dist, [1]).values()) == pytest.approx(1.0, abs=1e-14)
    cond = condition(dist, (1, 1), 4)
    # binomial split given the total
    m = marginal(cond, [0])
    q = c[0] / c.sum()
    for k in range(5):
        assert m[(k,)] == pytest.approx(math.comb(4, k) * q**k * (1 - q) ** (4 - k), rel=1e-12)
    assert marginal(dist, {0: 1, 1: 1}) == total
