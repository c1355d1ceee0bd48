import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crnstat.averaging import (
    class_distribution,
    constrained_fast_subsystem,
    dimer_reduction,
    fast_fraction,
    qea_fast_subsystem,
    rel_l2,
    slow_scale_ssa,
    tv,
)
from crnstat.ctmc import build_generator, stationary_nullspace
from crnstat.models import DimerParams, full_dimer_model
from crnstat.stationary import Box, ConservationClass, condition, enumerate_class, marginal, total_variation

P = DimerParams()


@pytest.mark.parametrize("s", [2, 7, 40, 300])
def test_degenerate_limit_matches_qea(s):
    # k3 = 0 and reverse k4 in the constrained system is the QEA system
    p0 = DimerParams(P.k1, P.k2, 0.0, P.k4)
    a = class_distribution(constrained_fast_subsystem(p0, reverse=P.k4), (1, 2), s)
    b = class_distribution(qea_fast_subsystem(P, reverse=P.k4), (1, 2), s)
    assert total_variation(a, b) <= 1e-13


@pytest.mark.parametrize("s", [2, 3, 10, 25, 50])
def test_constrained_product_form_against_nullspace(s):
    model = constrained_fast_subsystem(P)
    cls = enumerate_class(ConservationClass((1, 2), s))
    oracle = stationary_nullspace(build_generator(model, cls))
    assert total_variation(class_distribution(model, (1, 2), s), oracle) <= 1e-8


def test_effective_rate_against_oracle():
    red = dimer_reduction(P, "constrained")
    rates = red.rates_at(300)
    cls = enumerate_class(ConservationClass((1, 2), 300))
    oracle = stationary_nullspace(build_generator(constrained_fast_subsystem(P), cls))
    x1_mean = oracle.expectation(oracle.states[:, 0])
    assert rates[0] == pytest.approx(P.k3, rel=1e-12)
    assert rates[1] == pytest.approx(P.k4 * x1_mean, rel=1e-9)
    assert red.slow_jumps.tolist() == [2, -1]
    assert red.rates_at(300) is rates


@settings(max_examples=5, deadline=None)
@given(st.floats(0.2, 20.0))
def test_fast_fraction_scale_invariant(f):
    model = full_dimer_model(P)
    cls = enumerate_class(Box.from_upper((60, 40)))
    scaled = full_dimer_model(P.scaled(f))
    a = stationary_nullspace(build_generator(model, cls))
    b = stationary_nullspace(build_generator(scaled, cls))
    assert fast_fraction(a, (0, 1), model) == pytest.approx(fast_fraction(b, (0, 1), scaled), rel=1e-8)


def test_metrics():
    a = {(0,): 0.5, (1,): 0.5}
    b = {(0,): 0.25, (1,): 0.25, (2,): 0.5}
    # rel-l2 renormalises on the common support, TV does not
    assert rel_l2(a, b) == 0.0
    assert tv(a, b) == pytest.approx(0.5)
    assert tv(a, a) == 0.0
    with pytest.raises(ValueError):
        rel_l2({(5,): 1.0}, b)


def test_reductions_bracket_the_full_model_at_small_s():
    # the constrained reduction sits closer to the full model than QEA does
    model = full_dimer_model(P)
    full = stationary_nullspace(build_generator(model, enumerate_class(Box.from_upper((200, 100)))))
    cond = marginal(condition(full, (1, 2), 60), [1])
    con = marginal(class_distribution(constrained_fast_subsystem(P), (1, 2), 60), [1])
    qea = marginal(class_distribution(qea_fast_subsystem(P), (1, 2), 60), [1])
    assert rel_l2(con, cond) < rel_l2(qea, cond)


def test_slow_scale_ssa():
    red = dimer_reduction(P, "constrained")
    tr = slow_scale_ssa(red, 300, 2.0, seed=3)
    again = slow_scale_ssa(red, 300, 2.0, seed=3)
    assert np.array_equal(tr.states, again.states)
    steps = np.diff(tr.states[:, 0])
    assert set(steps.tolist()) <= {2, -1}
    assert tr.n_jumps > 100
