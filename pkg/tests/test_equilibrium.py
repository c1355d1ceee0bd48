import math
import warnings

import numpy as np
import pytest

from crnstat.equilibrium import (
    EquilibriumError,
    class_constraints,
    complex_balance_residual,
    mass_action_rhs,
    solve_complex_balanced,
)
from crnstat.models import DimerParams, Example4Params, dimer_pair_network, example4_network, full_dimer_network
from crnstat.network import conservation_basis
from netgen import random_wr_network


def test_constrained_dimer_closed_form():
    k1, k2, k4 = 1.0, 100.0, 30.0
    eq = solve_complex_balanced(dimer_pair_network(k1, k2 + k4), None, [((1, 2), 1.0)])
    c1 = (math.sqrt((k2 + k4) * (k2 + 8 * k1 + k4)) - k2 - k4) / (4 * k1)
    assert eq.c[0] == pytest.approx(c1, rel=1e-10)
    assert eq.c[1] == pytest.approx((1 - c1) / 2, rel=1e-10)


def test_qea_dimer_closed_form():
    k1, k4 = 1.0, 30.0
    eq = solve_complex_balanced(dimer_pair_network(k1, k4), None, [((1, 2), 1.0)])
    d1 = (math.sqrt(k4 * (8 * k1 + k4)) - k4) / (4 * k1)
    assert eq.c[0] == pytest.approx(d1, rel=1e-10)
    assert eq.c[1] == pytest.approx((1 - d1) / 2, rel=1e-10)


def test_example4_equilibrium():
    p = Example4Params()
    eq = solve_complex_balanced(example4_network(p))
    r = math.sqrt(p.k2 / p.k1)
    np.testing.assert_allclose(eq.c, [r, p.k3 / p.k4 * r], rtol=1e-10)


def test_full_dimer_has_no_complex_balanced_point():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(EquilibriumError):
            solve_complex_balanced(full_dimer_network(DimerParams()))


def test_wrong_number_of_constraints():
    with pytest.raises(ValueError):
        solve_complex_balanced(dimer_pair_network(1.0, 2.0))


@pytest.mark.parametrize("seed", range(100))
def test_random_deficiency_zero(seed):
    rng = np.random.default_rng(seed)
    net, _ = random_wr_network(rng)
    x = rng.uniform(0.2, 5.0, net.d)
    cons = class_constraints(net, x)
    eq = solve_complex_balanced(net, None, cons)
    scale = max(1.0, float(np.abs(complex_balance_residual(net, None, x)).max()))
    assert np.all(eq.c > 0)
    assert eq.residual <= 1e-9 * scale
    assert np.abs(mass_action_rhs(net, None, eq.c)).max() <= 1e-8 * max(1.0, eq.c.max())
    for w, m in cons:
        assert np.dot(w, eq.c) == pytest.approx(m, rel=1e-10)
    # the point depends on kappa only up to a common factor
    scaled = solve_complex_balanced(net, net.kappas * 7.5, cons)
    np.testing.assert_allclose(scaled.c, eq.c, rtol=1e-8)
    # and not on where the iteration starts
    other = solve_complex_balanced(net, None, cons, x0=rng.uniform(0.1, 10.0, net.d))
    np.testing.assert_allclose(other.c, eq.c, rtol=1e-8)


def test_conservation_basis_constraints():
    net = dimer_pair_network(1.0, 4.0)
    assert conservation_basis(net) == [(1, 2)]
    eq = solve_complex_balanced(net, None, [((2, 4), 6.0)])
    assert eq.c[0] + 2 * eq.c[1] == pytest.approx(3.0, rel=1e-12)
