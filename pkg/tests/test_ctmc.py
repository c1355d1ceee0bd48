import math
import pickle

import numpy as np
import pytest
from scipy.linalg import null_space
from scipy.stats import chi2_contingency, poisson

from crnstat.ctmc import (
    MultipleClosedClasses,
    build_generator,
    empirical_distribution,
    make_rng,
    simulate,
    simulate_ensemble,
    stationary_nullspace,
)
from crnstat.equilibrium import solve_complex_balanced
from crnstat.kinetics import KineticModel, ThetaFunction
from crnstat.models import Example4Params, example4_model, example4_network
from crnstat.network import ReactionNetwork
from crnstat.stationary import (
    Box,
    ConservationClass,
    ProductFormMeasure,
    Reachability,
    distribution_from_log,
    enumerate_class,
    normalize,
    total_variation,
)


@pytest.fixture(scope="module")
def birth_death():
    net = ReactionNetwork.from_strings(["X"], [("0", "X", 10.0), ("X", "0", 1.0)])
    return KineticModel.mass_action(net)


def test_birth_death_nullspace(birth_death):
    cls = enumerate_class(Box.from_upper((60,)))
    dist = stationary_nullspace(build_generator(birth_death, cls))
    np.testing.assert_allclose(dist.probs, poisson.pmf(np.arange(61), 10.0) / poisson.cdf(60, 10.0), rtol=1e-9)
    assert dist.residual <= 1e-10
    assert dist.tail_mass == pytest.approx(dist.probs[-1])


def test_generator_invariants(birth_death):
    gen = build_generator(birth_death, enumerate_class(Box.from_upper((20,))))
    Q = gen.matrix.toarray()
    off = Q - np.diag(np.diag(Q))
    assert np.all(off >= 0)
    np.testing.assert_allclose(Q.sum(axis=1), 0.0, atol=1e-12)
    assert gen.clipped[-1] == pytest.approx(10.0) and np.all(gen.clipped[:-1] == 0)


def test_four_state_class_against_dense_kernel():
    net = ReactionNetwork.from_strings(["A", "B"], [("2 A", "B", 0.7), ("B", "2 A", 2.0)])
    model = KineticModel(net, (ThetaFunction.expression("x*(x-1) + 3*ind(x>1)", 2), ThetaFunction.falling(1)))
    cls = enumerate_class(ConservationClass((1, 2), 6))
    gen = build_generator(model, cls)
    assert len(cls) == 4 and np.all(gen.clipped == 0)
    ref = null_space(gen.matrix.toarray().T)[:, 0]
    ref /= ref.sum()
    dist = stationary_nullspace(gen)
    np.testing.assert_allclose(dist.probs, ref, rtol=1e-12)


def test_multiple_closed_classes_detected():
    net = ReactionNetwork.from_strings(["A", "B"], ["2 A -> 0", "0 -> 2 A", "A -> B", "B -> A"])
    gen = build_generator(KineticModel.mass_action(net), enumerate_class(Box.from_upper((5, 5))))
    with pytest.raises(MultipleClosedClasses):
        stationary_nullspace(gen)


def test_iterative_and_direct_agree():
    p = Example4Params()
    model = example4_model(p, 200)
    cls = enumerate_class(Reachability((0, 0), Box.from_upper((60, 150)), model.network))
    gen = build_generator(model, cls)
    a = stationary_nullspace(gen, "direct")
    b = stationary_nullspace(gen, "iterative")
    assert total_variation(a, b) <= 1e-9


@pytest.mark.filterwarnings("ignore:boundary shell")
def test_example4_denominator_reading():
    """The phi-product denominator runs over phi(1), ..., phi(x1); the
    literal phi(x1)^x1 reading does not give the stationary law."""
    p = Example4Params()
    model = example4_model(p, 200)
    cls = enumerate_class(Reachability((0, 0), Box.from_upper((60, 200)), model.network))
    oracle = stationary_nullspace(build_generator(model, cls))
    c = solve_complex_balanced(example4_network(p)).c
    product = normalize(ProductFormMeasure.from_model(model, c), cls)
    phi = model.thetas[0]
    x = cls.states
    literal = x[:, 0] * np.log(c[0]) - np.array([v * math.log(phi(v)) if v else 0.0 for v in x[:, 0]])
    literal = literal + x[:, 1] * np.log(c[1]) - ThetaFunction.falling(1).log_denominator(x[:, 1])
    literal = distribution_from_log(cls, literal)
    assert total_variation(product, oracle) <= 1e-8
    assert total_variation(literal, oracle) > 0.1


def test_seeded_runs_are_reproducible(birth_death):
    a = simulate(birth_death, [0], 50.0, seed=11)
    b = simulate(birth_death, [0], 50.0, seed=11)
    c = simulate(birth_death, [0], 50.0, seed=11, stream=1)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.states, b.states)
    assert not np.array_equal(a.times[:5], c.times[:5])
    assert a.t_end == 50.0 and a.times[-1] < 50.0


def test_streams_are_independent_generators():
    x = make_rng(3, 0).random(1000)
    y = make_rng(3, 1).random(1000)
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.15


def test_max_jumps_and_absorption(birth_death):
    tr = simulate(birth_death, [0], 1e9, seed=2, max_jumps=100)
    assert tr.n_jumps == 100 and tr.t_end == tr.times[-1]
    net = ReactionNetwork.from_strings(["X"], ["X -> 0"])
    tr = simulate(KineticModel.mass_action(net), [5], 1e6, seed=0, method="nrm")
    assert tr.absorbed and tr.states[-1, 0] == 0 and tr.n_jumps == 5


def test_path_is_consistent(birth_death):
    tr = simulate(birth_death, [3], 20.0, seed=5, method="nrm")
    jumps = np.array([[1], [-1]])
    np.testing.assert_array_equal(np.diff(tr.states, axis=0), jumps[tr.reactions])
    assert np.all(np.diff(tr.times) > 0)


@pytest.mark.parametrize("method", ["direct", "nrm"])
def test_ssa_occupation_law(birth_death, method):
    tr = simulate(birth_death, [10], 20_000.0, seed=4, method=method)
    emp = empirical_distribution(tr)
    ref = distribution_from_log(
        enumerate_class(Box.from_upper((60,))), poisson.logpmf(np.arange(61), 10.0)
    )
    assert total_variation(emp, ref) <= 0.02
    assert emp.expectation(emp.states[:, 0]) == pytest.approx(10.0, rel=0.02)


def test_direct_and_nrm_agree_in_law(birth_death):
    """Chi-square homogeneity test on X(1) from two ensembles."""
    counts = []
    for method in ("direct", "nrm"):
        runs = simulate_ensemble(birth_death, [0], 1.0, seed=21, n=3000, method=method)
        x1 = np.array([r.states[-1, 0] for r in runs])
        counts.append(np.bincount(np.minimum(x1, 12), minlength=13)[1:])
    _, pval, _, _ = chi2_contingency(np.array(counts))
    assert pval > 1e-3


def test_ensemble_workers_match_serial(birth_death):
    serial = simulate_ensemble(birth_death, [0], 5.0, seed=8, n=4, workers=1)
    pooled = simulate_ensemble(birth_death, [0], 5.0, seed=8, n=4, workers=2)
    for a, b in zip(serial, pooled):
        assert np.array_equal(a.states, b.states) and np.array_equal(a.times, b.times)


def test_model_pickles_for_workers():
    model = example4_model(Example4Params(), 200)
    clone = pickle.loads(pickle.dumps(model))
    assert np.array_equal(clone.propensities([[5, 7]]), model.propensities([[5, 7]]))
