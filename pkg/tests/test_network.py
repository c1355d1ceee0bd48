import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from crnstat.models import DimerParams, dimer_pair_network, example4_network, full_dimer_network, two_pair_network
from crnstat.network import (
    Complex,
    Reaction,
    ReactionNetwork,
    conservation_basis,
    deficiency,
    integer_nullspace,
    integer_rank,
    is_weakly_reversible,
    linkage_classes,
    parse_complex,
)


@pytest.mark.parametrize(
    "net, expected",
    [
        (two_pair_network(), (0, True)),
        (full_dimer_network(), (1, False)),
        (dimer_pair_network(1.0, 30.0), (0, True)),
        (dimer_pair_network(1.0, 130.0), (0, True)),
        (example4_network(), (0, True)),
    ],
)
def test_paper_networks(net, expected):
    rep = deficiency(net)
    assert (rep.deficiency, rep.weakly_reversible) == expected


def test_full_dimer_counts():
    rep = deficiency(full_dimer_network(DimerParams()))
    # S2 joins 0 -> S2 to the dimer pair: one linkage class, full rank
    assert (rep.num_complexes, rep.num_linkage_classes, rep.stoich_dimension) == (4, 1, 2)
    assert len(rep.conservation_basis) == 0


def test_two_pair_conservation():
    basis = conservation_basis(two_pair_network())
    assert basis == [(1, 2, 8)]


def test_parse_complex():
    names = ["S1", "S2"]
    assert parse_complex("2 S1 + S2", names) == Complex.from_mapping({0: 2, 1: 1})
    assert parse_complex("0", names).is_empty
    assert parse_complex("∅", names).is_empty
    with pytest.raises(ValueError):
        parse_complex("S3", names)


def test_reaction_rejects_loop():
    c = Complex.from_mapping({0: 2})
    with pytest.raises(ValueError):
        Reaction(c, c)


def test_irreversible_chain_not_weakly_reversible():
    net = ReactionNetwork.from_strings(["A", "B", "C"], ["A -> B", "B -> C", "C -> B"])
    assert not is_weakly_reversible(net)
    assert len(linkage_classes(net)) == 1


int_matrices = st.integers(1, 5).flatmap(
    lambda r: st.integers(1, 6).flatmap(
        lambda c: st.lists(st.lists(st.integers(-4, 4), min_size=c, max_size=c), min_size=r, max_size=r)
    )
)


@settings(max_examples=200, deadline=None)
@given(int_matrices)
def test_bareiss_rank_matches_sympy(rows):
    assert integer_rank(rows) == sympy.Matrix(rows).rank()


@settings(max_examples=100, deadline=None)
@given(int_matrices)
def test_nullspace_basis(rows):
    ncols = len(rows[0])
    basis = integer_nullspace(rows, ncols)
    assert len(basis) == ncols - integer_rank(rows)
    A = np.array(rows, dtype=np.int64)
    for v in basis:
        assert np.all(A @ np.array(v) == 0)
        nz = [x for x in v if x]
        assert nz[0] > 0 and np.gcd.reduce(np.abs(nz)) == 1


reactions = st.lists(
    st.tuples(
        st.lists(st.integers(0, 2), min_size=3, max_size=3),
        st.lists(st.integers(0, 2), min_size=3, max_size=3),
    ).filter(lambda t: t[0] != t[1]),
    min_size=1,
    max_size=6,
)


def _net(rx, order=(0, 1, 2)):
    species = ReactionNetwork.from_strings(["A", "B", "C"], ["A -> B"]).species
    out = [Reaction(Complex.from_vector([a[i] for i in order]), Complex.from_vector([b[i] for i in order]))
           for a, b in rx]
    return ReactionNetwork(species, tuple(out))


@settings(max_examples=100, deadline=None)
@given(reactions, st.permutations([0, 1, 2]))
def test_structure_invariants(rx, perm):
    net = _net(rx)
    rep = deficiency(net)
    assert rep.deficiency >= 0
    assert rep.stoich_dimension + len(rep.conservation_basis) == net.d
    S = net.stoichiometric_matrix
    for w in rep.conservation_basis:
        assert np.all(np.array(w) @ S == 0)
    # relabelling species leaves every integer invariant unchanged
    other = deficiency(_net(rx, list(perm)))
    assert (other.deficiency, other.weakly_reversible, other.num_linkage_classes) == (
        rep.deficiency,
        rep.weakly_reversible,
        rep.num_linkage_classes,
    )
