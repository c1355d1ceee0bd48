"""Reaction network data model and structural analysis.

Complexes, linkage classes, weak reversibility, the stoichiometric subspace,
deficiency and integer conservation laws. All structural integers are
computed in exact arithmetic.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components


@dataclass(frozen=True)
class Species:
    index: int
    name: str


@dataclass(frozen=True, order=True)
class Complex:
    """A complex as a sorted tuple of ``(species index, count)`` pairs.

    The empty complex (the zero complex) is ``Complex(())``.
    """

    counts: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        seen = set()
        for i, n in self.counts:
            if n < 1:
                raise ValueError(f"stored counts must be >= 1, got {n} for species {i}")
            if i in seen:
                raise ValueError(f"species {i} listed twice in complex")
            seen.add(i)
        object.__setattr__(self, "counts", tuple(sorted(self.counts)))

    @classmethod
    def from_mapping(cls, stoich: Mapping[int, int]) -> "Complex":
        return cls(tuple((int(i), int(n)) for i, n in stoich.items() if n != 0))

    @classmethod
    def from_vector(cls, vec: Sequence[int]) -> "Complex":
        return cls(tuple((i, int(n)) for i, n in enumerate(vec) if n != 0))

    def as_dict(self) -> dict[int, int]:
        return dict(self.counts)

    def vector(self, d: int) -> np.ndarray:
        v = np.zeros(d, dtype=np.int64)
        for i, n in self.counts:
            v[i] = n
        return v

    def is_empty(self) -> bool:
        return not self.counts

    def format(self, names: Sequence[str]) -> str:
        if not self.counts:
            return "0"
        return " + ".join(names[i] if n == 1 else f"{n} {names[i]}" for i, n in self.counts)


@dataclass(frozen=True)
class Reaction:
    source: Complex
    product: Complex
    kappa: float = 1.0

    def __post_init__(self):
        if self.source == self.product:
            raise ValueError("reaction source and product complexes must differ")


_TERM = re.compile(r"^\s*(?:(\d+)\s*\*?\s*)?([A-Za-z_][A-Za-z0-9_]*)\s*$")


def parse_complex(text: str, names: Sequence[str]) -> Complex:
    """Parse ``"2 S1 + S2"`` (or ``"0"`` / ``"∅"`` for the empty complex)."""
    text = text.strip()
    if text in ("0", "∅", ""):
        return Complex(())
    lookup = {n: i for i, n in enumerate(names)}
    stoich: dict[int, int] = {}
    for term in text.split("+"):
        m = _TERM.match(term)
        if not m:
            raise ValueError(f"cannot parse complex term {term.strip()!r}")
        coef = int(m.group(1)) if m.group(1) else 1
        name = m.group(2)
        if name not in lookup:
            raise ValueError(f"unknown species {name!r}")
        if coef == 0:
            continue
        stoich[lookup[name]] = stoich.get(lookup[name], 0) + coef
    return Complex.from_mapping(stoich)


@dataclass(frozen=True)
class StructureReport:
    num_complexes: int
    num_linkage_classes: int
    weakly_reversible: bool
    stoich_dimension: int
    deficiency: int
    conservation_basis: tuple[tuple[int, ...], ...]

    def as_dict(self) -> dict:
        return {
            "num_complexes": self.num_complexes,
            "num_linkage_classes": self.num_linkage_classes,
            "weakly_reversible": self.weakly_reversible,
            "stoich_dimension": self.stoich_dimension,
            "deficiency": self.deficiency,
            "conservation_basis": [list(w) for w in self.conservation_basis],
        }


@dataclass(frozen=True)
class ReactionNetwork:
    """Species plus reactions; complexes and matrices are derived lazily.

    Duplicate reactions are kept as distinct channels.
    """

    species: tuple[Species, ...]
    reactions: tuple[Reaction, ...]

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        names = [s.name for s in self.species]
        if len(set(names)) != len(names):
            raise ValueError("species names must be unique")
        if [s.index for s in self.species] != list(range(len(self.species))):
            raise ValueError("species indices must be contiguous from 0")
        if not self.reactions:
            raise ValueError("a network needs at least one reaction")
        d = len(self.species)
        for r in self.reactions:
            for cplx in (r.source, r.product):
                for i, _ in cplx.counts:
                    if not 0 <= i < d:
                        raise ValueError(f"species index {i} out of range for {d} species")

    @classmethod
    def from_strings(
        cls,
        names: Sequence[str] | str,
        reactions: Iterable[tuple[str, str, float] | str],
    ) -> "ReactionNetwork":
        """Build from species names and ``("2 S1", "S2", kappa)`` triples
        or ``"2 S1 -> S2"`` strings (kappa 1)."""
        if isinstance(names, str):
            names = names.split()
        species = tuple(Species(i, n) for i, n in enumerate(names))
        rxns = []
        for spec in reactions:
            if isinstance(spec, str):
                lhs, rhs = spec.split("->")
                kappa = 1.0
            else:
                lhs, rhs, kappa = spec
            rxns.append(Reaction(parse_complex(lhs, names), parse_complex(rhs, names), float(kappa)))
        return cls(species, tuple(rxns))

    @property
    def d(self) -> int:
        return len(self.species)

    @property
    def K(self) -> int:
        return len(self.reactions)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.species]

    @property
    def kappas(self) -> np.ndarray:
        return np.array([r.kappa for r in self.reactions], dtype=float)

    def with_kappas(self, kappas: Sequence[float]) -> "ReactionNetwork":
        if len(kappas) != self.K:
            raise ValueError(f"expected {self.K} rate constants, got {len(kappas)}")
        rxns = tuple(Reaction(r.source, r.product, float(k)) for r, k in zip(self.reactions, kappas))
        return ReactionNetwork(self.species, rxns)

    @cached_property
    def complexes(self) -> tuple[Complex, ...]:
        """Distinct complexes in order of first appearance."""
        seen: dict[Complex, None] = {}
        for r in self.reactions:
            seen.setdefault(r.source)
            seen.setdefault(r.product)
        return tuple(seen)

    @cached_property
    def complex_index(self) -> dict[Complex, int]:
        return {c: i for i, c in enumerate(self.complexes)}

    @cached_property
    def source_matrix(self) -> np.ndarray:
        """K x d matrix of source stoichiometries."""
        return np.array([r.source.vector(self.d) for r in self.reactions], dtype=np.int64).reshape(self.K, self.d)

    @cached_property
    def product_matrix(self) -> np.ndarray:
        return np.array([r.product.vector(self.d) for r in self.reactions], dtype=np.int64).reshape(self.K, self.d)

    @cached_property
    def stoichiometric_matrix(self) -> np.ndarray:
        """d x K matrix whose columns are the reaction vectors."""
        return (self.product_matrix - self.source_matrix).T.copy()

    @cached_property
    def complex_matrix(self) -> np.ndarray:
        """|C| x d matrix with one complex per row."""
        return np.array([c.vector(self.d) for c in self.complexes], dtype=np.int64).reshape(-1, self.d)

    def _edges(self) -> tuple[np.ndarray, np.ndarray]:
        src = np.array([self.complex_index[r.source] for r in self.reactions])
        dst = np.array([self.complex_index[r.product] for r in self.reactions])
        return src, dst

    def _graph(self) -> csr_matrix:
        src, dst = self._edges()
        n = len(self.complexes)
        return csr_matrix((np.ones(len(src)), (src, dst)), shape=(n, n))


def complexes(net: ReactionNetwork) -> set[Complex]:
    return set(net.complexes)


def linkage_classes(net: ReactionNetwork) -> list[list[Complex]]:
    """Connected components of the complex graph, ignoring edge direction."""
    n, labels = connected_components(net._graph(), directed=True, connection="weak")
    groups: list[list[Complex]] = [[] for _ in range(n)]
    for cplx, lab in zip(net.complexes, labels):
        groups[lab].append(cplx)
    return groups


def is_weakly_reversible(net: ReactionNetwork) -> bool:
    g = net._graph()
    n_weak, _ = connected_components(g, directed=True, connection="weak")
    n_strong, _ = connected_components(g, directed=True, connection="strong")
    return n_weak == n_strong


def integer_rank(rows: Sequence[Sequence[int]]) -> int:
    """Rank of an integer matrix by fraction-free (Bareiss) elimination."""
    a = [[int(v) for v in row] for row in rows]
    if not a or not a[0]:
        return 0
    m, n = len(a), len(a[0])
    rank = 0
    prev = 1
    for col in range(n):
        if rank == m:
            break
        pivot = next((r for r in range(rank, m) if a[r][col] != 0), None)
        if pivot is None:
            continue
        a[rank], a[pivot] = a[pivot], a[rank]
        p = a[rank][col]
        for r in range(rank + 1, m):
            for c in range(col + 1, n):
                # exact division is guaranteed by Sylvester's identity
                a[r][c] = (p * a[r][c] - a[r][col] * a[rank][c]) // prev
            a[r][col] = 0
        prev = p
        rank += 1
    return rank


def _canonical(vec: Sequence[Fraction]) -> tuple[int, ...]:
    den = 1
    for v in vec:
        den = den * v.denominator // math.gcd(den, v.denominator)
    ints = [int(v * den) for v in vec]
    g = 0
    for v in ints:
        g = math.gcd(g, v)
    ints = [v // g for v in ints]
    first = next(v for v in ints if v != 0)
    if first < 0:
        ints = [-v for v in ints]
    return tuple(ints)


def integer_nullspace(rows: Sequence[Sequence[int]], ncols: int) -> list[tuple[int, ...]]:
    """Right null space basis of an integer matrix, from its exact RREF.

    Each vector has content 1 and a positive first nonzero entry.
    """
    a = [[Fraction(int(v)) for v in row] for row in rows]
    pivots: list[int] = []
    r = 0
    for col in range(ncols):
        pivot = next((i for i in range(r, len(a)) if a[i][col] != 0), None)
        if pivot is None:
            continue
        a[r], a[pivot] = a[pivot], a[r]
        p = a[r][col]
        a[r] = [v / p for v in a[r]]
        for i in range(len(a)):
            if i != r and a[i][col] != 0:
                f = a[i][col]
                a[i] = [vi - f * vr for vi, vr in zip(a[i], a[r])]
        pivots.append(col)
        r += 1
        if r == len(a):
            break
    basis = []
    for free in (c for c in range(ncols) if c not in pivots):
        vec = [Fraction(0)] * ncols
        vec[free] = Fraction(1)
        for row, pc in enumerate(pivots):
            vec[pc] = -a[row][free]
        basis.append(_canonical(vec))
    return basis


def conservation_basis(net: ReactionNetwork) -> list[tuple[int, ...]]:
    """Integer basis of the left null space of the stoichiometric matrix."""
    return integer_nullspace(net.stoichiometric_matrix.T.tolist(), net.d)


def stoich_dimension(net: ReactionNetwork) -> int:
    return integer_rank(net.stoichiometric_matrix.tolist())


def deficiency(net: ReactionNetwork) -> StructureReport:
    n_c = len(net.complexes)
    ell = len(linkage_classes(net))
    s = stoich_dimension(net)
    return StructureReport(
        num_complexes=n_c,
        num_linkage_classes=ell,
        weakly_reversible=is_weakly_reversible(net),
        stoich_dimension=s,
        deficiency=n_c - ell - s,
        conservation_basis=tuple(conservation_basis(net)),
    )
