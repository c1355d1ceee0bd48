"""Random weakly reversible deficiency-zero networks with a positive
conservation law, and random rate factors compatible with them."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import reduce
from math import gcd

import numpy as np

from crnstat.kinetics import KineticModel, ThetaFunction
from crnstat.network import Complex, Reaction, ReactionNetwork, deficiency
from crnstat.stationary import Box, Reachability, enumerate_class


@dataclass
class RandomCase:
    model: KineticModel
    weights: tuple[int, ...]
    seed_state: tuple[int, ...]
    box: Box


def _complexes_of_weight(w, total, cap=4):
    out = []
    for y in itertools.product(range(cap + 1), repeat=len(w)):
        if any(y) and sum(a * b for a, b in zip(w, y)) == total:
            out.append(y)
    return out


def random_wr_network(rng: np.random.Generator, max_tries: int = 500) -> tuple[ReactionNetwork, tuple[int, ...]]:
    for _ in range(max_tries):
        d = int(rng.integers(2, 5))
        w = tuple(int(v) for v in rng.integers(1, 3, size=d))
        reactions, used = [], set()
        for _ in range(int(rng.integers(1, 3))):
            total = int(rng.integers(2, 5))
            pool = [y for y in _complexes_of_weight(w, total) if y not in used]
            n = int(rng.integers(2, 4))
            if len(pool) < n:
                break
            pick = [pool[i] for i in rng.choice(len(pool), n, replace=False)]
            used.update(pick)
            cx = [Complex.from_vector(y) for y in pick]
            # a directed cycle makes the class strongly connected; extra
            # edges keep it from being only a cycle
            edges = {(i, (i + 1) % n) for i in range(n)}
            for i, j in itertools.permutations(range(n), 2):
                if rng.random() < 0.3:
                    edges.add((i, j))
            for i, j in sorted(edges):
                reactions.append(Reaction(cx[i], cx[j], float(np.exp(rng.uniform(-1.5, 1.5)))))
        if not reactions:
            continue
        names = [f"X{i}" for i in range(d)]
        species = ReactionNetwork.from_strings(names, ["X0 -> X1"]).species
        net = ReactionNetwork(species, tuple(reactions))
        rep = deficiency(net)
        if rep.deficiency == 0 and rep.weakly_reversible:
            return net, w
    raise RuntimeError("no deficiency-zero network found")


def random_theta(rng: np.random.Generator, alpha: int) -> ThetaFunction:
    kind = int(rng.integers(4))
    if kind == 0:
        return ThetaFunction.falling(alpha)
    if kind == 1:
        p0, p1 = rng.uniform(0.5, 5, 2)
        return ThetaFunction.expression(f"ind(x>={alpha})*({p0:.6f} + {p1:.6f}*x + 0.4*{p0:.6f}*sin(x))", alpha)
    if kind == 2:
        p = rng.uniform(0.3, 2.0)
        return ThetaFunction.expression(f"ind(x>={alpha})*x^{p:.6f}/(1 + 0.01*x)", alpha)
    vals = np.concatenate([np.zeros(alpha), rng.uniform(0.2, 20, 400 - alpha)])
    return ThetaFunction.tabulated(vals, alpha)


def random_case(rng: np.random.Generator, max_states: int = 5000) -> RandomCase:
    while True:
        net, w = random_wr_network(rng)
        src = net.source_matrix
        alphas = [reduce(gcd, [int(v) for v in src[:, i] if v], 0) or 1 for i in range(net.d)]
        thetas = tuple(random_theta(rng, a) for a in alphas)
        model = KineticModel(net, thetas)
        # seed: a few copies of a random complex, so some reaction can fire
        y = net.complexes[int(rng.integers(len(net.complexes)))].vector(net.d)
        seed = tuple(int(v) for v in y * int(rng.integers(1, 6)) + rng.integers(0, 3, size=net.d))
        m = sum(a * b for a, b in zip(w, seed))
        box = Box.from_upper([m // wi for wi in w])
        cls = enumerate_class(Reachability(seed, box, net))
        if 5 <= len(cls) <= max_states:
            return RandomCase(model, w, seed, box)
