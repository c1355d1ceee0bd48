"""Brute-force Markov chain oracles: truncated generators, stationary
null-space solves and exact stochastic simulation."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .kinetics import KineticModel
from .stationary import DistributionVector, StateClass

log = logging.getLogger(__name__)

DIRECT_LIMIT = 200_000
RESIDUAL_TOL = 1e-10


class NumericalFailure(RuntimeError):
    pass


class MultipleClosedClasses(NumericalFailure):
    def __init__(self, classes: list[np.ndarray]):
        sizes = [len(c) for c in classes]
        super().__init__(f"truncated chain has {len(classes)} closed communicating classes (sizes {sizes})")
        self.classes = classes


class Absorbed(RuntimeError):
    pass


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("CRNSTAT_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class TruncatedGenerator:
    """Rate matrix on a finite class; ``matrix[x, y]`` is the x -> y rate.

    Transitions leaving the class are dropped and the diagonal makes every
    row sum to zero; the dropped rate per state is kept in ``clipped``.
    """

    state_class: StateClass
    matrix: sp.csr_matrix
    clipped: np.ndarray

    @property
    def max_rate(self) -> float:
        return float(np.abs(self.matrix.diagonal()).max(initial=0.0))

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()


def build_generator(model: KineticModel, state_class: StateClass) -> TruncatedGenerator:
    states = state_class.states
    n = len(states)
    props = model.propensities(states)
    jumps = model.network.product_matrix - model.network.source_matrix
    rows, cols, vals = [], [], []
    clipped = np.zeros(n)
    for k in range(model.network.K):
        rate = props[:, k]
        active = rate > 0
        pos = state_class.lookup(states + jumps[k])
        keep = active & (pos >= 0)
        clipped += np.where(active & (pos < 0), rate, 0.0)
        rows.append(np.nonzero(keep)[0])
        cols.append(pos[keep])
        vals.append(rate[keep])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    off = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    out = np.asarray(off.sum(axis=1)).ravel()
    Q = (off - sp.diags(out)).tocsr()
    return TruncatedGenerator(state_class, Q, clipped)


def closed_classes(Q: sp.csr_matrix) -> tuple[list[np.ndarray], np.ndarray]:
    """Closed communicating classes of the chain and the component labels."""
    off = Q.copy()
    off.setdiag(0)
    off.eliminate_zeros()
    ncomp, labels = connected_components(off, directed=True, connection="strong")
    coo = off.tocoo()
    leaves = np.ones(ncomp, dtype=bool)
    cross = labels[coo.row] != labels[coo.col]
    leaves[labels[coo.row[cross]]] = False
    return [np.nonzero(labels == c)[0] for c in np.nonzero(leaves)[0]], labels


def _solve_direct(M: sp.csc_matrix, b: np.ndarray) -> np.ndarray:
    return spla.spsolve(M, b, permc_spec="COLAMD")


def _solve_iterative(M: sp.csc_matrix, b: np.ndarray) -> np.ndarray:
    ilu = spla.spilu(M, drop_tol=1e-5, fill_factor=10)
    P = spla.LinearOperator(M.shape, ilu.solve)
    x, info = spla.gmres(M, b, M=P, rtol=1e-13, atol=0.0, restart=100, maxiter=50)
    if info < 0:
        raise NumericalFailure(f"GMRES failed (info={info})")
    return x


def _stationary_of(Q: sp.csr_matrix, method: str) -> np.ndarray:
    n = Q.shape[0]
    if n == 1:
        return np.ones(1)
    # pi Q = 0 with one balance equation replaced by sum(pi) = 1
    M = Q.T.tolil()
    M[0, :] = np.ones(n)
    M = M.tocsc()
    b = np.zeros(n)
    b[0] = 1.0
    if method == "auto":
        method = "direct" if n <= DIRECT_LIMIT else "iterative"
    pi = _solve_direct(M, b) if method == "direct" else _solve_iterative(M, b)
    pi = np.where(pi > 0, pi, 0.0)
    return pi / pi.sum()


def stationary_nullspace(gen: TruncatedGenerator, method: str = "auto") -> DistributionVector:
    """Stationary distribution of the truncated chain.

    Direct sparse LU up to ``DIRECT_LIMIT`` states, ILU-preconditioned GMRES
    beyond; both must meet ``||pi Q||_inf <= 1e-10 * max rate``. Transient
    states get probability 0.
    """
    Q = gen.matrix
    n = Q.shape[0]
    closed, _ = closed_classes(Q)
    if len(closed) > 1:
        raise MultipleClosedClasses(closed)
    members = closed[0]
    pi = np.zeros(n)
    if len(members) == n:
        pi = _stationary_of(Q, method)
    else:
        sub = Q[members][:, members].tocsr()
        pi[members] = _stationary_of(sub, method)
    scale = max(gen.max_rate, np.finfo(float).tiny)
    residual = float(np.abs(Q.T @ pi).max()) / scale
    if residual > RESIDUAL_TOL:
        if method != "direct" and n > DIRECT_LIMIT:
            log.warning("iterative residual %.3e too large; retrying with direct solve", residual)
            return stationary_nullspace(gen, "direct")
        raise NumericalFailure(f"stationary residual {residual:.3e} exceeds {RESIDUAL_TOL:g}")
    with np.errstate(divide="ignore"):
        logs = np.log(pi)
    # mass on states whose outflow was clipped by the truncation
    tail = float(pi[gen.clipped > 0].sum())
    return DistributionVector(gen.state_class, pi, 0.0, logs, tail, residual)


# ------------------------------------------------------------- simulation


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Piecewise-constant path: ``states[i]`` holds on ``[times[i], times[i+1])``
    with ``times[-1]`` replaced by ``t_end`` for the last state."""

    times: np.ndarray
    states: np.ndarray
    reactions: np.ndarray
    t_end: float
    seed: int
    stream: int | None = None
    method: str = "direct"
    absorbed: bool = False

    @property
    def n_jumps(self) -> int:
        return len(self.reactions)

    def holding_times(self) -> np.ndarray:
        return np.diff(np.append(self.times, self.t_end))


def make_rng(seed: int, stream: int | None = None) -> np.random.Generator:
    """Counter-based Philox stream; ``stream`` selects an independent child."""
    ss = np.random.SeedSequence(seed) if stream is None else np.random.SeedSequence(seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(ss))


class _Propensity:
    """Scalar propensity evaluation from cached theta tables."""

    def __init__(self, model: KineticModel):
        net = model.network
        self.model = model
        self.kappas = [float(k) for k in net.kappas]
        self.factors = []
        for k in range(net.K):
            terms = []
            for i in np.nonzero(net.source_matrix[k])[0]:
                a = model.thetas[i].alpha
                terms.append((int(i), a, int(net.source_matrix[k, i]) // a))
            self.factors.append(terms)
        self.tables = [list(t.values(64)) for t in model.thetas]
        self.jumps = [[int(v) for v in row] for row in (net.product_matrix - net.source_matrix)]
        changed = [{i for i, v in enumerate(j) if v} for j in self.jumps]
        uses = [{i for i, _, _ in terms} for terms in self.factors]
        self.depends = [[q for q in range(net.K) if uses[q] & changed[k]] for k in range(net.K)]

    def theta(self, i: int, z: int) -> float:
        if z < 0:
            return 0.0
        table = self.tables[i]
        if z >= len(table):
            table = self.tables[i] = list(self.model.thetas[i].values(2 * z + 1))
        return table[z]

    def __call__(self, k: int, x: list[int]) -> float:
        val = self.kappas[k]
        for i, a, n in self.factors[k]:
            xi = x[i]
            for j in range(n):
                val *= self.theta(i, xi - j * a)
                if val == 0.0:
                    return 0.0
        return val


def simulate(
    model: KineticModel,
    x0,
    t_max: float,
    seed: int,
    method: str = "direct",
    *,
    max_jumps: int | None = None,
    stream: int | None = None,
) -> Trajectory:
    """Exact sample path by the direct method or the modified next
    reaction method (``"next_reaction"`` / ``"nrm"``)."""
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    if method in ("nrm", "next_reaction"):
        method = "next_reaction"
    elif method != "direct":
        raise ValueError(f"unknown method {method!r}")
    x = [int(v) for v in x0]
    if any(v < 0 for v in x):
        raise ValueError("initial state must be nonnegative")
    rng = make_rng(seed, stream)
    prop = _Propensity(model)
    K = model.network.K
    a = [prop(k, x) for k in range(K)]
    if any(not math.isfinite(v) for v in a):
        raise ValueError("intensity not finite at the initial state")
    limit = math.inf if max_jumps is None else int(max_jumps)
    times = [0.0]
    path = [list(x)]
    fired: list[int] = []
    t = 0.0
    absorbed = False
    block = 1 << 14
    expo = rng.standard_exponential(block)
    unif = rng.random(block)
    pos = 0

    if method == "next_reaction":
        internal = [0.0] * K
        nxt = [float(v) for v in rng.standard_exponential(K)]

    while len(fired) < limit:
        if pos >= block:
            expo = rng.standard_exponential(block)
            unif = rng.random(block)
            pos = 0
        if method == "direct":
            a0 = math.fsum(a)
            if a0 <= 0.0:
                absorbed = True
                break
            t_new = t + expo[pos] / a0
            if t_new > t_max:
                break
            target = unif[pos] * a0
            acc = 0.0
            mu = K - 1
            for k in range(K):
                acc += a[k]
                if target < acc:
                    mu = k
                    break
            while a[mu] == 0.0:
                mu -= 1
            dt = t_new - t
        else:
            dt = math.inf
            mu = -1
            for k in range(K):
                if a[k] > 0.0:
                    cand = (nxt[k] - internal[k]) / a[k]
                    if cand < dt:
                        dt, mu = cand, k
            if mu < 0:
                absorbed = True
                break
            t_new = t + dt
            if t_new > t_max:
                break
            for k in range(K):
                internal[k] += a[k] * dt
            nxt[mu] += expo[pos]
        pos += 1
        t = t_new
        jump = prop.jumps[mu]
        for i, v in enumerate(jump):
            x[i] += v
        for q in prop.depends[mu]:
            a[q] = prop(q, x)
        times.append(t)
        path.append(list(x))
        fired.append(mu)

    # a run cut by max_jumps ends at its last jump
    t_end = t_max if len(fired) < limit and math.isfinite(t_max) else t
    return Trajectory(
        np.array(times),
        np.array(path, dtype=np.int64),
        np.array(fired, dtype=np.int64),
        float(t_end),
        int(seed),
        stream,
        method,
        absorbed,
    )


def _simulate_member(args):
    model, x0, t_max, seed, method, max_jumps, j = args
    return simulate(model, x0, t_max, seed, method, max_jumps=max_jumps, stream=j)


def simulate_ensemble(
    model: KineticModel,
    x0,
    t_max: float,
    seed: int,
    n: int,
    method: str = "direct",
    *,
    max_jumps: int | None = None,
    workers: int | None = None,
) -> list[Trajectory]:
    """Independent trajectories on child streams 0..n-1 of ``seed``."""
    jobs = [(model, x0, t_max, seed, method, max_jumps, j) for j in range(n)]
    workers = default_threads() if workers is None else workers
    if workers <= 1 or n <= 1:
        return [_simulate_member(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_simulate_member, jobs))


def empirical_distribution(traj: Trajectory | list[Trajectory], burn_in: float | None = None) -> DistributionVector:
    """Occupation-time histogram after ``burn_in`` (default: 10% of the run)."""
    trajs = traj if isinstance(traj, list) else [traj]
    states, weights = [], []
    for tr in trajs:
        b = 0.1 * tr.t_end if burn_in is None else burn_in
        if tr.t_end <= b:
            raise ValueError("trajectory is shorter than the burn-in")
        start = np.maximum(tr.times, b)
        stop = np.append(tr.times[1:], tr.t_end)
        w = np.clip(stop - start, 0.0, None)
        keep = w > 0
        states.append(tr.states[keep])
        weights.append(w[keep])
    states = np.concatenate(states)
    weights = np.concatenate(weights)
    uniq, inv = np.unique(states, axis=0, return_inverse=True)
    mass = np.bincount(inv.ravel(), weights, len(uniq))
    cls = StateClass(uniq)
    # StateClass sorts lexicographically, as np.unique already does
    probs = mass / mass.sum()
    return DistributionVector(cls, probs, 0.0)
