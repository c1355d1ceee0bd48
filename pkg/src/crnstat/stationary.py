"""Product-form invariant measures, finite state classes and distributions.

For a complex-balanced mass-action equilibrium c, the measure

    pi(x) = prod_i c_i^x_i / prod_{j < floor(x_i/alpha_i)} theta_i(x_i - j alpha_i)

is evaluated in log space. State classes are finite enumerations (a
conservation class, a box, or the reachable set of a seed inside a box)
sorted lexicographically.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .kinetics import KineticModel, ThetaFunction
from .network import ReactionNetwork

log = logging.getLogger(__name__)

TAIL_WARN = 1e-8


class OutOfSupport(ValueError):
    pass


class UnboundedClass(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ProductFormMeasure:
    c: np.ndarray
    thetas: tuple[ThetaFunction, ...]

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 1 or len(c) != len(self.thetas):
            raise ValueError("need one concentration per rate factor")
        if np.any(c <= 0):
            raise ValueError("equilibrium concentrations must be positive")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "thetas", tuple(self.thetas))

    @classmethod
    def from_model(cls, model: KineticModel, c) -> "ProductFormMeasure":
        return cls(np.asarray(c, dtype=float), model.thetas)

    @property
    def alphas(self) -> tuple[int, ...]:
        return tuple(t.alpha for t in self.thetas)

    def log_pi_many(self, states) -> np.ndarray:
        """Unnormalised log pi for each row; -inf outside the support."""
        x = np.atleast_2d(np.asarray(states, dtype=np.int64))
        logc = np.log(self.c)
        out = np.zeros(x.shape[0])
        for i, theta in enumerate(self.thetas):
            out += x[:, i] * logc[i] - theta.log_denominator(x[:, i])
        return out

    def log_pi(self, x) -> float:
        x = np.asarray(x, dtype=np.int64)
        if np.any(x < 0):
            raise ValueError("state must be nonnegative")
        val = float(self.log_pi_many(x[None, :])[0])
        if not np.isfinite(val):
            raise OutOfSupport(f"state {x.tolist()} is outside the support of the measure")
        return val

    def in_support(self, states) -> np.ndarray:
        return np.isfinite(self.log_pi_many(states))


def log_pi(measure: ProductFormMeasure, x) -> float:
    return measure.log_pi(x)


def mass_action_like_log_measure(c, thetas: Sequence[ThetaFunction], x) -> float:
    """log of prod_i c_i^x_i / prod_{j < x_i} theta_i(x_i - j).

    The step-one form, written out term by term; used to cross-check the
    general evaluation.
    """
    total = 0.0
    for ci, theta, xi in zip(c, thetas, x):
        terms = [int(xi) * math.log(ci)]
        for j in range(int(xi)):
            v = theta(int(xi) - j)
            if not v > 0:
                raise OutOfSupport(f"theta({int(xi) - j}) = {v} in the denominator")
            terms.append(-math.log(v))
        total += math.fsum(terms)
    return total


# ---------------------------------------------------------------- classes


@dataclass(frozen=True)
class ConservationClass:
    w: tuple[int, ...]
    m: int


@dataclass(frozen=True)
class Box:
    lower: tuple[int, ...]
    upper: tuple[int, ...]

    @classmethod
    def from_upper(cls, upper: Sequence[int]) -> "Box":
        return cls(tuple(0 for _ in upper), tuple(int(u) for u in upper))


@dataclass(frozen=True, eq=False)
class Reachability:
    seed: tuple[int, ...]
    box: Box
    network: ReactionNetwork


@dataclass(frozen=True, eq=False)
class StateClass:
    states: np.ndarray
    descriptor: object = None
    _keys: np.ndarray = field(default=None, repr=False)
    _strides: np.ndarray = field(default=None, repr=False)
    _bound: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=np.int64))
        if states.size == 0:
            raise ValueError("state class is empty")
        order = np.lexsort(states.T[::-1])
        states = states[order]
        bound = states.max(axis=0) + 1
        strides = np.ones(states.shape[1], dtype=np.int64)
        for i in range(states.shape[1] - 2, -1, -1):
            strides[i] = strides[i + 1] * bound[i + 1]
        if float(np.prod(bound.astype(float))) > 2**62:
            raise ValueError("state class too large to index")
        keys = states @ strides
        if np.any(np.diff(keys) == 0):
            raise ValueError("state class contains duplicate states")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "_keys", keys)
        object.__setattr__(self, "_strides", strides)
        object.__setattr__(self, "_bound", bound)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def d(self) -> int:
        return self.states.shape[1]

    def lookup(self, states) -> np.ndarray:
        """Positions of ``states`` in the class, -1 where absent."""
        x = np.atleast_2d(np.asarray(states, dtype=np.int64))
        ok = np.all((x >= 0) & (x < self._bound), axis=1)
        out = np.full(x.shape[0], -1, dtype=np.int64)
        if ok.any():
            keys = x[ok] @ self._strides
            pos = np.searchsorted(self._keys, keys)
            pos = np.minimum(pos, len(self._keys) - 1)
            hit = self._keys[pos] == keys
            sub = np.where(hit, pos, -1)
            out[ok] = sub
        return out

    def index(self, x) -> int:
        pos = int(self.lookup(x)[0])
        if pos < 0:
            raise KeyError(f"state {list(x)} not in class")
        return pos

    def __contains__(self, x) -> bool:
        return int(self.lookup(x)[0]) >= 0

    def boundary_masks(self) -> list[np.ndarray]:
        """Per-species masks of states on the upper face of the truncation box."""
        box = _box_of(self.descriptor)
        if box is None:
            return []
        return [self.states[:, i] == u for i, u in enumerate(box.upper)]


def _box_of(descriptor) -> Box | None:
    if isinstance(descriptor, Box):
        return descriptor
    if isinstance(descriptor, Reachability):
        return descriptor.box
    return None


def _enumerate_conservation(w: Sequence[int], m: int) -> np.ndarray:
    w = [int(v) for v in w]
    if any(v <= 0 for v in w):
        raise UnboundedClass(f"conservation class w={w} is unbounded: every weight must be positive")
    if m < 0:
        raise ValueError("class value must be nonnegative")
    d = len(w)
    partial = np.zeros((1, 0), dtype=np.int64)
    budget = np.array([m], dtype=np.int64)
    for i in range(d):
        if i == d - 1:
            ok = budget % w[i] == 0
            partial = np.hstack([partial[ok], (budget[ok] // w[i])[:, None]])
            break
        counts = budget // w[i] + 1
        rep = np.repeat(np.arange(len(partial)), counts)
        xi = np.concatenate([np.arange(c) for c in counts]) if len(counts) else np.zeros(0, dtype=np.int64)
        partial = np.hstack([partial[rep], xi[:, None]])
        budget = budget[rep] - w[i] * xi
    return partial


def _enumerate_box(box: Box) -> np.ndarray:
    axes = [np.arange(lo, hi + 1) for lo, hi in zip(box.lower, box.upper)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)


def _enumerate_reachable(desc: Reachability) -> np.ndarray:
    """Breadth-first closure of the seed under reaction jumps inside the box.

    Reaction k can fire at x iff x >= source_k, which is the positivity
    pattern of every intensity of the required form.
    """
    net = desc.network
    lower = np.asarray(desc.box.lower, dtype=np.int64)
    upper = np.asarray(desc.box.upper, dtype=np.int64)
    seed = np.asarray(desc.seed, dtype=np.int64)
    if np.any(seed < lower) or np.any(seed > upper):
        raise ValueError("seed lies outside the box")
    span = upper - lower + 1
    strides = np.ones(len(span), dtype=np.int64)
    for i in range(len(span) - 2, -1, -1):
        strides[i] = strides[i + 1] * span[i + 1]
    seen = np.zeros(int(np.prod(span)), dtype=bool)
    seen[(seed - lower) @ strides] = True
    frontier = seed[None, :]
    src = net.source_matrix
    jumps = (net.product_matrix - net.source_matrix)
    while len(frontier):
        new = []
        for k in range(net.K):
            can = np.all(frontier >= src[k], axis=1)
            y = frontier[can] + jumps[k]
            y = y[np.all((y >= lower) & (y <= upper), axis=1)]
            if len(y):
                keys = (y - lower) @ strides
                keys = np.unique(keys[~seen[keys]])
                seen[keys] = True
                new.append(keys)
        if not new:
            break
        keys = np.unique(np.concatenate(new))
        frontier = lower + (keys[:, None] // strides) % span
    keys = np.nonzero(seen)[0]
    return lower + (keys[:, None] // strides) % span


def enumerate_class(descriptor) -> StateClass:
    if isinstance(descriptor, ConservationClass):
        states = _enumerate_conservation(descriptor.w, descriptor.m)
    elif isinstance(descriptor, Box):
        states = _enumerate_box(descriptor)
    elif isinstance(descriptor, Reachability):
        states = _enumerate_reachable(descriptor)
    else:
        raise TypeError(f"unknown class descriptor {descriptor!r}")
    return StateClass(states, descriptor)


# ----------------------------------------------------------- distributions


@dataclass(frozen=True, eq=False)
class DistributionVector:
    state_class: StateClass
    probs: np.ndarray
    log_norm: float = 0.0
    log_unnorm: np.ndarray | None = None
    tail_mass: float | None = None
    residual: float | None = None

    @property
    def states(self) -> np.ndarray:
        return self.state_class.states

    def as_mapping(self) -> dict[tuple[int, ...], float]:
        return {tuple(int(v) for v in s): float(p) for s, p in zip(self.states, self.probs)}

    def expectation(self, values) -> float:
        return float(np.dot(self.probs, values))


def _logsumexp(v: np.ndarray) -> float:
    top = v.max()
    if not np.isfinite(top):
        return top
    # np.sum reduces pairwise in a fixed order
    return float(top + np.log(np.sum(np.exp(v - top))))


def tail_mass(state_class: StateClass, probs: np.ndarray) -> float | None:
    masks = state_class.boundary_masks()
    if not masks:
        return None
    return float(max(probs[m].sum() for m in masks))


def distribution_from_log(state_class: StateClass, logs: np.ndarray, **extra) -> DistributionVector:
    logs = np.asarray(logs, dtype=float)
    if not np.any(np.isfinite(logs)):
        raise OutOfSupport("every state of the class lies outside the support")
    lz = _logsumexp(logs)
    probs = np.exp(logs - lz)
    tm = tail_mass(state_class, probs)
    if tm is not None and tm > TAIL_WARN:
        warnings.warn(f"boundary shell carries probability {tm:.3e} > {TAIL_WARN:g}; enlarge the box")
    return DistributionVector(state_class, probs, lz, logs, tm, **extra)


def normalize(measure: ProductFormMeasure, state_class: StateClass) -> DistributionVector:
    return distribution_from_log(state_class, measure.log_pi_many(state_class.states))


def marginal(dist: DistributionVector, on) -> dict:
    """Pushforward onto a species subset (sequence of indices) or a linear
    functional (``("linear", weights)`` or a mapping index -> weight).

    Species subsets give tuple keys; functionals give scalar keys.
    """
    states = dist.states
    if isinstance(on, Mapping):
        weights = np.zeros(states.shape[1], dtype=np.int64)
        for i, v in on.items():
            weights[int(i)] = v
        on = ("linear", weights)
    if isinstance(on, tuple) and len(on) == 2 and isinstance(on[0], str) and on[0] == "linear":
        vals = states @ np.asarray(on[1])
        keys, inv = np.unique(vals, return_inverse=True)
        mass = np.bincount(inv, dist.probs, len(keys))
        return {k.item(): float(p) for k, p in zip(keys, mass)}
    idx = [int(i) for i in on]
    sub = states[:, idx]
    keys, inv = np.unique(sub, axis=0, return_inverse=True)
    mass = np.bincount(inv.ravel(), dist.probs, len(keys))
    return {tuple(int(v) for v in k): float(p) for k, p in zip(keys, mass)}


def condition(dist: DistributionVector, w: Sequence[int], value: int) -> DistributionVector:
    """Restrict to states with w . x = value and renormalise."""
    mask = dist.states @ np.asarray(w, dtype=np.int64) == value
    if not mask.any():
        raise ValueError(f"no state satisfies w.x = {value}")
    sub = StateClass(dist.states[mask], ConservationClass(tuple(int(v) for v in w), int(value)))
    p = dist.probs[mask]
    # StateClass re-sorts; the restriction of a sorted array is already sorted
    total = p.sum()
    if not total > 0:
        raise ValueError("conditioning event has zero probability")
    return DistributionVector(sub, p / total, dist.log_norm + math.log(total))


def aligned(a: DistributionVector, b: DistributionVector, how: str = "union"):
    """Probability vectors of a and b over the union or intersection of states."""
    ma, mb = a.as_mapping(), b.as_mapping()
    if how == "union":
        keys = sorted(set(ma) | set(mb))
    else:
        keys = sorted(set(ma) & set(mb))
    pa = np.array([ma.get(k, 0.0) for k in keys])
    pb = np.array([mb.get(k, 0.0) for k in keys])
    return keys, pa, pb


def total_variation(a: DistributionVector, b: DistributionVector) -> float:
    if a.state_class is b.state_class:
        return 0.5 * float(np.abs(a.probs - b.probs).sum())
    _, pa, pb = aligned(a, b)
    return 0.5 * float(np.abs(pa - pb).sum())
