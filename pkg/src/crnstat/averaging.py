"""Model reduction for the dimerisation motif: fast subsystems, effective
rates, slow-scale simulation and comparison metrics."""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .ctmc import Trajectory, build_generator, make_rng, stationary_nullspace
from .equilibrium import solve_complex_balanced
from .kinetics import KineticModel, ThetaFunction
from .models import DimerParams, dimer_pair_network, full_dimer_model
from .stationary import (
    Box,
    ConservationClass,
    DistributionVector,
    ProductFormMeasure,
    condition,
    enumerate_class,
    marginal,
    normalize,
)

log = logging.getLogger(__name__)


def qea_fast_subsystem(p: DimerParams, reverse: float | None = None) -> KineticModel:
    """Mass-action 2 S1 <-> S2 with forward k1 x1 (x1 - 1) and reverse
    ``reverse * x2`` (default k2, the fast dissociation constant)."""
    reverse = p.k2 if reverse is None else reverse
    return KineticModel.mass_action(dimer_pair_network(p.k1, reverse))


def constrained_theta(p: DimerParams) -> ThetaFunction:
    return ThetaFunction.expression(f"x*(x-1) + {p.k3 / p.k1!r}*ind(x>1)", alpha=2)


def constrained_fast_subsystem(p: DimerParams, reverse: float | None = None) -> KineticModel:
    """2 S1 <-> S2 with forward k1 x1 (x1 - 1) + k3 1{x1 > 1} and reverse
    ``reverse * x2``.

    The forward intensity is k1 theta1(x1) with
    theta1(z) = z (z - 1) + (k3 / k1) 1{z > 1} and alpha1 = 2. ``reverse``
    defaults to k2; S1 -> 0 leaves x2 unchanged under the constraint
    x1 + 2 x2 = s, so it does not feed the reverse channel. Pass
    ``reverse=p.k2 + p.k4`` for the variant that does.
    """
    reverse = p.k2 if reverse is None else reverse
    net = dimer_pair_network(p.k1, reverse)
    return KineticModel(net, (constrained_theta(p), ThetaFunction.falling(1)))


def fast_equilibrium(model: KineticModel, weights: Sequence[int]) -> np.ndarray:
    """Complex-balanced c on the class w . c = 1 (any class gives the same
    class-conditional distributions)."""
    return solve_complex_balanced(model.network, None, [(tuple(weights), 1.0)]).c


def class_distribution(model: KineticModel, weights: Sequence[int], s: int, c=None) -> DistributionVector:
    if c is None:
        c = fast_equilibrium(model, weights)
    cls = enumerate_class(ConservationClass(tuple(int(v) for v in weights), int(s)))
    return normalize(ProductFormMeasure.from_model(model, c), cls)


@dataclass(eq=False)
class ReducedModel:
    """Effective slow rates lambda_bar(s) = E_{pi_s}[lambda_slow(x)].

    ``pi_s`` is the product-form distribution of the fast subsystem on the
    class w . x = s. Rates are computed on demand and memoised.
    """

    fast_model: KineticModel
    slow_model: KineticModel
    slow_reactions: tuple[int, ...]
    weights: tuple[int, ...]
    tag: str
    c: np.ndarray
    _memo: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def slow_jumps(self) -> np.ndarray:
        """Change in s caused by each slow reaction."""
        net = self.slow_model.network
        nu = (net.product_matrix - net.source_matrix)[list(self.slow_reactions)]
        return nu @ np.asarray(self.weights)

    def rates_at(self, s: int) -> np.ndarray:
        s = int(s)
        hit = self._memo.get(s)
        if hit is not None:
            return hit
        dist = class_distribution(self.fast_model, self.weights, s, self.c)
        props = self.slow_model.propensities(dist.states)[:, list(self.slow_reactions)]
        rates = dist.probs @ props
        with self._lock:
            self._memo[s] = rates
        return rates

    def table(self, s_values) -> np.ndarray:
        return np.array([self.rates_at(s) for s in s_values])


def effective_rates(
    fast_model: KineticModel,
    slow_model: KineticModel,
    slow_reactions: Sequence[int],
    weights: Sequence[int],
    s_values=(),
    tag: str = "",
) -> ReducedModel:
    weights = tuple(int(v) for v in weights)
    red = ReducedModel(fast_model, slow_model, tuple(slow_reactions), weights, tag,
                       fast_equilibrium(fast_model, weights))
    for s in s_values:
        red.rates_at(s)
    return red


def dimer_reduction(p: DimerParams, tag: str = "constrained", s_values=(), reverse: float | None = None) -> ReducedModel:
    """Slow variable s = x1 + 2 x2 of the full dimer model, with slow
    reactions 0 -> S2 (s += 2) and S1 -> 0 (s -= 1)."""
    fast = constrained_fast_subsystem(p, reverse) if tag == "constrained" else qea_fast_subsystem(p, reverse)
    return effective_rates(fast, full_dimer_model(p), (2, 3), (1, 2), s_values, tag)


def slow_scale_ssa(reduced: ReducedModel, s0: int, t_max: float, seed: int, max_jumps: int | None = None) -> Trajectory:
    """Direct-method simulation of the slow variable with effective rates
    derived lazily at every visited s."""
    rng = make_rng(seed)
    jumps = [int(v) for v in reduced.slow_jumps]
    s, t = int(s0), 0.0
    times, path, fired = [0.0], [[s]], []
    limit = math.inf if max_jumps is None else max_jumps
    absorbed = False
    while len(fired) < limit:
        rates = reduced.rates_at(s)
        a0 = float(rates.sum())
        if a0 <= 0:
            absorbed = True
            break
        t_new = t + rng.standard_exponential() / a0
        if t_new > t_max:
            break
        mu = int(np.searchsorted(np.cumsum(rates), rng.random() * a0, side="right"))
        mu = min(mu, len(rates) - 1)
        s += jumps[mu]
        t = t_new
        times.append(t)
        path.append([s])
        fired.append(mu)
    t_end = t_max if len(fired) < limit else t
    return Trajectory(np.array(times), np.array(path, dtype=np.int64), np.array(fired, dtype=np.int64),
                      float(t_end), int(seed), None, "slow_scale_direct", absorbed)


# ----------------------------------------------------------------- metrics


def _as_mapping(dist) -> Mapping:
    return dist.as_mapping() if isinstance(dist, DistributionVector) else dist


def rel_l2(dist, reference) -> float:
    """||p - q||_2 / ||q||_2 on the common support, each renormalised there."""
    a, b = _as_mapping(dist), _as_mapping(reference)
    keys = sorted(set(a) & set(b))
    if not keys:
        raise ValueError("distributions have no common support")
    p = np.array([a[k] for k in keys])
    q = np.array([b[k] for k in keys])
    if not (p.sum() > 0 and q.sum() > 0):
        raise ValueError("no probability mass on the common support")
    p, q = p / p.sum(), q / q.sum()
    return float(np.linalg.norm(p - q) / np.linalg.norm(q))


def tv(dist, reference) -> float:
    a, b = _as_mapping(dist), _as_mapping(reference)
    keys = set(a) | set(b)
    return 0.5 * float(sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys))


def fast_fraction(dist: DistributionVector, fast_reactions: Sequence[int], model: KineticModel) -> float:
    """Stationary expected share of firings that are fast reactions."""
    props = model.propensities(dist.states)
    fast = dist.probs @ props[:, list(fast_reactions)].sum(axis=1)
    total = dist.probs @ props.sum(axis=1)
    if not total > 0:
        raise ValueError("no reaction fires under this distribution")
    return float(fast / total)


def comparison_report(metric: str, value: float, reference_source: str, truncation, params) -> dict:
    return {
        "metric": metric,
        "value": float(value),
        "reference_source": reference_source,
        "truncation": truncation,
        "params": params,
    }


@dataclass
class DimerComparison:
    s: int
    x2: np.ndarray
    constrained: np.ndarray
    qea: np.ndarray
    full: np.ndarray
    metrics: list[dict]
    full_mode: tuple[int, int]
    tail_mass: float | None
    residual: float | None

    def metric(self, name: str) -> float:
        return next(m["value"] for m in self.metrics if m["metric"] == name)


def dimer_comparison(
    p: DimerParams = DimerParams(),
    s: int = 300,
    box: tuple[int, int] = (1000, 500),
    method: str = "auto",
) -> DimerComparison:
    """Conditional laws of x2 given x1 + 2 x2 = s from the constrained and
    QEA product forms and from the full model's truncated generator."""
    model = full_dimer_model(p)
    cls = enumerate_class(Box.from_upper(box))
    full = stationary_nullspace(build_generator(model, cls), method)
    w = (1, 2)
    cond = marginal(condition(full, w, s), [1])
    curves = {}
    for tag, fast in (("constrained", constrained_fast_subsystem(p)), ("qea", qea_fast_subsystem(p))):
        curves[tag] = marginal(class_distribution(fast, w, s), [1])
    x2 = np.arange(s // 2 + 1)
    key = [(int(v),) for v in x2]
    full_curve = np.array([cond.get(k, 0.0) for k in key])
    truncation = {"box": list(box), "tail_mass": full.tail_mass, "residual": full.residual}
    params = {**p.as_dict(), "s": s}
    metrics = [
        comparison_report("rel_l2_qea", rel_l2(curves["qea"], cond), "full generator null space", truncation, params),
        comparison_report("rel_l2_constrained", rel_l2(curves["constrained"], cond), "full generator null space",
                          truncation, params),
        comparison_report("fast_fraction", fast_fraction(full, (0, 1), model), "full generator null space",
                          truncation, params),
    ]
    j = int(np.argmax(full.probs))
    mode = tuple(int(v) for v in full.states[j])
    return DimerComparison(
        s,
        x2,
        np.array([curves["constrained"][k] for k in key]),
        np.array([curves["qea"][k] for k in key]),
        full_curve,
        metrics,
        mode,
        full.tail_mass,
        full.residual,
    )
