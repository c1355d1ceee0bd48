"""Per-species rate factors, the gcd species partition and intensities.

Intensities have the form

    lambda_k(x) = kappa_k * prod_i prod_{j < nu_ki / alpha_i} theta_i(x_i - j * alpha_i)

where alpha_i is the gcd of species i's source stoichiometries and
theta_i(z) vanishes exactly on 0 <= z < alpha_i.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .expr import Expression
from .network import ReactionNetwork


class DomainExhausted(ValueError):
    """A tabulated rate factor was evaluated beyond its table."""


class AssumptionError(ValueError):
    def __init__(self, report: "AssumptionReport"):
        super().__init__(report.message)
        self.report = report


def default_probe_max(alpha: int) -> int:
    return 10 * alpha + 100


class ThetaFunction:
    """Rate factor theta on the nonnegative integers with step ``alpha``.

    One of three representations: ``falling`` (z (z-1) ... (z-alpha+1), which
    recovers mass action), ``expr`` (an :class:`Expression` in ``x``) or
    ``table`` (explicit values theta(0), ..., theta(n-1)). Negative
    arguments evaluate to 0. Values on integers are cached.
    """

    def __init__(
        self,
        alpha: int = 1,
        *,
        expr: str | Expression | None = None,
        table: Sequence[float] | None = None,
        source: str | None = None,
        validate: bool = True,
    ):
        if int(alpha) != alpha or alpha < 1:
            raise ValueError(f"alpha must be a positive integer, got {alpha}")
        if expr is not None and table is not None:
            raise ValueError("give at most one of expr and table")
        self.alpha = int(alpha)
        self.source = source
        self._lock = threading.Lock()
        self._cache = np.zeros(0)
        self._logden = np.zeros(0)
        if expr is not None:
            self.kind = "expr"
            self.expr = expr if isinstance(expr, Expression) else Expression(expr)
            self.table = None
        elif table is not None:
            self.kind = "table"
            self.expr = None
            self.table = np.asarray(table, dtype=float).copy()
            self.table.setflags(write=False)
            if self.table.ndim != 1 or len(self.table) == 0:
                raise ValueError("table must be a nonempty 1-d sequence")
        else:
            self.kind = "falling"
            self.expr = None
            self.table = None
        if validate:
            zmax = default_probe_max(self.alpha)
            if self.domain_end is not None:
                zmax = min(zmax, self.domain_end - 1)
            problem = self.zero_pattern_problem(zmax)
            if problem:
                raise ValueError(problem)

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    @classmethod
    def falling(cls, alpha: int = 1) -> "ThetaFunction":
        return cls(alpha)

    @classmethod
    def expression(cls, text: str, alpha: int = 1, **kw) -> "ThetaFunction":
        return cls(alpha, expr=text, **kw)

    @classmethod
    def tabulated(cls, values: Sequence[float], alpha: int = 1, **kw) -> "ThetaFunction":
        return cls(alpha, table=values, **kw)

    @property
    def domain_end(self) -> int | None:
        """Exclusive upper end of the explicit domain (tables only)."""
        return len(self.table) if self.kind == "table" else None

    def __repr__(self):
        if self.kind == "expr":
            return f"ThetaFunction(alpha={self.alpha}, expr={self.expr.text!r})"
        if self.kind == "table":
            return f"ThetaFunction(alpha={self.alpha}, table[{len(self.table)}])"
        return f"ThetaFunction(alpha={self.alpha}, falling)"

    def __eq__(self, other):
        if not isinstance(other, ThetaFunction):
            return NotImplemented
        if (self.alpha, self.kind) != (other.alpha, other.kind):
            return False
        if self.kind == "expr":
            return self.expr == other.expr
        if self.kind == "table":
            return np.array_equal(self.table, other.table)
        return True

    __hash__ = None

    def _raw(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "falling":
            out = np.ones(z.shape)
            for j in range(self.alpha):
                out *= z - j
            return out
        if self.kind == "expr":
            return np.broadcast_to(self.expr(z), z.shape).astype(float)
        if len(z) and z.max() >= len(self.table):
            raise DomainExhausted(
                f"tabulated theta evaluated at z={int(z.max())} beyond its domain 0..{len(self.table) - 1}"
            )
        return self.table[z]

    def values(self, n: int) -> np.ndarray:
        """Cached array theta(0), ..., theta(n)."""
        cache = self._cache
        if len(cache) <= n:
            with self._lock:
                if len(self._cache) <= n:
                    size = max(n + 1, 2 * len(self._cache), 64)
                    if self.kind == "table":
                        size = min(size, len(self.table)) if n < len(self.table) else n + 1
                    self._cache = self._raw(np.arange(size))
                cache = self._cache
        return cache

    def __call__(self, z):
        """Evaluate at integer argument(s); negative arguments give 0."""
        z_arr = np.asarray(z, dtype=np.int64)
        if z_arr.ndim == 0:
            zi = int(z_arr)
            return 0.0 if zi < 0 else float(self.values(zi)[zi])
        out = np.zeros(z_arr.shape)
        ok = z_arr >= 0
        if ok.any():
            vals = self.values(int(z_arr[ok].max()))
            out[ok] = vals[z_arr[ok]]
        return out

    def log_denominator(self, z):
        """log prod_{j < floor(z/alpha)} theta(z - j alpha), vectorised.

        Returns -inf where some factor is <= 0 (state outside the support).
        """
        z_arr = np.asarray(z, dtype=np.int64)
        if np.any(z_arr < 0):
            raise ValueError("log_denominator needs nonnegative arguments")
        if self.kind == "falling":
            out = gammaln(z_arr + 1.0) - gammaln(z_arr % self.alpha + 1.0)
            return float(out) if out.ndim == 0 else out
        n = int(z_arr.max()) if z_arr.size else 0
        table = self._logden
        if len(table) <= n:
            table = self._build_logden(n)
        out = table[z_arr]
        return float(out) if np.ndim(out) == 0 else out

    def _build_logden(self, n: int) -> np.ndarray:
        size = max(n + 1, 2 * len(self._logden), 64)
        if self.kind == "table":
            size = n + 1 if n >= len(self.table) else min(size, len(self.table))
        vals = self.values(size - 1)[:size]
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(vals > 0, np.log(np.where(vals > 0, vals, 1.0)), -np.inf)
        a = self.alpha
        out = np.zeros(size)
        for r in range(a):
            out[r + a :: a] = _running_sum(logs[r + a :: a])
        with self._lock:
            if len(self._logden) < size:
                self._logden = out
            return self._logden

    def zero_pattern_problem(self, z_max: int) -> str | None:
        """None if theta(z) = 0 exactly for z < alpha and > 0 on alpha..z_max."""
        if self.kind == "table" and z_max >= len(self.table):
            return (
                f"domain exhausted: table defined on 0..{len(self.table) - 1} "
                f"but probe range is 0..{z_max}"
            )
        vals = self.values(z_max)[: z_max + 1]
        for z in range(min(self.alpha, z_max + 1)):
            if vals[z] != 0:
                return f"theta({z}) = {vals[z]!r} must be 0 for z < alpha={self.alpha}"
        bad = np.nonzero(~(vals[self.alpha :] > 0) | ~np.isfinite(vals[self.alpha :]))[0]
        if len(bad):
            z = int(bad[0]) + self.alpha
            return f"theta({z}) = {vals[z]!r} must be positive and finite for z >= alpha={self.alpha}"
        return None


def _running_sum(v: np.ndarray) -> np.ndarray:
    # Neumaier-compensated prefix sums; plain cumsum drifts by ~1e-10 in
    # log space over 1e4 terms
    out = np.empty(len(v))
    total = comp = 0.0
    for n, x in enumerate(v.tolist()):
        t = total + x
        if abs(total) >= abs(x):
            comp += (total - t) + x
        else:
            comp += (x - t) + total
        total = t
        out[n] = total + comp
    return out


@dataclass(frozen=True)
class SpeciesPartition:
    alphas: tuple[int, ...]

    @property
    def classes(self) -> tuple[str, ...]:
        """'S1' for alpha = 1, 'S2' for alpha > 1."""
        return tuple("S2" if a > 1 else "S1" for a in self.alphas)

    def as_dict(self, names: Sequence[str]) -> dict:
        return {n: {"alpha": a, "class": c} for n, a, c in zip(names, self.alphas, self.classes)}


def species_partition(net: ReactionNetwork) -> SpeciesPartition:
    """alpha_i = gcd of species i's source stoichiometries (1 if never a reactant)."""
    alphas = []
    for i in range(net.d):
        g = reduce(math.gcd, (int(v) for v in net.source_matrix[:, i]), 0)
        alphas.append(g if g > 0 else 1)
    return SpeciesPartition(tuple(alphas))


class PhiFunction:
    """Lazily memoised factor phi with prod_{l<step} phi(z - l) = theta(z).

    ``initial`` fixes phi(0), ..., phi(step - 1); larger arguments follow
    phi(z) = theta(z) / (phi(z-1) ... phi(z-step+1)). Products over previous
    values are recomputed for every z rather than carried as running
    products.
    """

    def __init__(self, theta: ThetaFunction, step: int, initial: Sequence[float], strict: bool = False):
        if len(initial) != step:
            raise ValueError("need exactly `step` initial values")
        self.theta = theta
        self.step = int(step)
        self.strict = strict
        self._values: list[float] = [float(v) for v in initial]
        self._lock = threading.Lock()

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    @property
    def constant(self) -> float | None:
        return self._values[1] if self.step > 1 else None

    def _extend(self, n: int) -> None:
        with self._lock:
            vals = self._values
            if len(vals) > n:
                return
            theta = self.theta.values(n)
            for z in range(len(vals), n + 1):
                den = 1.0
                for ell in range(1, self.step):
                    den *= vals[z - ell]
                if not (den > 0 and math.isfinite(den)):
                    raise ValueError(f"phi recursion hit a nonpositive denominator at z={z}")
                v = float(theta[z]) / den
                if self.strict and not (v > 0 and math.isfinite(v)):
                    raise ValueError(f"phi({z}) = {v!r} is not positive and finite")
                vals.append(v)

    def values(self, n: int) -> np.ndarray:
        if len(self._values) <= n:
            self._extend(n)
        return np.array(self._values[: n + 1])

    def __call__(self, z: int) -> float:
        z = int(z)
        if z < 0:
            return 0.0
        if len(self._values) <= z:
            self._extend(z)
        return self._values[z]

    def as_theta(self, n: int) -> ThetaFunction:
        """Tabulate phi(0..n) as a step-1 rate factor."""
        return ThetaFunction.tabulated(self.values(n), alpha=1, validate=False)


def build_phi(theta: ThetaFunction) -> PhiFunction:
    """phi(0)=0, phi=1 on 1..alpha-1, then the factorisation recursion."""
    a = theta.alpha
    return PhiFunction(theta, a, [0.0] + [1.0] * (a - 1))


def factor_theta_over_step(theta: ThetaFunction, m: int, C: float = 1.0) -> PhiFunction:
    """Factor theta over a step ``m`` that differs from theta's own alpha.

    phi(0)=0, phi(1)=C, phi=1 on 2..m-1 and the recursion from z=m on.
    For m=2 this is phi(z) = theta(z) / phi(z-1).
    """
    if m < 2:
        raise ValueError("step m must be at least 2")
    if not (C > 0 and math.isfinite(C)):
        raise ValueError("free constant C must be positive")
    return PhiFunction(theta, m, [0.0, float(C)] + [1.0] * (m - 2), strict=True)


@dataclass(frozen=True)
class AssumptionReport:
    ok: bool
    condition: str | None = None  # 'a', 'b' or 'c'
    message: str = "ok"
    failures: tuple[tuple[str, str], ...] = field(default=())


@dataclass(frozen=True, eq=False)
class KineticModel:
    """A reaction network with one rate factor per species."""

    network: ReactionNetwork
    thetas: tuple[ThetaFunction, ...]
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "thetas", tuple(self.thetas))
        if len(self.thetas) != self.network.d:
            raise ValueError(f"need {self.network.d} rate factors, got {len(self.thetas)}")
        if self.check:
            rep = validate_assumption(self)
            if not rep.ok:
                raise AssumptionError(rep)

    @classmethod
    def mass_action(cls, net: ReactionNetwork) -> "KineticModel":
        part = species_partition(net)
        return cls(net, tuple(ThetaFunction.falling(a) for a in part.alphas))

    @property
    def kappas(self) -> np.ndarray:
        return self.network.kappas

    @property
    def alphas(self) -> tuple[int, ...]:
        return tuple(t.alpha for t in self.thetas)

    def __eq__(self, other):
        if not isinstance(other, KineticModel):
            return NotImplemented
        return self.network == other.network and self.thetas == other.thetas

    __hash__ = None

    def propensities(self, states) -> np.ndarray:
        """Intensities of all reactions at each row of ``states`` -> (n, K)."""
        x = np.atleast_2d(np.asarray(states, dtype=np.int64))
        net = self.network
        out = np.tile(net.kappas, (x.shape[0], 1))
        src = net.source_matrix
        for k in range(net.K):
            for i in np.nonzero(src[k])[0]:
                theta = self.thetas[i]
                a = theta.alpha
                for j in range(int(src[k, i]) // a):
                    out[:, k] *= theta(x[:, i] - j * a)
        return out


def intensity(model: KineticModel, k: int, x) -> float:
    if not 0 <= k < model.network.K:
        raise IndexError(f"reaction index {k} out of range 0..{model.network.K - 1}")
    x = np.asarray(x, dtype=np.int64)
    if np.any(x < 0):
        raise ValueError("state must be componentwise nonnegative")
    nu = model.network.source_matrix[k]
    val = float(model.kappas[k])
    for i in np.nonzero(nu)[0]:
        theta = model.thetas[i]
        a = theta.alpha
        for j in range(int(nu[i]) // a):
            val *= theta(int(x[i]) - j * a)
    return val


def validate_assumption(model: KineticModel, z_max: int | None = None) -> AssumptionReport:
    """Check (a) alpha_i = gcd partition (so alpha_i divides every source
    stoichiometry), (b) theta zero pattern on 0..z_max, (c) kappa_k > 0."""
    net = model.network
    failures: list[tuple[str, str]] = []
    part = species_partition(net)
    for i, (theta, a) in enumerate(zip(model.thetas, part.alphas)):
        name = net.species[i].name
        if theta.alpha != a:
            failures.append(("a", f"species {name}: theta alpha={theta.alpha} but gcd partition gives alpha={a}"))
        for k, v in enumerate(net.source_matrix[:, i]):
            if v % theta.alpha:
                failures.append(("a", f"species {name}: alpha={theta.alpha} does not divide {v} in reaction {k}"))
                break
    for i, theta in enumerate(model.thetas):
        zmax = default_probe_max(theta.alpha) if z_max is None else z_max
        problem = theta.zero_pattern_problem(zmax)
        if problem:
            failures.append(("b", f"species {net.species[i].name}: {problem}"))
    for k, kappa in enumerate(model.kappas):
        if not (kappa > 0 and math.isfinite(kappa)):
            failures.append(("c", f"reaction {k}: kappa={kappa!r} must be positive"))
    if not failures:
        return AssumptionReport(True)
    cond, msg = failures[0]
    return AssumptionReport(False, cond, f"condition ({cond}) violated: {msg}", tuple(failures))


def log_phi_alternating(theta: ThetaFunction, C: float, z: int) -> float:
    """Closed form of log phi(z) for the step-2 factorisation with phi(1) = C:

        phi(z) = C^(2 (z mod 2) - 1) prod_{i < floor(z/2)} theta(z - 2i)
                 / prod_{i < floor((z-1)/2)} theta(z - 2i - 1)
    """
    z = int(z)
    if z < 1:
        raise ValueError("closed form holds for z >= 1")
    terms = [(2 * (z % 2) - 1) * math.log(C)]
    terms += [math.log(theta(z - 2 * i)) for i in range(z // 2)]
    terms += [-math.log(theta(z - 2 * i - 1)) for i in range((z - 1) // 2)]
    return math.fsum(terms)
