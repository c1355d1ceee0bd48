"""Deterministic mass-action dynamics and complex-balanced equilibria."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import lstsq, null_space
from scipy.optimize import linprog

from .network import ReactionNetwork, conservation_basis, deficiency, linkage_classes

log = logging.getLogger(__name__)

_TINY = np.finfo(float).tiny


class EquilibriumError(RuntimeError):
    def __init__(self, message, c=None, residual=None):
        super().__init__(message)
        self.c = c
        self.residual = residual


class InfeasibleClass(EquilibriumError):
    pass


@dataclass(frozen=True)
class Equilibrium:
    c: np.ndarray
    residual: float
    class_anchor: tuple[tuple[tuple[float, ...], float], ...] = ()
    iterations: int = 0
    warnings: tuple[str, ...] = field(default=())

    def as_dict(self, names: Sequence[str] | None = None) -> dict:
        out = {
            "c": [float(v) for v in self.c],
            "residual": float(self.residual),
            "constraints": [{"w": list(w), "m": m} for w, m in self.class_anchor],
            "iterations": self.iterations,
            "warnings": list(self.warnings),
        }
        if names is not None:
            out["species"] = list(names)
        return out


def _kappas(net: ReactionNetwork, kappas) -> np.ndarray:
    return net.kappas if kappas is None else np.asarray(kappas, dtype=float)


def reaction_rates(net: ReactionNetwork, kappas, x) -> np.ndarray:
    """Deterministic mass-action rates kappa_k prod_i x_i^nu_ki."""
    x = np.asarray(x, dtype=float)
    return _kappas(net, kappas) * np.prod(x[None, :] ** net.source_matrix, axis=1)


def mass_action_rhs(net: ReactionNetwork, kappas, x) -> np.ndarray:
    return net.stoichiometric_matrix @ reaction_rates(net, kappas, x)


def complex_fluxes(net: ReactionNetwork, kappas, c) -> tuple[np.ndarray, np.ndarray]:
    """Per-complex (outflow, inflow) at concentrations c."""
    r = reaction_rates(net, kappas, c)
    src, dst = net._edges()
    n = len(net.complexes)
    return np.bincount(src, r, n), np.bincount(dst, r, n)


def complex_balance_residual(net: ReactionNetwork, kappas, c) -> np.ndarray:
    """|outflow - inflow| / max(outflow, inflow) at every complex."""
    out, inn = complex_fluxes(net, kappas, c)
    return np.abs(out - inn) / np.maximum(np.maximum(out, inn), _TINY)


def _kirchhoff_kernel(net: ReactionNetwork, kappas: np.ndarray) -> np.ndarray:
    """Positive kernel vector of the weighted complex Laplacian, one
    block per linkage class, returned in log form."""
    n = len(net.complexes)
    src, dst = net._edges()
    L = np.zeros((n, n))
    for s, t, k in zip(src, dst, kappas):
        L[t, s] += k
        L[s, s] -= k
    logpsi = np.zeros(n)
    for cls in linkage_classes(net):
        idx = [net.complex_index[c] for c in cls]
        sub = L[np.ix_(idx, idx)]
        # scale columns so the kernel is computed on a balanced matrix
        scale = np.maximum(np.abs(np.diag(sub)), _TINY)
        ker = null_space(sub / scale[None, :])
        if ker.shape[1] != 1:
            raise EquilibriumError("linkage class is not strongly connected; no positive complex-balanced kernel")
        v = ker[:, 0]
        v = v if v.sum() > 0 else -v
        if np.any(v <= 0):
            raise EquilibriumError("Laplacian kernel is not strictly positive")
        logpsi[idx] = np.log(v) - np.log(scale)
    return logpsi


def _constraint_arrays(constraints) -> tuple[np.ndarray, np.ndarray]:
    if not constraints:
        return np.zeros((0, 0)), np.zeros(0)
    W = np.array([np.asarray(w, dtype=float) for w, _ in constraints])
    m = np.array([float(v) for _, v in constraints])
    return W, m


def _check_feasible(W: np.ndarray, m: np.ndarray) -> None:
    """Raise if {c > 0 : W c = m} is empty (max-min LP)."""
    if W.size == 0:
        return
    d = W.shape[1]
    # maximise t subject to W c = m, c_i >= t, c_i <= scale
    scale = max(1.0, float(np.abs(m).max()))
    obj = np.zeros(d + 1)
    obj[-1] = -1.0
    A_eq = np.hstack([W, np.zeros((W.shape[0], 1))])
    A_ub = np.hstack([-np.eye(d), np.ones((d, 1))])
    res = linprog(obj, A_ub=A_ub, b_ub=np.zeros(d), A_eq=A_eq, b_eq=m,
                  bounds=[(None, None)] * d + [(None, scale)], method="highs")
    if res.status != 0 or -res.fun <= 1e-12 * scale:
        raise InfeasibleClass(f"no positive point satisfies the class constraints W c = {m.tolist()}")


def _constraint_scale(m: np.ndarray) -> np.ndarray:
    # relative residual per constraint; a law pinned at 0 (mixed-sign w)
    # borrows the scale of the others
    top = float(np.abs(m).max(initial=0.0))
    return np.maximum(np.abs(m), max(1e-3 * top, _TINY) if top > 0 else 1.0)


def _stacked_residual(net, kappas, u, W, m):
    with np.errstate(over="ignore", invalid="ignore"):
        return _stacked_residual_raw(net, kappas, u, W, m)


def _stacked_residual_raw(net, kappas, u, W, m):
    c = np.exp(u)
    out, inn = complex_fluxes(net, kappas, c)
    den = np.maximum(np.maximum(out, inn), _TINY)
    F = (out - inn) / den
    if W.size:
        F = np.concatenate([F, (W @ c - m) / _constraint_scale(m)])
    return F


def _stacked_jacobian(net, kappas, u, W, m):
    c = np.exp(u)
    r = reaction_rates(net, kappas, c)
    src, dst = net._edges()
    n = len(net.complexes)
    out, inn = complex_fluxes(net, kappas, c)
    den = np.maximum(np.maximum(out, inn), _TINY)
    # d r_k / d u_i = r_k nu_ki
    dr = r[:, None] * net.source_matrix
    J = np.zeros((n, net.d))
    np.add.at(J, src, dr)
    np.subtract.at(J, dst, dr)
    J /= den[:, None]
    if W.size:
        J = np.vstack([J, (W * c[None, :]) / _constraint_scale(m)[:, None]])
    return J


def _gauss_newton(net, kappas, u, W, m, tol, max_iter):
    F = _stacked_residual(net, kappas, u, W, m)
    f = 0.5 * F @ F
    it = 0
    if not np.all(np.isfinite(F)):
        return u, it, False
    for it in range(1, max_iter + 1):
        if np.abs(F).max() <= tol:
            return u, it - 1, True
        with np.errstate(over="ignore", invalid="ignore"):
            J = _stacked_jacobian(net, kappas, u, W, m)
        if not np.all(np.isfinite(J)):
            return u, it, False
        step = lstsq(J, -F, lapack_driver="gelsy")[0]
        t = 1.0
        while t > 1e-10:
            u_new = u + t * step
            F_new = _stacked_residual(net, kappas, u_new, W, m)
            f_new = 0.5 * F_new @ F_new
            if np.all(np.isfinite(F_new)) and f_new <= (1.0 - 1e-4 * t) * f:
                break
            t *= 0.5
        else:
            return u, it, False
        u, F, f = u_new, F_new, f_new
    return u, it, bool(np.abs(F).max() <= tol)


def _lyapunov_descent(net, kappas, u, W, m, max_iter):
    """Fallback: gradient descent on the constrained entropy-like Lyapunov
    function sum_i c_i (log(c_i / c*_i) - 1) with steps projected onto the
    stoichiometric subspace; ``u`` must already satisfy the constraints."""
    N = net.stoichiometric_matrix.astype(float)
    basis = np.linalg.qr(N)[0][:, : np.linalg.matrix_rank(N)] if N.size else np.zeros((net.d, 0))
    c = np.exp(u)
    for _ in range(max_iter):
        grad = -mass_action_rhs(net, kappas, c)  # descent direction of the flow
        g = basis @ (basis.T @ grad)
        if np.linalg.norm(g) <= 1e-14 * max(1.0, np.linalg.norm(c)):
            break
        t = 1.0
        while t > 1e-14:
            c_new = c - t * g
            if np.all(c_new > 0):
                break
            t *= 0.5
        else:
            break
        c = c_new
    return np.log(c)


def solve_complex_balanced(
    net: ReactionNetwork,
    kappas=None,
    constraints: Sequence[tuple[Sequence[float], float]] | None = None,
    *,
    tol: float = 1e-12,
    max_iter: int = 200,
    x0: Sequence[float] | None = None,
) -> Equilibrium:
    """Complex-balanced equilibrium in the class pinned by ``constraints``.

    ``constraints`` is a list of ``(w, m)`` pairs meaning ``w . c = m``; one
    per conservation law. The solution is found in log-concentration
    coordinates: a particular complex-balanced point comes from the kernel
    of the complex Laplacian, it is moved into the class by damped Newton on
    the convex dual of the constraints, and the result is polished by damped
    Gauss-Newton on the stacked system {complex balance, constraints}.
    An explicit start ``x0`` is tried first; the structured start and a flat
    start are the fallbacks.
    """
    kappas = _kappas(net, kappas)
    constraints = list(constraints or [])
    notes: list[str] = []
    rep = deficiency(net)
    if not (rep.weakly_reversible and rep.deficiency == 0):
        msg = (f"network has deficiency {rep.deficiency} and weakly_reversible={rep.weakly_reversible};"
               " a complex-balanced equilibrium need not exist")
        warnings.warn(msg)
        notes.append(msg)
    W, m = _constraint_arrays(constraints)
    n_cons = net.d - rep.stoich_dimension
    if len(constraints) != n_cons:
        raise ValueError(f"need {n_cons} constraints (one per conservation law), got {len(constraints)}")
    if W.size:
        basis = np.array(rep.conservation_basis, dtype=float)
        if np.linalg.matrix_rank(np.vstack([W, basis])) != n_cons or np.linalg.matrix_rank(W) != n_cons:
            raise ValueError("constraint vectors must span the conservation laws")
        _check_feasible(W, m)

    iterations = 0
    starts = []
    if x0 is not None:
        starts.append(np.log(np.asarray(x0, dtype=float)))
    try:
        u = _particular_solution(net, kappas)
        if W.size:
            u, it = _dual_newton(u, W, m, max_iter)
            iterations += it
        starts.append(u)
    except EquilibriumError as err:
        notes.append(f"structured start failed: {err}")
    starts.append(np.log(_initial_iterate(net.d, W, m)))
    ok = False
    for u in starts:
        u, it, ok = _gauss_newton(net, kappas, u, W, m, tol, max_iter)
        iterations += it
        if not ok:
            notes.append("Gauss-Newton stalled; trying Lyapunov descent")
            u = _lyapunov_descent(net, kappas, u, W, m, 20 * max_iter)
            u, it, ok = _gauss_newton(net, kappas, u, W, m, tol, max_iter)
            iterations += it
        if ok:
            break
    c = np.exp(u)
    res = float(np.abs(_stacked_residual(net, kappas, u, W, m)).max())
    if not ok:
        raise EquilibriumError(f"no convergence after {iterations} iterations (residual {res:.3e})", c, res)
    anchor = tuple((tuple(float(v) for v in w), float(v)) for w, v in constraints)
    return Equilibrium(c, float(complex_balance_residual(net, kappas, c).max(initial=0.0)),
                       anchor, iterations, tuple(notes))


def _initial_iterate(d: int, W: np.ndarray, m: np.ndarray) -> np.ndarray:
    if not W.size:
        return np.ones(d)
    # all-ones scaled to the size of the constraint values
    scale = np.mean(np.abs(m) / np.maximum(np.abs(W).sum(axis=1), _TINY))
    return np.full(d, max(scale, 1e-8))


def _particular_solution(net: ReactionNetwork, kappas: np.ndarray) -> np.ndarray:
    """log c with c^y proportional to the Laplacian kernel on each linkage class."""
    logpsi = _kirchhoff_kernel(net, kappas)
    classes = linkage_classes(net)
    Y = net.complex_matrix.astype(float)
    E = np.zeros((len(net.complexes), len(classes)))
    for j, cls in enumerate(classes):
        for c in cls:
            E[net.complex_index[c], j] = 1.0
    A = np.hstack([Y, -E])
    sol, *_ = lstsq(A, logpsi)
    resid = A @ sol - logpsi
    if np.abs(resid).max() > 1e-8 * max(1.0, np.abs(logpsi).max()):
        raise EquilibriumError("Laplacian kernel is not a monomial image; no complex-balanced point")
    return sol[: net.d]


def _dual_newton(u0: np.ndarray, W: np.ndarray, m: np.ndarray, max_iter: int) -> tuple[np.ndarray, int]:
    """Move u0 along span(W^T) until W exp(u) = m.

    Minimises g(y) = sum_i exp(u0_i + (W^T y)_i) - m . y, strictly convex
    with gradient W c - m, by Newton with Armijo backtracking.
    """
    y = np.zeros(W.shape[0])

    def g(y):
        return np.exp(u0 + W.T @ y).sum() - m @ y

    val = g(y)
    for it in range(1, 10 * max_iter + 1):
        c = np.exp(u0 + W.T @ y)
        grad = W @ c - m
        if np.abs(grad).max() <= 1e-15 * np.abs(m).max():
            return u0 + W.T @ y, it
        H = (W * c[None, :]) @ W.T
        step = -np.linalg.solve(H, grad)
        t = 1.0
        while True:
            y_new = y + t * step
            v_new = g(y_new)
            if np.isfinite(v_new) and v_new <= val + 1e-4 * t * (grad @ step):
                break
            t *= 0.5
            if t < 1e-14:
                return u0 + W.T @ y, it
        if np.abs(y_new - y).max() <= 1e-15 * max(1.0, np.abs(y).max()):
            y = y_new
            break
        y, val = y_new, v_new
    return u0 + W.T @ y, it


def class_constraints(net: ReactionNetwork, x) -> list[tuple[tuple[int, ...], float]]:
    """Constraints w . c = w . x for each conservation law, for the class of x."""
    x = np.asarray(x, dtype=float)
    return [(w, float(np.dot(w, x))) for w in conservation_basis(net)]
