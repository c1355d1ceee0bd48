"""Command-line entry point: ``crnstat <command> ...``.

Exit status: 0 success, 2 parse/validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import averaging, ctmc, netfile
from .ctmc import NumericalFailure, build_generator, empirical_distribution, simulate_ensemble, stationary_nullspace
from .equilibrium import EquilibriumError, solve_complex_balanced
from .kinetics import AssumptionError, log_phi_alternating, species_partition
from .models import DimerParams, Example4Params, example4_model, example4_phi
from .network import conservation_basis, deficiency
from .stationary import (
    Box,
    ConservationClass,
    OutOfSupport,
    ProductFormMeasure,
    Reachability,
    UnboundedClass,
    enumerate_class,
    marginal,
    normalize,
)

EXIT_INPUT = 2
EXIT_NUMERIC = 3


class UsageError(ValueError):
    pass


_LIN_TERM = re.compile(r"^\s*(?:([-+]?\d*\.?\d+(?:[eE][-+]?\d+)?)\s*\*?\s*)?([A-Za-z_][A-Za-z0-9_]*)\s*$")


def parse_linear(text: str, names: Sequence[str]) -> np.ndarray:
    """``"S1 + 2*S2"`` -> weight vector over species."""
    w = np.zeros(len(names))
    for term in re.split(r"\+", text.replace("-", "+-")):
        if not term.strip():
            continue
        m = _LIN_TERM.match(term)
        if not m or m.group(2) not in names:
            raise UsageError(f"cannot parse linear term {term.strip()!r}")
        coef = m.group(1)
        if coef in (None, "", "+"):
            coef = 1.0
        elif coef == "-":
            coef = -1.0
        w[names.index(m.group(2))] += float(coef)
    return w


def parse_class(text: str, names: Sequence[str]) -> tuple[np.ndarray, float]:
    if "=" not in text:
        raise UsageError(f"class constraint {text!r} must look like 'S1+2*S2=300'")
    lhs, rhs = text.split("=", 1)
    try:
        return parse_linear(lhs, names), float(rhs)
    except ValueError as e:
        raise UsageError(f"bad class constraint {text!r}: {e}") from None


def parse_box(text: str, d: int) -> Box:
    text = text.strip()
    if ".." not in text:
        parts = text.split("x")
        lower, upper = [0] * len(parts), [int(p) for p in parts]
    else:
        lower, upper = [], []
        for part in text.split(","):
            lo, _, hi = part.partition("..")
            lower.append(int(lo))
            upper.append(int(hi))
    if len(upper) != d:
        raise UsageError(f"box {text!r} has {len(upper)} axes, network has {d} species")
    return Box(tuple(lower), tuple(upper))


def parse_state(text: str, d: int) -> tuple[int, ...]:
    vals = tuple(int(v) for v in text.split(","))
    if len(vals) != d:
        raise UsageError(f"state {text!r} needs {d} entries")
    return vals


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _reference_c(model) -> np.ndarray:
    """Any complex-balanced point: class-conditional laws do not depend on it."""
    basis = conservation_basis(model.network)
    return solve_complex_balanced(model.network, None, [(w, 1.0) for w in basis]).c


def _state_class(args, model):
    names = model.network.names
    if args.class_ and args.box:
        raise UsageError("give --class or --box, not both")
    if args.class_:
        w, m = parse_class(args.class_, names)
        if np.any(w != np.round(w)) or m != round(m):
            raise UsageError("class weights and value must be integers")
        return enumerate_class(ConservationClass(tuple(int(v) for v in w), int(m)))
    if args.box:
        box = parse_box(args.box, model.network.d)
        if getattr(args, "seed_state", None):
            return enumerate_class(Reachability(parse_state(args.seed_state, model.network.d), box, model.network))
        return enumerate_class(box)
    raise UsageError("need --class or --box")


def _marginal_out(dist, spec: str, names: Sequence[str]) -> str:
    if "+" in spec or "*" in spec:
        w = parse_linear(spec, names)
        if np.any(w != np.round(w)):
            raise UsageError("marginal functional needs integer weights")
        return netfile.marginal_csv(marginal(dist, ("linear", w.astype(np.int64))), spec.replace(" ", ""))
    idx = []
    for n in spec.split(","):
        if n.strip() not in names:
            raise UsageError(f"unknown species {n.strip()!r} in --marginal")
        idx.append(names.index(n.strip()))
    return netfile.marginal_csv(marginal(dist, idx), ",".join(names[i] for i in idx))


# ------------------------------------------------------------------ commands


def cmd_analyze(args) -> int:
    model = netfile.load_network(args.file)
    net = model.network
    rep = deficiency(net)
    out = rep.as_dict()
    out["species"] = net.names
    out["partition"] = species_partition(net).as_dict(net.names)
    out["theta"] = {n: repr(t) for n, t in zip(net.names, model.thetas)}
    _emit(_json(out), args.out)
    return 0


def cmd_equilibrium(args) -> int:
    model = netfile.load_network(args.file)
    names = model.network.names
    constraints = [parse_class(c, names) for c in args.class_ or []]
    eq = solve_complex_balanced(model.network, None, [(tuple(w), m) for w, m in constraints])
    _emit(_json(eq.as_dict(names)), args.out)
    return 0


def cmd_stationary(args) -> int:
    model = netfile.load_network(args.file)
    cls = _state_class(args, model)
    dist = normalize(ProductFormMeasure.from_model(model, _reference_c(model)), cls)
    names = model.network.names
    text = _marginal_out(dist, args.marginal, names) if args.marginal else netfile.distribution_csv(dist, names)
    _emit(text, args.out)
    if dist.tail_mass is not None:
        print(_json({"tail_mass": dist.tail_mass, "states": len(cls)}), file=sys.stderr, end="")
    return 0


def cmd_cme(args) -> int:
    model = netfile.load_network(args.file)
    cls = _state_class(args, model)
    dist = stationary_nullspace(build_generator(model, cls), args.solver)
    names = model.network.names
    text = _marginal_out(dist, args.marginal, names) if args.marginal else netfile.distribution_csv(dist, names)
    _emit(text, args.out)
    report = {"residual": dist.residual, "tail_mass": dist.tail_mass, "states": len(cls)}
    if args.report:
        Path(args.report).write_text(_json(report))
    else:
        print(_json(report), file=sys.stderr, end="")
    return 0


def cmd_simulate(args) -> int:
    model = netfile.load_network(args.file)
    names = model.network.names
    x0 = parse_state(args.x0, model.network.d)
    trajs = simulate_ensemble(model, x0, args.tmax, args.seed, args.ensemble, args.method,
                              max_jumps=args.max_jumps, workers=args.workers)
    if args.ensemble == 1 and not args.empirical:
        _emit(netfile.trajectory_csv(trajs[0], names), args.out)
    else:
        dist = empirical_distribution(trajs if len(trajs) > 1 else trajs[0], args.burn_in)
        _emit(netfile.distribution_csv(dist, names), args.out)
    return 0


def cmd_compare(args) -> int:
    a = netfile.load_distribution(args.a)
    b = netfile.load_distribution(args.b)
    if args.reference == "a":
        a, b = b, a
        ref = args.a
    else:
        ref = args.b
    fn = averaging.rel_l2 if args.metric == "rel-l2" else averaging.tv
    report = averaging.comparison_report(args.metric, fn(a, b), str(ref), None, None)
    _emit(_json(report), args.out)
    return 0


def cmd_paper_example1(args) -> int:
    p = DimerParams(*args.params) if args.params else DimerParams()
    box = tuple(int(v) for v in args.box.split("x"))
    res = averaging.dimer_comparison(p, args.s, box, args.solver)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "example1_curves.csv").write_text(
        netfile.curves_csv("S2", res.x2, {"constrained": res.constrained, "qea": res.qea, "full": res.full})
    )
    summary = {
        "metrics": res.metrics,
        "full_mode": list(res.full_mode),
        "tail_mass": res.tail_mass,
        "residual": res.residual,
    }
    (out_dir / "example1_metrics.json").write_text(_json(summary))
    _emit(_json(summary), None)
    if res.tail_mass is not None and res.tail_mass > 1e-8:
        print(f"warning: boundary tail mass {res.tail_mass:.3e}", file=sys.stderr)
    return 0


def cmd_paper_example4(args) -> int:
    p = Example4Params(C=args.C)
    box = Box.from_upper(tuple(int(v) for v in args.box.split("x")))
    bound = max(box.upper) + 2
    model = example4_model(p, bound)
    seed = (0, 0) if args.parity == "even" else (1, 0)
    cls = enumerate_class(Reachability(seed, box, model.network))
    eq = solve_complex_balanced(model.network)
    dist = normalize(ProductFormMeasure.from_model(model, eq.c), cls)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "example4_distribution.csv").write_text(netfile.distribution_csv(dist, model.network.names))
    phi = example4_phi(p)
    theta = phi.theta
    zs = np.arange(1, args.phi_max + 1)
    vals = phi.values(args.phi_max)[1:]
    closed = [float(np.exp(log_phi_alternating(theta, p.C, z))) for z in zs]
    (out_dir / "example4_phi.csv").write_text(netfile.curves_csv("z", zs, {"phi": vals, "phi_closed_form": closed}))
    summary = {"c": eq.c.tolist(), "states": len(cls), "log_norm": dist.log_norm, "tail_mass": dist.tail_mass,
               "parity": args.parity, "params": p.as_dict()}
    (out_dir / "example4_summary.json").write_text(_json(summary))
    _emit(_json(summary), None)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crnstat", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        p = sub.add_parser(name, help=help)
        p.set_defaults(fn=fn)
        return p

    p = add("analyze", cmd_analyze, "structure report and species partition (JSON)")
    p.add_argument("file")
    p.add_argument("--out")

    p = add("equilibrium", cmd_equilibrium, "complex-balanced equilibrium (JSON)")
    p.add_argument("file")
    p.add_argument("--class", dest="class_", action="append", metavar="W.C=M")
    p.add_argument("--out")

    for name, fn, help in (("stationary", cmd_stationary, "product-form distribution (CSV)"),
                           ("cme", cmd_cme, "truncated-generator null-space distribution (CSV)")):
        p = add(name, fn, help)
        p.add_argument("file")
        p.add_argument("--class", dest="class_", metavar="W.X=M")
        p.add_argument("--box", help="'600x300' or '0..600,0..300'")
        p.add_argument("--seed-state", help="restrict the box to states reachable from this state")
        p.add_argument("--marginal", help="species list 'S2' / 'S1,S2' or functional 'S1+2*S2'")
        p.add_argument("--out")
        if name == "cme":
            p.add_argument("--solver", choices=["auto", "direct", "iterative"], default="auto")
            p.add_argument("--report", help="write residual JSON here instead of stderr")

    p = add("simulate", cmd_simulate, "stochastic simulation (trajectory or empirical CSV)")
    p.add_argument("file")
    p.add_argument("--x0", required=True)
    p.add_argument("--tmax", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--method", choices=["direct", "nrm"], default="direct")
    p.add_argument("--ensemble", type=int, default=1)
    p.add_argument("--max-jumps", type=int)
    p.add_argument("--empirical", action="store_true", help="emit the occupation distribution")
    p.add_argument("--burn-in", type=float, help="default: 10%% of tmax")
    p.add_argument("--workers", type=int, help="default: $CRNSTAT_THREADS or 1")
    p.add_argument("--out")

    p = add("compare", cmd_compare, "distance between two distribution CSVs (JSON)")
    p.add_argument("a", help="CSV path, optionally path:column")
    p.add_argument("b")
    p.add_argument("--metric", choices=["rel-l2", "tv"], default="tv")
    p.add_argument("--reference", choices=["a", "b"], default="b")
    p.add_argument("--out")

    paper = sub.add_parser("paper", help="reproduce the worked examples as data")
    psub = paper.add_subparsers(dest="example", required=True)
    p = psub.add_parser("example1", help="dimer reductions vs full model")
    p.set_defaults(fn=cmd_paper_example1)
    p.add_argument("--s", type=int, default=300)
    p.add_argument("--box", default="1000x500")
    p.add_argument("--params", type=float, nargs=4, metavar=("K1", "K2", "K3", "K4"))
    p.add_argument("--solver", choices=["auto", "direct", "iterative"], default="auto")
    p.add_argument("--out-dir", default=".")
    p = psub.add_parser("example4", help="parity-class distribution and phi profile")
    p.set_defaults(fn=cmd_paper_example4)
    p.add_argument("--parity", choices=["even", "odd"], default="even")
    p.add_argument("--box", default="1000x1000")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--phi-max", type=int, default=100)
    p.add_argument("--out-dir", default=".")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (netfile.NetworkFileError, AssumptionError, UsageError, UnboundedClass, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (EquilibriumError, NumericalFailure, OutOfSupport, ctmc.Absorbed) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
