"""Network text format and CSV/JSON emitters.

::

    # comments start with '#'
    species S1 S2
    theta S1 alpha=2 expr="x*(x-1) + 1500*ind(x>1)"
    theta S2 table=theta_s2.csv
    reaction 2 S1 -> S2 kappa=1
    reaction S2 -> 2 S1 kappa=100
    reaction 0 -> S2 kappa=1500

Species without a ``theta`` line get the falling factorial of length
alpha_i, which recovers mass action. A table file lists theta(0), theta(1),
... one per line, optionally as ``z,value`` pairs.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .expr import ExpressionError
from .kinetics import KineticModel, ThetaFunction, species_partition, validate_assumption
from .network import Reaction, ReactionNetwork, Species, parse_complex
from .stationary import DistributionVector, StateClass


class NetworkFileError(ValueError):
    def __init__(self, line: int, column: int, message: str, path: str | None = None):
        where = f"{path}:" if path else ""
        super().__init__(f"{where}{line}:{column}: {message}")
        self.line = line
        self.column = column
        self.message = message


def fmt(v: float) -> str:
    return format(float(v), ".17g")


_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")
_OPTION = re.compile(r'(\w+)=(?:"([^"]*)"|(\S+))')


@dataclass
class _ThetaDecl:
    line: int
    column: int
    alpha: int | None
    alpha_col: int
    opts: dict


def _options(text: str, offset: int, lineno: int, allowed: set[str]) -> dict[str, tuple[str, int]]:
    out = {}
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _OPTION.match(text, pos)
        if not m:
            raise NetworkFileError(lineno, offset + pos + 1, f"expected key=value, found {text[pos:].split()[0]!r}")
        key = m.group(1)
        if key not in allowed:
            raise NetworkFileError(lineno, offset + pos + 1, f"unknown option {key!r}")
        if key in out:
            raise NetworkFileError(lineno, offset + pos + 1, f"option {key!r} given twice")
        val = m.group(2) if m.group(2) is not None else m.group(3)
        out[key] = (val, offset + m.start(2 if m.group(2) is not None else 3) + 1)
        pos = m.end()
    return out


def read_table(path: Path) -> list[float]:
    values = []
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = [f for f in re.split(r"[,\s]+", line) if f]
        if len(fields) == 2:
            if fields[0].lower() in ("z", "x"):
                continue
            z = int(fields[0])
            if z != len(values):
                raise ValueError(f"{path}:{lineno}: table arguments must run 0, 1, 2, ... (got {z})")
            values.append(float(fields[1]))
        elif len(fields) == 1:
            values.append(float(fields[0]))
        else:
            raise ValueError(f"{path}:{lineno}: expected 'value' or 'z,value'")
    if not values:
        raise ValueError(f"{path}: empty table")
    return values


def parse_network(text: str, base_dir: str | Path = ".", path: str | None = None) -> KineticModel:
    """Parse the network text format into a validated :class:`KineticModel`."""
    base_dir = Path(base_dir)
    names: list[str] | None = None
    species_line = 0
    decls: dict[str, _ThetaDecl] = {}
    reactions: list[tuple[Reaction, int]] = []

    def err(line, col, msg):
        return NetworkFileError(line, col, msg, path)

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        body = line.strip()
        word, _, rest = body.partition(" ")
        rest_col = indent + len(word) + 2
        if word == "species":
            if names is not None:
                raise err(lineno, indent + 1, "species declared twice")
            names = []
            col = rest_col
            for tok in re.finditer(r"\S+", rest):
                name = tok.group(0)
                if not _NAME.match(name) or name in ("x", "pi", "ind"):
                    raise err(lineno, col + tok.start(), f"invalid species name {name!r}")
                if name in names:
                    raise err(lineno, col + tok.start(), f"duplicate species {name!r}")
                names.append(name)
            if not names:
                raise err(lineno, indent + 1, "species directive lists no species")
            species_line = lineno
        elif word == "theta":
            if names is None:
                raise err(lineno, indent + 1, "theta before species directive")
            m = re.match(r"\s*(\S+)", rest)
            if not m:
                raise err(lineno, rest_col, "theta needs a species name")
            name = m.group(1)
            if name not in names:
                raise err(lineno, rest_col + m.start(1), f"unknown species {name!r}")
            if name in decls:
                raise err(lineno, rest_col + m.start(1), f"theta for {name!r} given twice")
            opts = _options(rest[m.end():], rest_col + m.end() - 1, lineno, {"alpha", "expr", "table"})
            alpha, alpha_col = None, 0
            if "alpha" in opts:
                val, alpha_col = opts["alpha"]
                try:
                    alpha = int(val)
                except ValueError:
                    raise err(lineno, alpha_col, f"alpha must be an integer, got {val!r}") from None
                if alpha < 1:
                    raise err(lineno, alpha_col, "alpha must be positive")
            if "expr" in opts and "table" in opts:
                raise err(lineno, opts["table"][1], "give expr or table, not both")
            decls[name] = _ThetaDecl(lineno, indent + 1, alpha, alpha_col, opts)
        elif word == "reaction":
            if names is None:
                raise err(lineno, indent + 1, "reaction before species directive")
            m = re.match(r"(.*?)->(.*?)(?:\s+kappa=(\S+))?\s*$", rest)
            if not m or "->" in m.group(2):
                raise err(lineno, rest_col, "expected '<complex> -> <complex> kappa=<real>'")
            if m.group(3) is None:
                raise err(lineno, indent + len(body) + 1, "missing kappa=<real>")
            try:
                src = parse_complex(m.group(1), names)
            except ValueError as e:
                raise err(lineno, rest_col, str(e)) from None
            try:
                dst = parse_complex(m.group(2), names)
            except ValueError as e:
                raise err(lineno, rest_col + m.start(2), str(e)) from None
            kcol = rest_col + m.start(3)
            try:
                kappa = float(m.group(3))
            except ValueError:
                raise err(lineno, kcol, f"kappa must be a real number, got {m.group(3)!r}") from None
            if not (kappa > 0 and math.isfinite(kappa)):
                raise err(lineno, kcol, f"kappa must be positive, got {m.group(3)}")
            if src == dst:
                raise err(lineno, rest_col, "source and product complexes are identical")
            reactions.append((Reaction(src, dst, kappa), lineno))
        else:
            raise err(lineno, indent + 1, f"unknown directive {word!r}")

    if names is None:
        raise err(1, 1, "missing species directive")
    if not reactions:
        raise err(species_line, 1, "network has no reactions")
    net = ReactionNetwork(tuple(Species(i, n) for i, n in enumerate(names)), tuple(r for r, _ in reactions))
    part = species_partition(net)
    thetas = []
    for i, name in enumerate(names):
        a = part.alphas[i]
        decl = decls.get(name)
        if decl is None:
            thetas.append(ThetaFunction.falling(a))
            continue
        if decl.alpha is not None and decl.alpha != a:
            raise err(decl.line, decl.alpha_col, f"alpha={decl.alpha} for {name} but the gcd partition gives {a}")
        opts = decl.opts
        try:
            if "expr" in opts:
                theta = ThetaFunction.expression(opts["expr"][0], alpha=a, validate=False)
            elif "table" in opts:
                tpath = opts["table"][0]
                try:
                    values = read_table(base_dir / tpath)
                except (OSError, ValueError) as e:
                    raise err(decl.line, opts["table"][1], f"cannot read table: {e}") from None
                theta = ThetaFunction.tabulated(values, alpha=a, source=tpath, validate=False)
            else:
                theta = ThetaFunction.falling(a)
        except ExpressionError as e:
            raise err(decl.line, opts["expr"][1] + e.column - 1, e.message) from None
        thetas.append(theta)
    model = KineticModel(net, tuple(thetas), check=False)
    rep = validate_assumption(model)
    if not rep.ok:
        line, col = species_line, 1
        if rep.condition == "b":
            bad = next(n for n in names if rep.failures[0][1].startswith(f"species {n}:"))
            if bad in decls:
                line, col = decls[bad].line, decls[bad].column
        raise err(line, col, rep.message)
    return model


def load_network(path: str | Path) -> KineticModel:
    path = Path(path)
    return parse_network(path.read_text(), path.parent, str(path))


def format_network(model: KineticModel) -> str:
    net = model.network
    names = net.names
    lines = ["species " + " ".join(names)]
    part = species_partition(net)
    for name, theta, a in zip(names, model.thetas, part.alphas):
        if theta.kind == "falling" and theta.alpha == a:
            continue
        if theta.kind == "expr":
            lines.append(f'theta {name} alpha={theta.alpha} expr="{theta.expr.text}"')
        elif theta.kind == "table":
            if theta.source is None:
                raise ValueError(f"tabulated theta for {name} has no source path to write")
            lines.append(f"theta {name} alpha={theta.alpha} table={theta.source}")
        else:
            lines.append(f"theta {name} alpha={theta.alpha}")
    for r in net.reactions:
        lines.append(f"reaction {r.source.format(names)} -> {r.product.format(names)} kappa={fmt(r.kappa)}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------- CSV


def distribution_csv(dist: DistributionVector, names: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x_{n}" for n in names] + ["prob", "log_unnorm"])
    logs = dist.log_unnorm if dist.log_unnorm is not None else np.log(np.where(dist.probs > 0, dist.probs, np.nan))
    for s, p, lv in zip(dist.states, dist.probs, logs):
        w.writerow([int(v) for v in s] + [fmt(p), fmt(lv) if np.isfinite(lv) else "-inf"])
    return buf.getvalue()


def marginal_csv(marg: dict, label: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = list(marg)
    if keys and isinstance(keys[0], tuple):
        labels = label.split(",")
        w.writerow([f"x_{lab}" for lab in labels] + ["prob"])
        for k in sorted(marg):
            w.writerow(list(k) + [fmt(marg[k])])
    else:
        w.writerow([f"x_{label}", "prob"])
        for k in sorted(marg):
            w.writerow([k, fmt(marg[k])])
    return buf.getvalue()


def trajectory_csv(traj, names: Sequence[str]) -> str:
    """Rows are (t, state after the jump, reaction index). The first row is
    the initial state and the last row marks the end of observation; both
    carry reaction index -1."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"x_{n}" for n in names] + ["reaction_index"])
    w.writerow([fmt(traj.times[0])] + [int(v) for v in traj.states[0]] + [-1])
    for t, s, k in zip(traj.times[1:], traj.states[1:], traj.reactions):
        w.writerow([fmt(t)] + [int(v) for v in s] + [int(k)])
    w.writerow([fmt(traj.t_end)] + [int(v) for v in traj.states[-1]] + [-1])
    return buf.getvalue()


def curves_csv(x_label: str, x: Iterable[int], columns: dict[str, Sequence[float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x_{x_label}"] + list(columns))
    cols = list(columns.values())
    for i, v in enumerate(x):
        w.writerow([int(v)] + [fmt(c[i]) for c in cols])
    return buf.getvalue()


def load_distribution(spec: str | Path, burn_in: float | None = None) -> dict[tuple[int, ...], float]:
    """Read any emitted CSV as a mapping state -> probability.

    ``path:column`` selects a probability column (default ``prob``).
    Trajectory files (with a ``t`` column) are reduced to occupation-time
    distributions.
    """
    spec = str(spec)
    column = "prob"
    path = Path(spec)
    if not path.exists() and ":" in spec:
        head, _, col = spec.rpartition(":")
        path, column = Path(head), col
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    xcols = [i for i, h in enumerate(header) if h.startswith("x_")]
    if not xcols:
        raise ValueError(f"{path}: no x_ columns")
    if "t" in header and column == "prob" and "prob" not in header:
        from .ctmc import Trajectory, empirical_distribution

        ti = header.index("t")
        ki = header.index("reaction_index")
        body = rows[1:]
        times = np.array([float(r[ti]) for r in body[:-1]])
        states = np.array([[int(r[i]) for i in xcols] for r in body[:-1]], dtype=np.int64)
        traj = Trajectory(times, states, np.array([int(r[ki]) for r in body[1:-1]]), float(body[-1][ti]), 0)
        return empirical_distribution(traj, burn_in if burn_in is not None else 0.0).as_mapping()
    if column not in header:
        raise ValueError(f"{path}: no column {column!r}")
    pi = header.index(column)
    out = {}
    for r in rows[1:]:
        out[tuple(int(r[i]) for i in xcols)] = float(r[pi])
    return out


def dist_from_mapping(mapping: dict) -> DistributionVector:
    keys = sorted(mapping)
    cls = StateClass(np.array(keys, dtype=np.int64))
    probs = np.array([mapping[k] for k in keys])
    return DistributionVector(cls, probs / probs.sum())
