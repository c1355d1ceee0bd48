"""TV distance between the SSA occupation law and the product form for the
constrained dimer subsystem, as a function of the number of jumps.

    python scripts/ssa_convergence.py --s 300 --jumps 1000000 --seed 20240611
"""

import argparse
import math

import numpy as np

from crnstat.averaging import class_distribution, constrained_fast_subsystem
from crnstat.ctmc import empirical_distribution, simulate
from crnstat.models import DimerParams
from crnstat.stationary import total_variation


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--s", type=int, default=300)
    ap.add_argument("--jumps", type=int, default=1_000_000)
    ap.add_argument("--burn-in", type=int, default=100_000, help="jumps discarded at the start")
    ap.add_argument("--seed", type=int, default=20240611)
    ap.add_argument("--reverse", type=float, help="reverse rate (default k2 + k4)")
    args = ap.parse_args()

    p = DimerParams()
    model = constrained_fast_subsystem(p, args.reverse if args.reverse else p.k2 + p.k4)
    exact = class_distribution(model, (1, 2), args.s)
    checkpoints = np.unique(np.logspace(3, math.log10(args.jumps), 8).astype(int))
    print("method       jumps      TV")
    for method in ("direct", "nrm"):
        tr = simulate(model, (args.s, 0), math.inf, args.seed, method, max_jumps=args.burn_in + args.jumps)
        t0 = float(tr.times[args.burn_in])
        for n in checkpoints:
            stop = args.burn_in + int(n)
            part = type(tr)(tr.times[: stop + 1], tr.states[: stop + 1], tr.reactions[:stop],
                            float(tr.times[stop]), tr.seed)
            tv = total_variation(empirical_distribution(part, burn_in=t0), exact)
            print(f"{method:10s} {n:9d}  {tv:.4f}")


if __name__ == "__main__":
    main()
