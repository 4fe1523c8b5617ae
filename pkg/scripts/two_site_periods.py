"""Compare the renormalization depth K(eps) with the period of the binned v-orbit.

For each eps the difference coordinate v = x - y of a two-site orbit is
binned; the largest p whose residue classes t mod p occupy disjoint bins is
the observed number of cyclically permuted components.

    python3 scripts/two_site_periods.py --grid 0.30,1/3,0.38,0.40,0.43,0.45,0.47
"""
import argparse
import csv
import sys

from coupled_doubling.ensemble import cyclic_period, simulate_orbit
from coupled_doubling.finite import CouplingParams, MarkovBoundaryError, renormalization_depth


def parse_eps(s):
    num, _, den = s.partition("/")
    return float(num) / float(den) if den else float(num)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--grid", default="0.25,0.30,1/3,0.36,0.40,0.43,0.45,0.47,0.48")
    ap.add_argument("--steps", type=int, default=100_000)
    ap.add_argument("--burn-in", type=int, default=1_000)
    ap.add_argument("--bins", type=int, default=1024)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["epsilon", "slope", "n", "K", "observed_period"])
    for eps in map(parse_eps, args.grid.split(",")):
        try:
            n, k = renormalization_depth(eps)
        except MarkovBoundaryError:
            n = k = None
        rec = simulate_orbit(None, CouplingParams(eps, 2), args.steps, ["v"],
                             burn_in=args.burn_in, seed=args.seed)
        period = cyclic_period(rec.observables["v"], max_period=32, bin_count=args.bins)
        w.writerow([f"{eps:.6g}", f"{2 * (1 - eps):.6g}", n, k, period])


if __name__ == "__main__":
    main()
