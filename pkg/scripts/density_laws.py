"""Follow a density under the infinite-population map and print the laws per step.

With a concentrated bump and eps > 1/2 the support shrinks by 2(1 - eps),
the supremum grows by 1/(2(1 - eps)) and the centre of mass doubles.
With a sine perturbation and moderate eps the total variation decays.

    python3 scripts/density_laws.py --init bump --epsilon 0.75 --steps 6
    python3 scripts/density_laws.py --init sine --epsilon 0.5 --steps 20
"""
import argparse
import math

from coupled_doubling import density as dens


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--init", choices=["bump", "sine", "wings"], default="bump")
    ap.add_argument("--epsilon", type=float, default=0.75)
    ap.add_argument("--steps", type=int, default=6)
    ap.add_argument("--grid-size", type=int, default=2**14)
    args = ap.parse_args()

    m = args.grid_size
    if args.init == "bump":
        f = dens.GridDensity.bump(0.3, 0.4, m)
    elif args.init == "sine":
        f = dens.GridDensity.sine(0.025, m)
    else:
        f = dens.GridDensity.wing_density(0.2, 0.9, 0.1, m)

    print("step,support_length,sup,tv,center_of_mass")
    for k in range(args.steps + 1):
        if k:
            f = dens.transfer_step(f, args.epsilon)
        length = f.support.length if f.support is not None else 1.0
        try:
            com = dens.center_of_mass(f)
        except dens.SupportTooWideError:
            com = math.nan
        print(f"{k},{length:.10g},{f.sup():.10g},{dens.total_variation(f):.6g},{com:.10g}")


if __name__ == "__main__":
    main()
