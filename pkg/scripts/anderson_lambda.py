"""Lyapunov exponent of the 1-D Anderson model against energy, written as CSV to stdout."""
import argparse
import sys

from lyaplab.anderson import PotentialSpec, energy_grid, lyap_vs_energy


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--potential", default="bernoulli(1)")
    ap.add_argument("--emin", type=float, default=-2.5)
    ap.add_argument("--emax", type=float, default=2.5)
    ap.add_argument("--count", type=int, default=11)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--trials", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    spec = PotentialSpec.parse(args.potential)
    rows = lyap_vs_energy(spec, energy_grid(args.emin, args.emax, args.count), args.n, args.trials, args.seed)
    sys.stdout.write("E,lambda,stderr\n")
    for e, lam, se in rows:
        sys.stdout.write(f"{e!r},{lam!r},{se!r}\n")


if __name__ == "__main__":
    main()
