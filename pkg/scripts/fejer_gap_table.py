"""Print the o-convergence gap on cos(2πx) of Fejér-regularized AtomicShift graphops against the closed form."""

import argparse

import numpy as np

from graphop_mf import AtomicShift, fejer, o_convergence_gap, regularize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--shift", type=float, default=0.125)
    ap.add_argument("--n", type=int, nargs="+", default=[4, 9, 19, 49])
    args = ap.parse_args()
    A = AtomicShift(args.shift)
    print(f"{'n':>4} {'gap':>12} {'closed form':>12}")
    for n in args.n:
        gap = o_convergence_gap(A, regularize(A, fejer(n)), [lambda x: np.cos(2 * np.pi * x)])
        exact = (1 - (n / (n + 1)) ** 2) * abs(np.cos(2 * np.pi * args.shift))
        print(f"{n:4d} {gap:12.8f} {exact:12.8f}")


if __name__ == "__main__":
    main()
