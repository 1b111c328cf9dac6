#!/usr/bin/env python3
"""Run the almost-maximization pipeline on one corpus function and print its Frechet modulus."""
import argparse

from udset import RunConfig, build, corpus_function, uds_pipeline
from udset.analysis import CORPUS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("function", nargs="?", default="l1", choices=CORPUS)
    ap.add_argument("--pool", type=int, default=12)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    con = build(RunConfig())
    rep = uds_pipeline(corpus_function(args.function), con, 0.25, 0.5, pool_size=args.pool, seed=args.seed)
    first, last = rep.trace.records[0], rep.trace.records[-1]
    print(f"{rep.function}: weight {first.weight:.8f} -> {last.weight:.8f} over {last.n} steps")
    print(f"point {rep.point}, direction {rep.direction}, derivative {rep.derivative:.8f}")
    print("r            M(r)")
    for r, m in zip(rep.modulus.radii, rep.modulus.values):
        print(f"{r:<12.4g} {m:.3e}")
    print(f"M(r_min)/M(r_max) = {rep.modulus_ratio:.3g}")


if __name__ == "__main__":
    main()
