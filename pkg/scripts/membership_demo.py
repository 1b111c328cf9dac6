#!/usr/bin/env python3
"""Build the default construction, query a few points, and write an SVG of the stored tubes."""
import argparse
from pathlib import Path

import numpy as np

from udset import MembershipEngine, RunConfig, build
from udset.tubes import to_svg


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depth", type=int, default=4)
    ap.add_argument("--lambda", dest="lam", type=float, default=0.5)
    ap.add_argument("--svg", default="tubes_demo.svg")
    args = ap.parse_args()

    cfg = RunConfig().with_overrides(depth=args.depth).validate()
    con = build(cfg)
    print(f"stored triples per level: {con.level_counts()}")
    eng = MembershipEngine(con, args.lam)
    arr = con.root_wedge.array
    reach = args.lam * cfg.tubes.alpha0
    for y in (arr[1], (arr[0] + arr[1]) / 2, arr[1] + [0, 0.9 * reach], arr[1] + [0, 1.5 * reach]):
        w = eng.witness_M(np.asarray(y, float), con.K)
        chain = "no level-K chain" if w is None else f"level-K chain, tube width {w.w:.3g}"
        print(f"y = ({y[0]:+.4f}, {y[1]:+.4f}): in T = {eng.in_T(y)}, {chain}")
    Path(args.svg).write_text(to_svg(con, args.lam, cfg.tubes.K))
    print(f"wrote {args.svg}")


if __name__ == "__main__":
    main()
