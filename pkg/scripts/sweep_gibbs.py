#!/usr/bin/env python3
"""Random-spec sweep of h_c((1 - D) W1(Q, P)) <= H(Q|P) on spin Gibbs models.

Writes one JSON line per spec with the report summary.
"""
import argparse
import json
import sys

import numpy as np

from transineq.dobrushin import dobrushin_discrete
from transineq.measures import SpinGibbsSpec
from transineq.verify import check_theorem34


def random_spec(N, K, rng, delta_max, d_max):
    while True:
        g = np.triu(rng.exponential(1.0, (N, N)), 1)
        spec = SpinGibbsSpec(rng.uniform(0.1, delta_max, N), g + g.T, K)
        if dobrushin_discrete(spec).D < d_max:
            return spec


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sites", type=int, nargs="+", default=[2, 3])
    p.add_argument("--K", type=int, nargs="+", default=[8, 12])
    p.add_argument("--specs", type=int, default=3, help="random specs per (sites, K)")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--delta-max", type=float, default=0.5)
    p.add_argument("--d-max", type=float, default=0.9)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args()

    rng = np.random.default_rng(args.seed)
    failed = False
    for N in args.sites:
        for K in args.K:
            for s in range(args.specs):
                spec = random_spec(N, K, rng, args.delta_max, args.d_max)
                rep = check_theorem34(spec, args.trials, args.seed + s, threads=args.threads)
                failed |= rep.verdict == "FAIL"
                print(json.dumps({
                    "N": N, "K": K, "D": rep.details["D"], "c": rep.details["c"],
                    "defect": rep.details["defect"], "verdict": rep.verdict,
                    "max_violation": rep.max_violation, "min_slack": rep.min_slack,
                    "lp_solves": rep.details["lp_solves"],
                }))
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
