"""Randomized canonicalization trials, bucketed by how many intruders were scattered."""

import argparse
import random
from collections import Counter

from cpsp.completeness import random_trial
from cpsp.timealg.store import Oracle


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-intruders", type=int, default=4)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    oracle = Oracle("builtin")
    total, passed, sat = Counter(), Counter(), Counter()
    for _ in range(args.trials):
        r = random_trial(rng, max_intruders=args.max_intruders, oracle=oracle)
        total[r.intruders] += 1
        passed[r.intruders] += r.passed
        sat[r.intruders] += r.sat_scattered
    print(f"{'intruders':>9} {'trials':>7} {'satisfiable':>12} {'passed':>7}")
    for k in sorted(total):
        print(f"{k:>9} {total[k]:>7} {sat[k]:>12} {passed[k]:>7}")
    print(f"overall: {sum(passed.values())}/{args.trials} passed")


if __name__ == "__main__":
    main()
