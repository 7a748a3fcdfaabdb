"""Exceedance frequencies of the favorable-event thresholds across a range of lambda.

Usage: python3 scripts/favorable_events.py [--model gaussian:0,1] [--n 200] [--reps 200] [--lambda 0.01 0.1 1 10]
"""

import argparse

from monoracle.cli import ordered_map
from monoracle.densities import parse_model
from monoracle.waveletdiag import favorable_event_frequencies


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--model", default="gaussian:0,1")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=10)
    p.add_argument("--lambda", dest="lams", type=float, nargs="+", default=[0.01, 0.1, 0.3, 1.0, 10.0])
    args = p.parse_args()

    model = parse_model(args.model)
    print("lambda,max_frequency,probes_exceeded,probes")
    for lam in args.lams:
        rep = favorable_event_frequencies(model, args.n, lam, args.reps, args.seed, map_fn=ordered_map)
        hit = sum(r["exceedances"] > 0 for r in rep.rows)
        print(f"{lam:g},{rep.max_frequency:g},{hit},{len(rep.rows)}", flush=True)


if __name__ == "__main__":
    main()
