"""Mean ISE(K0) / MISE(K*) over seeded replications, for a range of sample sizes.

Usage: python3 scripts/oracle_ratio.py [--model laplace:0,1] [--W 64] [--t 6] [--reps 200] [--n 250 1000 4000]
"""

import argparse
import time

from monoracle.cli import ordered_map, run_bench
from monoracle.densities import parse_model
from monoracle.spectral import build_grid


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--model", default="laplace:0,1")
    p.add_argument("--W", type=float, default=64.0)
    p.add_argument("--t", type=int, default=6)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--n", type=int, nargs="+", default=[250, 1000, 4000])
    args = p.parse_args()

    model = parse_model(args.model)
    grid = build_grid(args.W, args.t)
    print(f"# model={args.model} W={args.W:g} t={args.t} reps={args.reps} seed={args.seed}")
    print("n,mean_ratio,se,excess_times_n^0.25,mise_oracle,mean_ise,seconds")
    for n in args.n:
        t0 = time.perf_counter()
        _, s = run_bench(model, n, args.reps, grid, args.seed, map_fn=ordered_map)
        dt = time.perf_counter() - t0
        scaled = (s["mean_ratio"] - 1) * n**0.25
        print(f"{n},{s['mean_ratio']:.4f},{s['se']:.4f},{scaled:.3f},{s['mise_oracle']:.6g},{s['mean_ise']:.6g},{dt:.1f}",
              flush=True)


if __name__ == "__main__":
    main()
