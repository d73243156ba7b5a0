"""Rejection rate of the joint test as latent confounding grows."""

import argparse
import csv
from pathlib import Path

import numpy as np

from fusion_dml.crossfit import CrossFitConfig
from fusion_dml.inference import run_test
from fusion_dml.simulate import generate_confounded_dgp


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--strengths", default="0,0.25,0.5,1,1.5,2")
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/power.csv")
    args = ap.parse_args()

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strength", "rejection_rate", "reps"])
        for j, strength in enumerate(float(v) for v in args.strengths.split(",")):
            hits = 0
            for r in range(args.reps):
                rng = np.random.default_rng(np.random.SeedSequence([args.seed, j, r]))
                ds, _ = generate_confounded_dgp(args.n, rng, strength=strength)
                hits += run_test(ds, CrossFitConfig(seed=r)).reject
            w.writerow([strength, hits / args.reps, args.reps])
            print(f"strength {strength:g}: rejection rate {hits / args.reps:.2f}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
