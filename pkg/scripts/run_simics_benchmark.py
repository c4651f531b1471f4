"""Full synthetic benchmark on the committed "simics-a" scenario.

Writes the method comparison at the full attack ratio and the imbalance
sweep (one table per metric) under --out.

    python3 scripts/run_simics_benchmark.py --out results/simics-a
"""

import argparse
import sys

from icsids.cli import main


def run():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/simics-a")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repetitions", type=int, default=10)
    ap.add_argument("--ratios", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    common = ["--scenario", "simics-a", "--seed", str(args.seed), "--repetitions", str(args.repetitions),
              "--workers", str(args.workers), "--verbose"]
    rc = main(["compare", *common, "--out", f"{args.out}/compare"])
    if rc == 0:
        rc = main(["sweep", *common, "--ratios", args.ratios, "--out", f"{args.out}/sweep"])
    return rc


if __name__ == "__main__":
    sys.exit(run())
