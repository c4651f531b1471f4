"""Method comparison on the Gas Pipeline ARFF corpus (file not shipped).

    python3 scripts/run_gas_pipeline.py path/to/IanArffDataset.arff --out results/gas

The binary result column is the label; the categorized and specific result
columns are dropped so that 17 feature columns remain.
"""

import argparse
import sys

from icsids.cli import main


def run():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("arff")
    ap.add_argument("--out", default="results/gas")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repetitions", type=int, default=10)
    ap.add_argument("--sweep", action="store_true", help="also run the imbalance sweep")
    args = ap.parse_args()
    common = ["--dataset", args.arff, "--label-column", "binary result", "--positive-label", "1",
              "--drop-columns", "categorized result,specific result",
              "--seed", str(args.seed), "--repetitions", str(args.repetitions), "--verbose"]
    rc = main(["compare", *common, "--out", f"{args.out}/compare"])
    if rc == 0 and args.sweep:
        rc = main(["sweep", *common, "--out", f"{args.out}/sweep"])
    return rc


if __name__ == "__main__":
    sys.exit(run())
