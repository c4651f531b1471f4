"""Author a scenario YAML file with evenly spread FDI/DoS episodes.

    python scripts/make_scenario.py --name simics-a --seed 42 --out scenarios/simics-a.yaml
"""

import argparse

import numpy as np
import yaml

from icsids.simulator import make_episodes


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--name", default="simics-a")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--horizon", type=int, default=20000)
    ap.add_argument("--attack-fraction", type=float, default=0.05)
    ap.add_argument("--episode-len", type=int, default=100)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    eps = make_episodes(args.horizon, args.attack_fraction, args.episode_len, ["fdi", "dos"], rng)
    doc = {
        "name": args.name,
        "seed": args.seed,
        "horizon": args.horizon,
        "plant": {"a1": 0.5, "a2": 0.5, "dt": 0.1, "process_sigma": 0.02,
                  "meas_scale": [0.05, 0.05, 0.01], "level_range": 10.0},
        "inflow": {"low": 0.5, "high": 1.5, "hold": 250},
        "fdi": {"f": 2, "bias_low": 0.1, "bias_high": 0.5},
        "dos": {"kind": "bernoulli", "p_loss": 0.5, "depth": 2, "mode": "zeroing"},
        "features": {"stack_dos": True},
        "episodes": [list(e) for e in eps],
    }
    with open(args.out, "w") as fh:
        fh.write(f"# {args.name}: generated by scripts/make_scenario.py --seed {args.seed}\n")
        yaml.safe_dump(doc, fh, sort_keys=False, default_flow_style=None)


if __name__ == "__main__":
    main()
