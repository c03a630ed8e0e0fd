#!/usr/bin/env python3
"""Desk-scale experiment grid: the deep-sea and hallway tasks that run in
minutes per seed, followed by a report over the output directory.

    python scripts/desk_grid.py --outdir runs/desk --episodes 20000 --parallel 2
"""

import argparse
import sys

from decoupled_rl.cli import main as cli_main

CELLS = [
    ("deepsea", ["env.size=10"], "a2c", "count"),
    ("deepsea", ["env.size=10"], "dea2c", "count"),
    ("deepsea", ["env.size=10"], "dedqn", "count"),
    ("deepsea", ["env.size=14"], "a2c", "none"),
    ("deepsea", ["env.size=14"], "a2c", "count"),
    ("hallway", ["env.n_l=10", "env.n_r=0"], "a2c", "count"),
    ("hallway", ["env.n_l=10", "env.n_r=0"], "dea2c", "count"),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--outdir", default="runs/desk")
    parser.add_argument("--episodes", type=int, default=20_000)
    parser.add_argument("--seeds", default="0,1,2,3,4")
    parser.add_argument("--parallel", type=int, default=2)
    args = parser.parse_args()
    failures = 0
    for env, env_sets, algo, intrinsic in CELLS:
        argv = ["train", "--outdir", args.outdir, "--seeds", args.seeds,
                "--parallel", str(args.parallel),
                "--set", f"env.name={env}", "--set", f"algo.name={algo}",
                "--set", f"intrinsic.name={intrinsic}",
                "--set", f"schedule.episodes={args.episodes}"]
        for key in env_sets:
            argv += ["--set", key]
        print(f"== {env} {algo}+{intrinsic} ==", flush=True)
        failures += cli_main(argv)
    failures += cli_main(["report", "--outdir", args.outdir])
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
