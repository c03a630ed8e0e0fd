#!/usr/bin/env python3
"""Bonus-scale and decay-rate sensitivity sweeps for one algorithm/task cell.

    python scripts/sensitivity_sweep.py --kind lambda --algo a2c --outdir runs/lam
    python scripts/sensitivity_sweep.py --kind decay --algo dea2c --episodes 5000

Render the bars afterwards with the plots package:

    expplots --in 'runs/lam/**/run.csv' --kind sensitivity_bars --out figs/lambda
"""

import argparse
import sys

from decoupled_rl.cli import main as cli_main


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--kind", choices=("lambda", "decay"), default="lambda")
    parser.add_argument("--algo", default="a2c")
    parser.add_argument("--intrinsic", default="count")
    parser.add_argument("--env", default="deepsea")
    parser.add_argument("--size", type=int, default=10)
    parser.add_argument("--episodes", type=int, default=20_000)
    parser.add_argument("--seeds", default="0,1,2,3,4")
    parser.add_argument("--outdir", default="runs/sweep")
    parser.add_argument("--parallel", type=int, default=2)
    args = parser.parse_args()
    argv = ["sweep", "--kind", args.kind, "--outdir", args.outdir,
            "--seeds", args.seeds, "--parallel", str(args.parallel),
            "--set", f"env.name={args.env}",
            "--set", f"algo.name={args.algo}",
            "--set", f"intrinsic.name={args.intrinsic}",
            "--set", f"schedule.episodes={args.episodes}"]
    if args.env == "deepsea":
        argv += ["--set", f"env.size={args.size}"]
    else:
        argv += ["--set", f"env.n_l={args.size}", "--set", "env.n_r=0"]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
