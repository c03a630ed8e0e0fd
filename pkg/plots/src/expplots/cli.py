"""Batch figure rendering: expplots --in GLOB --kind KIND --out PATH."""

from __future__ import annotations

import argparse
import sys

import matplotlib.pyplot as plt

from .figures import KINDS, FigureSpec, render
from .runio import InputError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="expplots", description="render figures from run.csv directories")
    parser.add_argument("--in", dest="input_glob", required=True,
                        help="glob matching run.csv files (recursive ** supported)")
    parser.add_argument("--kind", choices=KINDS, required=True)
    parser.add_argument("--out", required=True, help="output path stem (.png/.pdf written)")
    parser.add_argument("--smooth-window", type=int, default=2,
                        help="evaluations averaged per plotted point")
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec(args.input_glob, args.kind, args.out, args.smooth_window)
        fig, paths = render(spec)
        plt.close(fig)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
