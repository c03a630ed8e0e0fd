"""Reading the run-directory interface: run.csv rows plus the commented
metadata and canonical config in the sibling config.snapshot."""

from __future__ import annotations

import glob
import os
import sys

import numpy as np


class InputError(ValueError):
    """Missing files, malformed rows, or absent columns."""


REQUIRED = {
    "curves": ("episode", "ret_mean"),
    "sensitivity_bars": ("episode", "ret_mean"),
    "normalized": ("episode", "ret_mean"),
    "diagnostics": ("episode", "ret_mean", "train_ret_mean",
                    "is_weight_mean", "kl_mean"),
}


class Run:
    """One run.csv plus its snapshot metadata."""

    def __init__(self, path, header, columns, meta, pairs):
        self.path = path
        self.header = header
        self.columns = columns  # name -> float array
        self.meta = meta        # snapshot '# key = value' entries
        self.pairs = pairs      # canonical config key=value strings

    @property
    def task(self):
        return self.meta.get("task", "unknown-task")

    @property
    def variant(self):
        return self.meta.get("variant", "unknown-variant")

    @property
    def seed(self):
        return self.meta.get("seed", os.path.basename(os.path.dirname(self.path)))

    @property
    def optimal_return(self):
        raw = self.meta.get("optimal_return")
        return float(raw) if raw is not None else None

    def episode_returns(self):
        """(evals, episodes) matrix from the ret_e* columns."""
        names = sorted((n for n in self.columns if n.startswith("ret_e")),
                       key=lambda n: int(n[5:]))
        if not names:
            raise InputError(f"{self.path}: no ret_e columns")
        return np.stack([self.columns[n] for n in names], axis=1)


def read_run(path, kind) -> Run:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = []
        for line in fh:
            cells = line.strip().split(",")
            if len(cells) != len(header):
                raise InputError(f"{path}: malformed row")
            rows.append(cells)
    if not rows:
        raise InputError(f"{path}: no data rows")
    for required in REQUIRED[kind]:
        if required not in header:
            raise InputError(f"{path}: required column {required!r} missing")
    columns = {}
    for i, name in enumerate(header):
        columns[name] = np.array([float(r[i]) for r in rows])
    meta, pairs = {}, {}
    snapshot = os.path.join(os.path.dirname(path), "config.snapshot")
    if os.path.exists(snapshot):
        with open(snapshot) as fh:
            for line in fh:
                line = line.strip()
                if line.startswith("#") and "=" in line:
                    key, value = line.lstrip("# ").split("=", 1)
                    meta[key.strip()] = value.strip()
                elif line and not line.startswith("#") and "=" in line:
                    key, value = line.split("=", 1)
                    pairs[key.strip()] = value.strip()
    return Run(path, header, columns, meta, pairs)


def load_runs(pattern, kind):
    paths = sorted(glob.glob(pattern, recursive=True))
    paths = [p for p in paths if os.path.basename(p) == "run.csv"]
    if not paths:
        raise InputError(f"no run.csv files match {pattern!r}")
    return [read_run(p, kind) for p in paths]


def group_by_variant(runs):
    """(task, variant) -> list of runs (one per seed)."""
    groups = {}
    for run in runs:
        groups.setdefault((run.task, run.variant), []).append(run)
    return dict(sorted(groups.items()))


def drop_nan(x, y, context):
    """Filter NaN cells out of a curve, warning once when any are dropped."""
    x, y = np.asarray(x), np.asarray(y)
    keep = ~np.isnan(y)
    if not keep.all():
        print(f"warning: dropping {int((~keep).sum())} NaN cells from {context}",
              file=sys.stderr)
    return x[keep], y[keep]
