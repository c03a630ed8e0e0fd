"""Command-line entry points: single runs, sensitivity sweeps, report
aggregation over emitted run directories, and the exact env solver.

Output layout: OUTDIR/<task>/<algo>-<intrinsic>/<seed>/{run.csv, config.snapshot};
sweeps nest each grid point under OUTDIR/<swept_key>=<value>/.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import generate_sweep, parse_config, swept_key
from .envs import solve_optimal_return
from .harness import (
    cross_task_means,
    normalize_returns,
    run_experiment,
    stratified_bootstrap_ci,
)
from .nn import ConfigError


def _load_config(args):
    text = ""
    if args.config:
        with open(args.config) as fh:
            text = fh.read()
    return parse_config(text, overrides=args.set or [])


def _seed_list(args, cfg):
    if args.seed is not None:
        return [args.seed]
    if args.seeds:
        return [int(tok) for tok in args.seeds.split(",") if tok]
    return list(cfg.schedule.seeds)


def _run_job(job):
    cfg, seed, outdir = job
    log = run_experiment(cfg, seed, outdir=outdir)
    return cfg.task_id(), cfg.variant_id(), seed, max(r.ret_mean for r in log.records)


def _execute_jobs(jobs, parallel):
    failures = 0
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            futures = [pool.submit(_run_job, job) for job in jobs]
            for fut in futures:
                try:
                    task, variant, seed, best = fut.result()
                    print(f"{task} {variant} seed={seed} max_eval_return={best:.3f}")
                except Exception as exc:  # noqa: BLE001 - surface and count
                    failures += 1
                    print(f"run failed: {exc}", file=sys.stderr)
    else:
        for job in jobs:
            try:
                task, variant, seed, best = _run_job(job)
                print(f"{task} {variant} seed={seed} max_eval_return={best:.3f}")
            except Exception as exc:  # noqa: BLE001
                failures += 1
                print(f"run failed: {exc}", file=sys.stderr)
    return failures


def cmd_train(args) -> int:
    cfg = _load_config(args)
    jobs = [(cfg, seed, args.outdir) for seed in _seed_list(args, cfg)]
    return 1 if _execute_jobs(jobs, args.parallel) else 0


def cmd_sweep(args) -> int:
    base = _load_config(args)
    key = swept_key(args.kind, base.intrinsic.name)
    jobs = []
    for cfg in generate_sweep(args.kind, base):
        value = {
            "intrinsic.lambda": cfg.intrinsic.lam,
            "intrinsic.count_increment": cfg.intrinsic.count_increment,
            "intrinsic.intrinsic_lr": cfg.intrinsic.intrinsic_lr,
        }[key]
        subdir = os.path.join(args.outdir, f"{key.split('.')[-1]}={value:g}")
        jobs += [(cfg, seed, subdir) for seed in _seed_list(args, cfg)]
    return 1 if _execute_jobs(jobs, args.parallel) else 0


def _read_run_csv(path):
    """(episodes, returns matrix) from one run.csv; returns None on corrupt files."""
    try:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            ret_cols = [i for i, name in enumerate(header) if name.startswith("ret_e")]
            ep_col = header.index("episode")
            episodes, rows = [], []
            for line in fh:
                cells = line.strip().split(",")
                if len(cells) != len(header):
                    raise ValueError(f"malformed row in {path}")
                episodes.append(int(cells[ep_col]))
                rows.append([float(cells[i]) for i in ret_cols])
        if not rows:
            raise ValueError(f"no rows in {path}")
        return np.asarray(episodes), np.asarray(rows)
    except (OSError, ValueError, IndexError) as exc:
        print(f"skipping {path}: {exc}", file=sys.stderr)
        return None


def _snapshot_field(path, name):
    try:
        with open(path) as fh:
            for line in fh:
                if line.startswith(f"# {name} ="):
                    return line.split("=", 1)[1].strip()
    except OSError:
        return None
    return None


def collect_runs(root):
    """Map (task, variant) -> {seed: (episodes, returns)} discovered under root."""
    cells = {}
    for dirpath, _dirnames, filenames in os.walk(root):
        if "run.csv" not in filenames:
            continue
        data = _read_run_csv(os.path.join(dirpath, "run.csv"))
        if data is None:
            continue
        snapshot = os.path.join(dirpath, "config.snapshot")
        task = _snapshot_field(snapshot, "task") or os.path.basename(
            os.path.dirname(os.path.dirname(dirpath)))
        variant = _snapshot_field(snapshot, "variant") or os.path.basename(
            os.path.dirname(dirpath))
        seed = _snapshot_field(snapshot, "seed") or os.path.basename(dirpath)
        cells.setdefault((task, variant), {})[seed] = data
    return cells


def aggregate_report(root, resamples=5000, level=0.95):
    """Per-cell summary rows: mean-over-evaluations (seed-mean first), the best
    single evaluation, and a stratified bootstrap CI of the mean."""
    cells = collect_runs(root)
    rows = []
    per_task = {}
    for (task, variant), runs in sorted(cells.items()):
        n_evals = min(r[1].shape[0] for r in runs.values())
        seed_eval_means = np.stack(
            [r[1][:n_evals].mean(axis=1) for r in runs.values()])  # (seeds, evals)
        eval_means = seed_eval_means.mean(axis=0)  # seed-mean first
        mean_ret = float(eval_means.mean())
        std_ret = float(eval_means.std())
        sample_matrix = np.stack([r[1][:n_evals] for r in runs.values()])  # (seeds, evals, eps)
        per_eval_sample_mean = sample_matrix.mean(axis=(0, 2))
        best_eval = int(np.argmax(per_eval_sample_mean))
        max_ret = float(per_eval_sample_mean[best_eval])
        max_std = float(sample_matrix[:, best_eval, :].std())
        ci_lo, ci_hi = stratified_bootstrap_ci(
            [list(m) for m in seed_eval_means], resamples=resamples, level=level)
        rows.append({
            "task": task, "variant": variant, "seeds": len(runs),
            "mean_return": mean_ret, "std_return": std_ret,
            "max_return": max_ret, "max_return_std": max_std,
            "ci_low": ci_lo, "ci_high": ci_hi,
        })
        per_task.setdefault(task, {})[variant] = mean_ret
    normalized, flagged = ({}, [])
    cross = {}
    if per_task:
        normalized, flagged = normalize_returns(per_task)
        cross = cross_task_means(normalized)
    for task in flagged:
        print(f"task {task}: degenerate returns, normalized to 0.5", file=sys.stderr)
    return rows, normalized, cross


def write_report(root, outdir=None, resamples=5000, level=0.95):
    rows, normalized, cross = aggregate_report(root, resamples=resamples, level=level)
    outdir = outdir or os.path.join(root, "report")
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "summary.csv"), "w") as fh:
        fh.write("task,variant,seeds,mean_return,std_return,max_return,"
                 "max_return_std,ci_low,ci_high\n")
        for r in rows:
            fh.write(f"{r['task']},{r['variant']},{r['seeds']},{r['mean_return']!r},"
                     f"{r['std_return']!r},{r['max_return']!r},{r['max_return_std']!r},"
                     f"{r['ci_low']!r},{r['ci_high']!r}\n")
    with open(os.path.join(outdir, "normalized.csv"), "w") as fh:
        fh.write("task,variant,normalized_return\n")
        for task, cells in sorted(normalized.items()):
            for variant, value in sorted(cells.items()):
                fh.write(f"{task},{variant},{value!r}\n")
        for variant, value in sorted(cross.items()):
            fh.write(f"ALL,{variant},{value!r}\n")
    return rows


def cmd_report(args) -> int:
    rows = write_report(args.outdir, resamples=args.resamples)
    if not rows:
        print("no runs found", file=sys.stderr)
        return 1
    for r in rows:
        print(f"{r['task']} {r['variant']}: mean {r['mean_return']:.3f}"
              f" (+-{r['std_return']:.3f}) max {r['max_return']:.3f}"
              f" ci [{r['ci_low']:.3f}, {r['ci_high']:.3f}] over {r['seeds']} seeds")
    return 0


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    value = solve_optimal_return(cfg.env.name, size=cfg.env.size,
                                 n_left=cfg.env.n_l, n_right=cfg.env.n_r)
    print(f"{cfg.task_id()} optimal_return = {value!r}")
    return 0


def _add_common(p):
    p.add_argument("--config", help="config document path")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--seed", type=int, default=None, help="run a single seed")
    p.add_argument("--seeds", default=None, help="comma-separated seed list")
    p.add_argument("--outdir", default="runs", help="output directory")
    p.add_argument("--parallel", type=int, default=1, help="concurrent worker processes")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="decoupled-rl",
        description="train and evaluate intrinsically-motivated and decoupled RL agents",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_train = sub.add_parser("train", help="run one configuration over its seeds")
    _add_common(p_train)
    p_train.set_defaults(fn=cmd_train)
    p_sweep = sub.add_parser("sweep", help="sensitivity grid over bonus scale or decay")
    _add_common(p_sweep)
    p_sweep.add_argument("--kind", choices=("lambda", "decay"), required=True)
    p_sweep.set_defaults(fn=cmd_sweep)
    p_report = sub.add_parser("report", help="aggregate run directories into tables")
    p_report.add_argument("--outdir", default="runs", help="directory holding runs")
    p_report.add_argument("--resamples", type=int, default=5000)
    p_report.set_defaults(fn=cmd_report)
    p_solve = sub.add_parser("solve", help="print the exact optimal return of an env")
    _add_common(p_solve)
    p_solve.set_defaults(fn=cmd_solve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
