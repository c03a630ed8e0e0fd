"""Figure construction. Rendering is deterministic: fixed style, the Agg
backend, and PDF metadata stripped of timestamps, so re-rendering identical
inputs yields byte-identical files."""

from __future__ import annotations

import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .runio import InputError, drop_nan, group_by_variant, load_runs  # noqa: E402

KINDS = ("curves", "sensitivity_bars", "normalized", "diagnostics")

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "svg.hashsalt": "expplots",
}


@dataclass
class FigureSpec:
    input_glob: str
    kind: str
    out_path: str
    smooth_window: int = 2  # average this many consecutive evaluations

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown figure kind {self.kind!r} (expected one of {KINDS})")
        if self.smooth_window < 1:
            raise InputError("smooth_window must be >= 1")


def smooth(values, window):
    """Non-overlapping window means; a shorter tail window is kept as-is.

    With window dividing the length this preserves the overall mean exactly.
    """
    values = np.asarray(values, dtype=np.float64)
    if window == 1 or len(values) == 0:
        return values.copy()
    n_full = len(values) // window
    out = []
    for i in range(n_full):
        out.append(values[i * window:(i + 1) * window].mean())
    if len(values) % window:
        out.append(values[n_full * window:].mean())
    return np.asarray(out)


def stratified_ci(per_seed_values, resamples=2000, level=0.95, seed=0):
    """Same semantics as the runner's confidence intervals: resample within
    each seed stratum, aggregate stratum means, take empirical quantiles."""
    rng = np.random.default_rng(seed)
    acc = np.zeros(resamples)
    for values in per_seed_values:
        values = np.asarray(values, dtype=np.float64)
        idx = rng.integers(0, len(values), size=(resamples, len(values)))
        acc += values[idx].mean(axis=1)
    means = acc / len(per_seed_values)
    alpha = (1.0 - level) / 2.0
    return float(np.quantile(means, alpha)), float(np.quantile(means, 1.0 - alpha))


def _aligned(runs, column):
    """Per-seed arrays truncated to the shortest run; plus episode axis."""
    n = min(len(r.columns[column]) for r in runs)
    data = np.stack([r.columns[column][:n] for r in runs])
    episodes = runs[0].columns["episode"][:n]
    return episodes, data


def _label(task, variant):
    return f"{task} {variant}"


def make_curves(spec: FigureSpec):
    runs = load_runs(spec.input_glob, "curves")
    fig, ax = plt.subplots()
    optimal = None
    for (task, variant), group in group_by_variant(runs).items():
        episodes, _ = _aligned(group, "ret_mean")
        n = len(episodes)
        x = smooth(episodes, spec.smooth_window)
        per_seed = [smooth(r.columns["ret_mean"][:n], spec.smooth_window) for r in group]
        mean = np.mean(per_seed, axis=0)
        x_plot, mean_plot = drop_nan(x, mean, _label(task, variant))
        # pooled per-seed episode returns per plotted point drive the band
        lows, highs = [], []
        pooled = [r.episode_returns()[:n] for r in group]
        w = spec.smooth_window
        for i in range(len(x)):
            strata = [p[i * w:min((i + 1) * w, n)].reshape(-1) for p in pooled]
            lo, hi = stratified_ci(strata)
            lows.append(lo)
            highs.append(hi)
        line, = ax.plot(x_plot, mean_plot, label=_label(task, variant))
        keep = ~np.isnan(mean)
        ax.fill_between(x[keep], np.asarray(lows)[keep], np.asarray(highs)[keep],
                        color=line.get_color(), alpha=0.2, linewidth=0)
        if group[0].optimal_return is not None:
            optimal = group[0].optimal_return
    if optimal is not None:
        ax.axhline(optimal, linestyle="--", color="black", linewidth=1,
                   label="optimal return")
    ax.set_xlabel("episode")
    ax.set_ylabel("evaluation return")
    ax.legend(fontsize=7)
    return fig


SWEEP_KEYS = ("intrinsic.lambda", "intrinsic.count_increment", "intrinsic.intrinsic_lr")


def _swept_values(runs):
    """Which sweep key varies across these runs, and each run's value for it."""
    for key in SWEEP_KEYS:
        values = {r.pairs.get(key) for r in runs}
        if len(values) > 1 and None not in values:
            return key, {r.path: float(r.pairs[key]) for r in runs}
    raise InputError("sensitivity_bars: no sweep key varies across the inputs "
                     f"(looked for {SWEEP_KEYS})")


def make_sensitivity_bars(spec: FigureSpec):
    runs = load_runs(spec.input_glob, "sensitivity_bars")
    key, values = _swept_values(runs)
    by_value = {}
    for run in runs:
        by_value.setdefault(values[run.path], []).append(run)
    points = sorted(by_value)
    means, lows, highs = [], [], []
    for value in points:
        group = by_value[value]
        _, data = _aligned(group, "ret_mean")
        seed_means = data.mean(axis=1)  # average evaluation return per seed
        means.append(float(seed_means.mean()))
        lo, hi = stratified_ci([list(data[i]) for i in range(len(group))])
        lows.append(lo)
        highs.append(hi)
    fig, ax = plt.subplots()
    xs = np.arange(len(points))
    err = np.stack([np.asarray(means) - lows, np.asarray(highs) - means])
    ax.bar(xs, means, yerr=np.abs(err), capsize=3)
    ax.set_xticks(xs)
    ax.set_xticklabels([f"{v:g}" for v in points], rotation=45)
    ax.set_xlabel(key)
    ax.set_ylabel("average evaluation return")
    return fig


def make_normalized(spec: FigureSpec):
    runs = load_runs(spec.input_glob, "normalized")
    per_task = {}
    for (task, variant), group in group_by_variant(runs).items():
        _, data = _aligned(group, "ret_mean")
        per_task.setdefault(task, {})[variant] = float(data.mean(axis=0).mean())
    normalized = {}
    for task, cells in per_task.items():
        values = np.array(list(cells.values()))
        lo, hi = values.min(), values.max()
        for variant, v in cells.items():
            score = 0.5 if hi == lo else (v - lo) / (hi - lo)
            normalized.setdefault(variant, []).append(score)
    variants = sorted(normalized)
    means = [float(np.mean(normalized[v])) for v in variants]
    fig, ax = plt.subplots()
    xs = np.arange(len(variants))
    ax.bar(xs, means)
    ax.set_xticks(xs)
    ax.set_xticklabels(variants, rotation=45, ha="right")
    ax.set_ylabel("normalized return (cross-task mean)")
    ax.set_ylim(0, 1)
    return fig


def make_diagnostics(spec: FigureSpec):
    runs = load_runs(spec.input_glob, "diagnostics")
    panels = (("ret_mean", "evaluation return"), ("train_ret_mean", "training return"),
              ("is_weight_mean", "mean importance weight"), ("kl_mean", "mean KL"))
    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    for (column, title), ax in zip(panels, axes.ravel()):
        for (task, variant), group in group_by_variant(runs).items():
            episodes, data = _aligned(group, column)
            x = smooth(episodes, spec.smooth_window)
            y = smooth(data.mean(axis=0), spec.smooth_window)
            x, y = drop_nan(x, y, f"{_label(task, variant)}:{column}")
            ax.plot(x, y, label=_label(task, variant))
        ax.set_title(title)
        ax.set_xlabel("episode")
    axes[0, 0].legend(fontsize=6)
    fig.tight_layout()
    return fig


MAKERS = {
    "curves": make_curves,
    "sensitivity_bars": make_sensitivity_bars,
    "normalized": make_normalized,
    "diagnostics": make_diagnostics,
}


def render(spec: FigureSpec):
    """Build the figure and write <out>.png and <out>.pdf; returns
    (figure, written paths). Inputs are never modified."""
    with plt.rc_context(STYLE):
        fig = MAKERS[spec.kind](spec)
        base, ext = os.path.splitext(spec.out_path)
        if ext.lower() in (".png", ".pdf"):
            spec_base = base
        else:
            spec_base = spec.out_path
        out_dir = os.path.dirname(os.path.abspath(spec_base))
        os.makedirs(out_dir, exist_ok=True)
        paths = [spec_base + ".png", spec_base + ".pdf"]
        fig.savefig(paths[0])
        fig.savefig(paths[1], metadata={"CreationDate": None})
    return fig, paths
