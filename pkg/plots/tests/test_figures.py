import os
import time

import matplotlib.pyplot as plt
import numpy as np
import pytest

from expplots.cli import main as cli_main
from expplots.figures import FigureSpec, make_curves, render, smooth, stratified_ci
from expplots.runio import InputError, load_runs


def write_run(root, task, variant, seed, ret_means, episode_returns=None,
              extra_pairs=(), optimal=0.99, diagnostics=None):
    """Synthetic run directory in the primary component's documented layout."""
    d = root / task / variant / str(seed)
    d.mkdir(parents=True, exist_ok=True)
    n_eps = 8 if episode_returns is None else episode_returns.shape[1]
    header = (["episode", "ret_mean", "ret_std"]
              + [f"ret_e{i+1}" for i in range(n_eps)]
              + ["train_ret_mean", "intrinsic_mean", "is_weight_mean", "kl_mean", "wall_s"])
    lines = [",".join(header)]
    for i, m in enumerate(ret_means):
        eps = (episode_returns[i] if episode_returns is not None
               else np.full(n_eps, m))
        diag = diagnostics[i] if diagnostics is not None else (m, 0.0, 1.0, 0.0)
        cells = [str(i * 1000), repr(float(m)), "0.0"]
        cells += [repr(float(v)) for v in eps]
        cells += [repr(float(diag[0])), repr(float(diag[1])),
                  repr(float(diag[2])), repr(float(diag[3])), "0.0"]
        lines.append(",".join(cells))
    (d / "run.csv").write_text("\n".join(lines) + "\n")
    snapshot = [f"# seed = {seed}", f"# task = {task}", f"# variant = {variant}",
                f"# optimal_return = {optimal!r}"]
    snapshot += list(extra_pairs)
    (d / "config.snapshot").write_text("\n".join(snapshot) + "\n")
    return d


def synth_curves_dir(root, n_evals=100, seeds=5):
    rng = np.random.default_rng(0)
    for seed in range(seeds):
        base = np.clip(np.linspace(0.0, 0.99, n_evals) + rng.normal(0, 0.02, n_evals),
                       -0.01, 0.99)
        eps = base[:, None] + rng.normal(0, 0.01, size=(n_evals, 8))
        write_run(root, "deepsea-10", "a2c-count", seed, base, episode_returns=eps)
    return str(root / "**" / "run.csv")


class TestSmoothing:
    def test_pairwise_100_to_50(self):
        out = smooth(np.arange(100.0), 2)
        assert len(out) == 50
        assert out[0] == 0.5

    def test_mean_preserved_on_even_length(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=100)
        assert abs(smooth(x, 2).mean() - x.mean()) < 1e-12

    def test_window_one_is_identity(self):
        x = np.array([1.0, 2.0, 3.0])
        assert np.array_equal(smooth(x, 1), x)

    def test_odd_tail_kept(self):
        out = smooth(np.array([1.0, 3.0, 10.0]), 2)
        assert np.array_equal(out, [2.0, 10.0])


class TestCurves:
    def test_secondary_acceptance_50_points_and_shading(self, tmp_path, capsys):
        started = time.monotonic()
        pattern = synth_curves_dir(tmp_path, n_evals=100, seeds=5)
        spec = FigureSpec(pattern, "curves", str(tmp_path / "fig" / "curves"))
        fig, paths = render(spec)
        lines = [l for l in fig.axes[0].lines if l.get_label() != "optimal return"]
        assert len(lines) == 1
        assert len(lines[0].get_xdata()) == 50  # 100 evaluations pairwise smoothed
        assert len(fig.axes[0].collections) >= 1  # CI shading present
        assert all(os.path.exists(p) for p in paths)
        elapsed = time.monotonic() - started
        assert elapsed < 10.0
        print(f"[PASS] curves figure: 50 plotted points with CI shading in {elapsed:.1f}s")
        plt.close(fig)

    def test_flat_single_run_zero_width_band(self, tmp_path):
        write_run(tmp_path, "t", "v", 0, np.full(10, 0.5))
        spec = FigureSpec(str(tmp_path / "**" / "run.csv"), "curves",
                          str(tmp_path / "out"))
        fig, _ = render(spec)
        line = fig.axes[0].lines[0]
        assert np.allclose(line.get_ydata(), 0.5)
        band = fig.axes[0].collections[0].get_paths()[0].vertices[:, 1]
        assert np.allclose(band, 0.5)
        plt.close(fig)

    def test_two_seed_mean_line(self, tmp_path):
        write_run(tmp_path, "t", "v", 0, np.zeros(6))
        write_run(tmp_path, "t", "v", 1, np.ones(6))
        spec = FigureSpec(str(tmp_path / "**" / "run.csv"), "curves",
                          str(tmp_path / "out"), smooth_window=1)
        fig, _ = render(spec)
        assert np.allclose(fig.axes[0].lines[0].get_ydata(), 0.5)
        plt.close(fig)

    def test_optimal_line_from_snapshot(self, tmp_path):
        write_run(tmp_path, "t", "v", 0, np.zeros(4), optimal=1.8)
        spec = FigureSpec(str(tmp_path / "**" / "run.csv"), "curves",
                          str(tmp_path / "out"))
        fig, _ = render(spec)
        dashed = [l for l in fig.axes[0].lines if l.get_label() == "optimal return"]
        assert dashed and dashed[0].get_ydata()[0] == 1.8
        plt.close(fig)


class TestSensitivityBars:
    def test_one_bar_per_lambda_value(self, tmp_path, capsys):
        lambdas = (0.01, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 10.0, 100.0)
        rng = np.random.default_rng(2)
        for lam in lambdas:
            for seed in range(3):
                write_run(tmp_path / f"lambda={lam:g}", "deepsea-10", "a2c-count", seed,
                          rng.random(5), extra_pairs=[f"intrinsic.lambda = {lam!r}",
                                                      "intrinsic.count_increment = 1.0",
                                                      "intrinsic.intrinsic_lr = 1e-05"])
        spec = FigureSpec(str(tmp_path / "**" / "run.csv"), "sensitivity_bars",
                          str(tmp_path / "bars"))
        fig, _ = render(spec)
        assert len(fig.axes[0].patches) == 9
        print("[PASS] sensitivity bars: one bar per swept value (9 for lambda)")
        plt.close(fig)

    def test_error_when_nothing_varies(self, tmp_path):
        write_run(tmp_path, "t", "v", 0, np.zeros(3),
                  extra_pairs=["intrinsic.lambda = 1.0"])
        spec = FigureSpec(str(tmp_path / "**" / "run.csv"), "sensitivity_bars",
                          str(tmp_path / "bars"))
        with pytest.raises(InputError):
            render(spec)


class TestNormalized:
    def test_cross_task_bars_in_unit_interval(self, tmp_path):
        write_run(tmp_path, "t1", "a", 0, np.full(4, 0.2))
        write_run(tmp_path, "t1", "b", 0, np.full(4, 0.9))
        write_run(tmp_path, "t2", "a", 0, np.full(4, 1.8))
        write_run(tmp_path, "t2", "b", 0, np.full(4, 0.0))
        spec = FigureSpec(str(tmp_path / "**" / "run.csv"), "normalized",
                          str(tmp_path / "norm"))
        fig, _ = render(spec)
        heights = [p.get_height() for p in fig.axes[0].patches]
        assert len(heights) == 2
        assert all(0.0 <= h <= 1.0 for h in heights)
        plt.close(fig)


class TestDiagnostics:
    def test_panels_and_nan_dropping(self, tmp_path, capsys):
        diags = [(0.1, 0.0, 1.0, float("nan"))] + [(0.2, 0.0, 1.1, 0.3)] * 5
        write_run(tmp_path, "t", "dea2c-count", 0, np.linspace(0, 1, 6),
                  diagnostics=diags)
        spec = FigureSpec(str(tmp_path / "**" / "run.csv"), "diagnostics",
                          str(tmp_path / "diag"), smooth_window=1)
        fig, _ = render(spec)
        assert len(fig.axes) == 4
        assert "dropping" in capsys.readouterr().err
        plt.close(fig)

    def test_missing_columns_hard_error(self, tmp_path):
        d = tmp_path / "t" / "v" / "0"
        d.mkdir(parents=True)
        (d / "run.csv").write_text("episode,ret_mean\n0,0.5\n")
        spec = FigureSpec(str(tmp_path / "**" / "run.csv"), "diagnostics",
                          str(tmp_path / "diag"))
        with pytest.raises(InputError, match="train_ret_mean"):
            render(spec)


class TestRenderContract:
    def test_empty_glob_errors(self, tmp_path):
        spec = FigureSpec(str(tmp_path / "**" / "run.csv"), "curves",
                          str(tmp_path / "out"))
        with pytest.raises(InputError):
            render(spec)

    def test_inputs_never_mutated(self, tmp_path):
        write_run(tmp_path, "t", "v", 0, np.linspace(0, 1, 8))
        csv_path = tmp_path / "t" / "v" / "0" / "run.csv"
        before = csv_path.read_bytes()
        spec = FigureSpec(str(tmp_path / "**" / "run.csv"), "curves",
                          str(tmp_path / "out"))
        fig, _ = render(spec)
        plt.close(fig)
        assert csv_path.read_bytes() == before

    def test_rerender_byte_identical(self, tmp_path):
        synth_curves_dir(tmp_path, n_evals=20, seeds=2)
        for sub in ("one", "two"):
            spec = FigureSpec(str(tmp_path / "**" / "run.csv"), "curves",
                              str(tmp_path / sub / "fig"))
            fig, _ = render(spec)
            plt.close(fig)
        for ext in (".png", ".pdf"):
            a = (tmp_path / "one" / f"fig{ext}").read_bytes()
            b = (tmp_path / "two" / f"fig{ext}").read_bytes()
            assert a == b, f"{ext} output differs between renders"


class TestCli:
    def test_cli_writes_both_formats(self, tmp_path, capsys):
        synth_curves_dir(tmp_path, n_evals=10, seeds=2)
        code = cli_main(["--in", str(tmp_path / "**" / "run.csv"),
                         "--kind", "curves", "--out", str(tmp_path / "fig" / "c")])
        assert code == 0
        out = capsys.readouterr().out
        assert (tmp_path / "fig" / "c.png").exists()
        assert (tmp_path / "fig" / "c.pdf").exists()
        assert "c.png" in out

    def test_cli_error_exit_code(self, tmp_path, capsys):
        code = cli_main(["--in", str(tmp_path / "nothing" / "run.csv"),
                         "--kind", "curves", "--out", str(tmp_path / "x")])
        assert code == 2
        assert "error" in capsys.readouterr().err
