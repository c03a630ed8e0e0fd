import os
import subprocess
import sys

import numpy as np
import pytest

from decoupled_rl import cli


def run_cli(*argv):
    return cli.main(list(argv))


class TestSolve:
    def test_deepsea(self, capsys):
        assert run_cli("solve", "--set", "env.name=deepsea", "--set", "env.size=20") == 0
        assert "optimal_return = 0.99" in capsys.readouterr().out

    def test_hallway(self, capsys):
        assert run_cli("solve", "--set", "env.name=hallway", "--set", "env.n_l=10") == 0
        assert "1.8" in capsys.readouterr().out

    def test_bad_key_exit_code(self, capsys):
        assert run_cli("solve", "--set", "env.bogus=1") == 2
        assert "env.bogus" in capsys.readouterr().err


class TestTrain:
    def test_single_seed_writes_layout(self, tmp_path, capsys):
        code = run_cli(
            "train", "--outdir", str(tmp_path), "--seed", "0",
            "--set", "env.name=deepsea", "--set", "env.size=4",
            "--set", "algo.name=a2c", "--set", "intrinsic.name=count",
            "--set", "schedule.episodes=40", "--set", "schedule.eval_every=20",
            "--set", "schedule.eval_episodes=2",
        )
        assert code == 0
        run_dir = tmp_path / "deepsea-4" / "a2c-count" / "0"
        assert (run_dir / "run.csv").exists()
        assert (run_dir / "config.snapshot").exists()

    def test_config_file_and_multiple_seeds(self, tmp_path):
        config = tmp_path / "exp.cfg"
        config.write_text(
            "env.name = deepsea\nenv.size = 4\nalgo.name = a2c\n"
            "intrinsic.name = count\nschedule.episodes = 20\n"
            "schedule.eval_every = 20\nschedule.eval_episodes = 2\n"
        )
        code = run_cli("train", "--config", str(config), "--outdir", str(tmp_path / "out"),
                       "--seeds", "0,1")
        assert code == 0
        assert (tmp_path / "out" / "deepsea-4" / "a2c-count" / "0" / "run.csv").exists()
        assert (tmp_path / "out" / "deepsea-4" / "a2c-count" / "1" / "run.csv").exists()


class TestSweepAndReport:
    def test_sweep_layout_and_report(self, tmp_path, capsys):
        code = run_cli(
            "sweep", "--kind", "lambda", "--outdir", str(tmp_path), "--seed", "0",
            "--set", "env.name=deepsea", "--set", "env.size=3",
            "--set", "algo.name=a2c", "--set", "intrinsic.name=count",
            "--set", "schedule.episodes=10", "--set", "schedule.eval_every=10",
            "--set", "schedule.eval_episodes=2",
        )
        assert code == 0
        points = sorted(p.name for p in tmp_path.iterdir() if p.is_dir())
        assert len(points) == 9
        assert "lambda=0.01" in points and "lambda=100" in points
        code = run_cli("report", "--outdir", str(tmp_path), "--resamples", "200")
        assert code == 0
        assert (tmp_path / "report" / "summary.csv").exists()
        assert (tmp_path / "report" / "normalized.csv").exists()

    def test_report_aggregates_synthetic_runs(self, tmp_path, capsys):
        from decoupled_rl.harness import csv_header

        header = csv_header(2)
        for seed, values in (("0", (0.0, 1.0)), ("1", (1.0, 1.0))):
            d = tmp_path / "taskA" / "algo-x" / seed
            d.mkdir(parents=True)
            rows = [header]
            for i, v in enumerate(values):
                rows.append(f"{i * 10},{v!r},0.0,{v!r},{v!r},nan,nan,nan,nan,0.0")
            (d / "run.csv").write_text("\n".join(rows) + "\n")
            (d / "config.snapshot").write_text(
                f"# seed = {seed}\n# task = taskA\n# variant = algo-x\n")
        rows = cli.write_report(str(tmp_path), resamples=500)
        assert len(rows) == 1
        row = rows[0]
        assert row["seeds"] == 2
        # seed means per eval: eval0 (0+1)/2=0.5, eval1 (1+1)/2=1.0
        assert row["mean_return"] == pytest.approx(0.75)
        assert row["max_return"] == pytest.approx(1.0)
        assert row["ci_low"] <= 0.75 <= row["ci_high"]

    def test_max_return_matches_rescan_oracle(self, tmp_path):
        from decoupled_rl.harness import csv_header

        rng = np.random.default_rng(0)
        values = rng.random(size=(3, 5, 2))  # seeds, evals, episodes
        header = csv_header(2)
        for s in range(3):
            d = tmp_path / "t" / "v" / str(s)
            d.mkdir(parents=True)
            rows = [header]
            for e in range(5):
                r1, r2 = float(values[s, e, 0]), float(values[s, e, 1])
                m = (r1 + r2) / 2
                rows.append(f"{e},{m!r},0.0,{r1!r},{r2!r},nan,nan,nan,nan,0.0")
            (d / "run.csv").write_text("\n".join(rows) + "\n")
        rows, _, _ = cli.aggregate_report(str(tmp_path), resamples=100)
        naive_best = max(values[:, e, :].mean() for e in range(5))
        assert rows[0]["max_return"] == pytest.approx(naive_best)

    def test_corrupt_run_skipped_with_warning(self, tmp_path, capsys):
        d = tmp_path / "t" / "v" / "0"
        d.mkdir(parents=True)
        (d / "run.csv").write_text("episode,ret_mean\ngarbage\n")
        rows, _, _ = cli.aggregate_report(str(tmp_path), resamples=100)
        assert rows == []
        assert "skipping" in capsys.readouterr().err

    def test_report_empty_dir_nonzero_exit(self, tmp_path):
        assert run_cli("report", "--outdir", str(tmp_path)) == 1


def test_module_invocation_smoke(tmp_path):
    env = dict(os.environ, PYTHONPATH="src")
    out = subprocess.run(
        [sys.executable, "-m", "decoupled_rl.cli", "solve",
         "--set", "env.name=deepsea", "--set", "env.size=10"],
        capture_output=True, text=True, env=env, cwd=os.path.dirname(os.path.dirname(__file__)),
    )
    assert out.returncode == 0
    assert "0.99" in out.stdout
