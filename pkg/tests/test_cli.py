#!/usr/bin/env python
import unittest
import pytest
from noisyst.cli import main, EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG
from noisyst.display import read_pgm
from noisyst.report import MetricsReport
from contextlib import redirect_stdout
import io
import os
import tempfile

import logging
logging.disable(logging.ERROR)

TINY_RUN = """
[run]
name = tiny
seeds = 1
experiment = {experiment}

[model]
embed_dim = 8
hidden_dim = 8
max_decode_len = 4

[train]
max_updates = 6
batch_size = 16
valid_interval = 3
lr = 0.01
warmup_steps = 0

[data]
unlabeled_size = 20

[selftrain]
pt_data = parallel
pt_target = real

[decode]
mode = greedy
max_len = 4

[noise]
kind = operand_swap
"""


def call(*args):
    out = io.StringIO()
    with redirect_stdout(out):
        code = main(list(args))
    return code, out.getvalue()


class Test(unittest.TestCase):

    @classmethod
    def setup_class(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name
        self.configs = {}
        for experiment in ("selftrain", "baseline"):
            path = os.path.join(self.dir, f"tiny_{experiment}.ini")
            with open(path, "w") as f:
                f.write(TINY_RUN.format(experiment=experiment))
            self.configs[experiment] = path
        code, out = call("gen-toy", "--seed", "1", "--out", os.path.join(self.dir, "toy"))
        assert code == EXIT_OK
        self.gen_lines = out.splitlines()

    @classmethod
    def teardown_class(self):
        self.tmp.cleanup()

    def test_gen_toy(self):
        names = [line.split("\t")[0] for line in self.gen_lines]
        assert names == ["train", "valid", "test", "unlabeled"]
        with open(os.path.join(self.dir, "toy", "train.tsv")) as f:
            assert len(f.read().splitlines()) == 250
        with open(os.path.join(self.dir, "toy", "unlabeled.tsv")) as f:
            lines = f.read().splitlines()
        assert len(lines) == 4000
        assert "\t" not in lines[0]

    def test_run_writes_outputs(self):
        out_dir = os.path.join(self.dir, "out_a")
        code, out = call("run", self.configs["selftrain"], "--output-dir", out_dir)
        assert code == EXIT_OK
        run_dir = os.path.join(out_dir, "tiny", "seed-1")
        assert out.strip() == run_dir
        for name in ("metrics.csv", "summary.txt", "timing.log"):
            assert os.path.exists(os.path.join(run_dir, name))
        for it, stage in ((0, "baseline"), (1, "pt"), (1, "ft")):
            base = os.path.join(run_dir, str(it))
            assert os.path.exists(os.path.join(base, f"{stage}.ckpt"))
            assert os.path.exists(os.path.join(base, f"{stage}_grid.csv"))
            assert read_pgm(os.path.join(base, f"{stage}_grid.pgm")).shape == (100, 100)
        assert os.path.exists(os.path.join(run_dir, "1", "pseudo.tsv"))

        report = MetricsReport.from_csv(os.path.join(run_dir, "metrics.csv"))
        assert report.stages() == [(0, "baseline"), (1, "PT"), (1, "FT")]
        assert report.run == "tiny"
        assert report.seed == 1
        for r in report.records:
            assert 0 <= r["failure_rate"] <= 1
            assert r["test_error"] >= 0
        with open(os.path.join(run_dir, "summary.txt")) as f:
            summary = f.read()
        assert summary.startswith("run: tiny\nseed: 1\n")
        rows = [line.split()[:2] for line in summary.splitlines()[5:]]
        assert rows == [["0", "baseline"], ["1", "PT"], ["1", "FT"]]
        with open(os.path.join(run_dir, "timing.log")) as f:
            assert f.read().splitlines()[-1].startswith("total\t")

    def test_run_is_reproducible(self):
        csvs = []
        for name in ("out_b", "out_c"):
            out_dir = os.path.join(self.dir, name)
            code, _ = call("run", self.configs["selftrain"], "--output-dir", out_dir)
            assert code == EXIT_OK
            with open(os.path.join(out_dir, "tiny", "seed-1", "metrics.csv"), "rb") as f:
                csvs.append(f.read())
        assert csvs[0] == csvs[1]
        grids = []
        for name in ("out_b", "out_c"):
            path = os.path.join(self.dir, name, "tiny", "seed-1", "1", "ft_grid.pgm")
            with open(path, "rb") as f:
                grids.append(f.read())
        assert grids[0] == grids[1]

    def test_baseline_experiment_and_compare(self):
        out_dir = os.path.join(self.dir, "out_d")
        code, out = call(
            "run", self.configs["baseline"], "--output-dir", out_dir, "--seeds", "1,2"
        )
        assert code == EXIT_OK
        run_dirs = out.splitlines()
        assert [os.path.basename(d) for d in run_dirs] == ["seed-1", "seed-2"]
        assert not os.path.exists(os.path.join(run_dirs[0], "1"))
        csvs = [os.path.join(d, "metrics.csv") for d in run_dirs]
        assert MetricsReport.from_csv(csvs[0]).stages() == [(0, "baseline")]

        code, table = call("compare", *csvs)
        assert code == EXIT_OK
        header, rule, row = table.splitlines()[:3]
        assert set(rule.replace(" ", "")) == {"-"}
        assert header.split()[:3] == ["run", "n_seeds", "test_error"]
        assert row.split()[:2] == ["tiny", "2"]

    def test_noise_preview(self):
        train = os.path.join(self.dir, "toy", "train.tsv")
        code, out = call("noise-preview", train, "toy_noisyst", "-n", "6")
        assert code == EXIT_OK
        lines = out.splitlines()
        assert len(lines) == 6
        for line in lines:
            src, noisy = line.split("\t")
            a, b = src.split(" <sep> ")
            assert noisy in (src, f"{b} <sep> {a}")
        assert call("noise-preview", train, "toy_noisyst", "-n", "6")[1] == out
        other = call("noise-preview", train, "toy_noisyst", "-n", "6", "--epoch", "3")[1]
        assert [line.split("\t")[0] for line in other.splitlines()] == [
            line.split("\t")[0] for line in lines
        ]

    def test_config_errors_exit_2(self):
        assert call("run", os.path.join(self.dir, "missing.ini"))[0] == EXIT_CONFIG
        bad = os.path.join(self.dir, "bad.ini")
        with open(bad, "w") as f:
            f.write(TINY_RUN.format(experiment="selftrain") + "\n[model]\nlayers = 2\n")
        assert call("run", bad)[0] == EXIT_CONFIG
        with open(bad, "w") as f:
            f.write(TINY_RUN.format(experiment="distill"))
        assert call("run", bad)[0] == EXIT_CONFIG

    def test_runtime_error_exit_1(self):
        broken = os.path.join(self.dir, "broken.tsv")
        with open(broken, "w") as f:
            f.write("1 2\t3\n4 5 6\n")
        config = os.path.join(self.dir, "corpus.ini")
        with open(config, "w") as f:
            f.write(
                "[run]\nname = broken\ntask = corpus\n"
                f"output_dir = {os.path.join(self.dir, 'out_e')}\n"
                f"[data]\ntrain = {broken}\n"
            )
        assert call("run", config)[0] == EXIT_RUNTIME

    def test_missing_files_exit_1(self):
        missing = os.path.join(self.dir, "no_such_metrics.csv")
        assert call("compare", missing)[0] == EXIT_RUNTIME
        assert call("noise-preview", missing, "toy_noisyst")[0] == EXIT_RUNTIME

    def test_usage_errors(self):
        with pytest.raises(SystemExit):
            call()
        with pytest.raises(SystemExit):
            call("run", self.configs["selftrain"], "--seeds", "one")
        with pytest.raises(SystemExit):
            call("-v", "-q", "gen-toy", "--seed", "1", "--out", self.dir)
