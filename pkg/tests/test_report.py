#!/usr/bin/env python
import unittest
import pytest
from noisyst.report import (
    MetricsReport,
    COLUMNS,
    compare_runs,
    view_record,
    format_table,
)
from noisyst.exceptions import UsageError
import tempfile
import os

import logging
logging.disable(logging.ERROR)


def make_report(run, seed, base_error):
    r = MetricsReport(run, seed, "abc123def456")
    r.add(0, "baseline", wall_time=1.5, train_loss=1.0, valid_loss=1.2, test_error=base_error,
          smoothness=9.0, symmetry=9.5)
    r.add(1, "PT", wall_time=2.0, smoothness=7.0, symmetry=8.0, test_error=base_error + 5,
          n_pseudo=40, n_selected=20)
    r.add(1, "FT", wall_time=0.5, smoothness=8.0, symmetry=8.5, test_error=base_error - 2,
          n_pseudo=40, n_selected=20)
    return r


class Test(unittest.TestCase):

    @classmethod
    def setup_class(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.paths = []
        for seed, err in [(1, 7.0), (2, 5.0), (3, 9.0)]:
            path = os.path.join(self.tmp.name, f"st-{seed}.csv")
            with open(path, "w", newline="") as f:
                make_report("st", seed, err).to_csv(f)
            self.paths.append(path)

    @classmethod
    def teardown_class(self):
        self.tmp.cleanup()

    def test_columns(self):
        text = make_report("st", 1, 7.0).to_csv()
        lines = text.split("\n")
        assert lines[0] == ",".join(COLUMNS)
        assert "wall_time" not in lines[0]
        assert lines[1].startswith("st,1,abc123def456,0,baseline,1.0,1.2,,7.0,9.0,9.5,,,")
        assert text.endswith("\n")

    def test_records(self):
        r = make_report("st", 1, 7.0)
        assert len(r) == 3
        assert r.stages() == [(0, "baseline"), (1, "PT"), (1, "FT")]
        assert r.find(1, "PT")["n_selected"] == 20
        assert r.find(2, "PT") is None
        assert r.records[0]["wall_time"] == 1.5

    def test_invalid_records(self):
        r = MetricsReport()
        with pytest.raises(UsageError):
            r.add(0, "warmup")
        with pytest.raises(UsageError):
            r.add(0, "baseline", bleu=3.0)

    def test_csv_round_trip(self):
        r = MetricsReport.from_csv(self.paths[0])
        assert r.run == "st"
        assert r.seed == 1
        assert r.to_csv() == make_report("st", 1, 7.0).to_csv()

    def test_schema_mismatch(self):
        path = os.path.join(self.tmp.name, "other.csv")
        with open(path, "w") as f:
            f.write("run,seed,score\nx,1,2\n")
        with pytest.raises(UsageError):
            compare_runs([path])

    def test_compare_single_run(self):
        rows = compare_runs(self.paths[:1])
        assert len(rows) == 1
        assert rows[0]["run"] == "st"
        assert rows[0]["n_seeds"] == 1
        assert rows[0]["test_error"] == 5.0

    def test_compare_median(self):
        rows = compare_runs(self.paths)
        assert rows[0]["n_seeds"] == 3
        assert rows[0]["test_error"] == 5.0
        assert rows[0]["smoothness"] == 8.0

    def test_first_iteration_view(self):
        row = view_record(MetricsReport.from_csv(self.paths[0]), "first_iteration")
        assert row["stage"] == "FT"
        assert row["test_error"] == 5.0
        assert row["smoothness"] == 7.0
        assert row["symmetry"] == 8.0
        with pytest.raises(UsageError):
            view_record(MetricsReport.from_csv(self.paths[0]), "best")

    def test_format_table(self):
        text = format_table([{"run": "a", "x": 1.23456, "y": None}], ["run", "x", "y"])
        lines = text.splitlines()
        assert len(lines) == 3
        assert lines[2].split() == ["a", "1.2346", "-"]

    def test_summary_table(self):
        text = make_report("st", 1, 7.0).summary_table()
        assert "baseline" in text
        assert len(text.splitlines()) == 5
