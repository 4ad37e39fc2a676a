from . import utils
from .convert import serialize
from .exceptions import UsageError
from collections import OrderedDict
from io import StringIO
import csv

STAGES = ["baseline", "PT", "FT", "joint"]

KEY_COLUMNS = ["run", "seed", "config_hash", "iteration", "stage"]

METRIC_FIELDS = [
    "train_loss",
    "valid_loss",
    "test_loss",
    "test_error",
    "smoothness",
    "symmetry",
    "failure_rate",
    "n_pseudo",
    "n_selected",
]

COLUMNS = KEY_COLUMNS + METRIC_FIELDS

INT_FIELDS = ["seed", "iteration", "n_pseudo", "n_selected"]

COMPARE_VIEWS = ["final", "first_iteration"]

# Columns shown by compare_runs, in order.
COMPARE_FIELDS = [
    "test_error",
    "smoothness",
    "symmetry",
    "failure_rate",
    "test_loss",
    "valid_loss",
]


class MetricsReport(object):
    """
    Append-only list of per-stage records. Each record is a dict over
    COLUMNS plus `wall_time`, which is kept out of the CSV so that data
    files stay deterministic.
    """

    def __init__(self, run="run", seed=0, config_hash=""):
        self.run = run
        self.seed = seed
        self.config_hash = config_hash
        self._records = []

    def add(self, iteration, stage, wall_time=None, **metrics):
        if stage not in STAGES:
            raise UsageError(f"stage must be one of {STAGES}, got {stage!r}")
        for k in metrics:
            if k not in METRIC_FIELDS:
                raise UsageError(f"{k} is not a valid metrics field")
        record = OrderedDict(
            [
                ("run", self.run),
                ("seed", self.seed),
                ("config_hash", self.config_hash),
                ("iteration", iteration),
                ("stage", stage),
            ]
        )
        for k in METRIC_FIELDS:
            record[k] = metrics.get(k)
        record["wall_time"] = wall_time
        self._records.append(record)
        return dict(record)

    @property
    def records(self):
        return [dict(r) for r in self._records]

    def __len__(self):
        return len(self._records)

    def stages(self):
        return [(r["iteration"], r["stage"]) for r in self._records]

    def find(self, iteration, stage):
        for r in self._records:
            if r["iteration"] == iteration and r["stage"] == stage:
                return dict(r)
        return None

    def to_csv(self, stream=None):
        if stream is None:
            stream = StringIO()
            to_string = True
        else:
            to_string = False
        w = csv.DictWriter(stream, fieldnames=COLUMNS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(serialize(self._records))
        if to_string:
            stream.seek(0)
            return stream.read()

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != COLUMNS:
                raise UsageError(
                    f"{path} does not have the metrics schema "
                    f"(got columns {reader.fieldnames})"
                )
            rows = list(reader)
        if not rows:
            raise UsageError(f"{path} has no records")
        report = cls(rows[0]["run"], int(rows[0]["seed"]), rows[0]["config_hash"])
        for row in rows:
            metrics = {k: _parse_value(k, row[k]) for k in METRIC_FIELDS}
            report.add(int(row["iteration"]), row["stage"], **metrics)
        return report

    def summary_table(self):
        return format_table(self._records, ["iteration", "stage"] + METRIC_FIELDS)


def _parse_value(key, text):
    if text == "":
        return None
    if key in INT_FIELDS:
        return int(text)
    return float(text)


def view_record(report, view="final"):
    """
    Collapses one run's report into a single row. `final` takes the last
    record. `first_iteration` takes smoothness and symmetry from the first
    PT record and everything else from the first FT (or joint) record,
    falling back to the baseline record.
    """
    if view not in COMPARE_VIEWS:
        raise UsageError(f"view must be one of {COMPARE_VIEWS}")
    if view == "final":
        return report.records[-1]
    row = report.find(1, "FT") or report.find(1, "joint") or report.find(0, "baseline")
    if row is None:
        raise UsageError(f"Run {report.run} has no first-iteration records")
    pt = report.find(1, "PT")
    if pt is not None:
        row["smoothness"] = pt["smoothness"]
        row["symmetry"] = pt["symmetry"]
    return row


def compare_runs(paths, view="final"):
    """
    One row per run name; metric columns hold the median over the seeds
    sharing that name.
    """
    groups = OrderedDict()
    for path in paths:
        report = MetricsReport.from_csv(path)
        groups.setdefault(report.run, []).append(view_record(report, view))

    rows = []
    for run, recs in groups.items():
        row = OrderedDict([("run", run), ("n_seeds", len(recs))])
        for k in COMPARE_FIELDS:
            row[k] = utils.median(r[k] for r in recs)
        rows.append(row)
    return rows


def _format_cell(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def format_table(rows, columns):
    cells = [[str(c) for c in columns]]
    cells += [[_format_cell(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = []
    for n, row in enumerate(cells):
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
