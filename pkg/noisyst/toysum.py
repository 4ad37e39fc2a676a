from .decoding import DecodeSpec, greedy_decode_batch
from .exceptions import UsageError
from .vocab import Vocabulary, ParallelExample, SEP, EOS
from collections import OrderedDict
import numpy as np
import pathlib
import csv

GRID_SIZE = 100
MAX_OPERAND = GRID_SIZE - 1
MAX_SUM = 2 * MAX_OPERAND
MAX_DIGITS = 3

SPLIT_NAMES = ["train", "valid", "test", "unlabeled"]
SPLIT_SIZES = OrderedDict([("train", 250), ("valid", 100), ("test", 5000), ("unlabeled", 4000)])

# Error charged for an unparseable prediction: half the largest possible error.
FAILURE_PENALTY = 100
GRID_FIELDS = ["x1", "x2", "predicted", "error", "failed"]

DIGITS = [str(d) for d in range(10)]


def toy_vocabulary():
    return Vocabulary(DIGITS)


TOY_VOCAB = toy_vocabulary()
DIGIT_IDS = {TOY_VOCAB.token_to_id(d): d for d in DIGITS}


def _check_operand(x, upper=MAX_OPERAND):
    if isinstance(x, bool) or not isinstance(x, (int, np.integer)) or not 0 <= x <= upper:
        raise UsageError(f"Expected an integer in [0, {upper}], got {x!r}")
    return int(x)


def encode_number(n):
    return tuple(TOY_VOCAB.token_to_id(ch) for ch in str(n))


def encode_pair(x1, x2):
    """
    Digits of x1, SEP, digits of x2; no zero padding.
    """
    return encode_number(_check_operand(x1)) + (SEP,) + encode_number(_check_operand(x2))


def encode_sum(s):
    return encode_number(_check_operand(s, MAX_SUM))


def parse_prediction(seq):
    """
    Returns the integer spelled by `seq` (up to its first EOS), or None
    for empty outputs, non-digit tokens or more than three digits.
    """
    digits = []
    for i in seq:
        if i == EOS:
            break
        d = DIGIT_IDS.get(int(i))
        if d is None:
            return None
        digits.append(d)
    if not digits or len(digits) > MAX_DIGITS:
        return None
    return int("".join(digits))


class ToySplit(object):
    """
    Disjoint index sets over the 100x100 grid of operand pairs; grid point
    i is (i // 100, i % 100).
    """

    def __init__(self, indices, seed=None):
        self.indices = OrderedDict((k, np.asarray(v, dtype=np.int64)) for k, v in indices.items())
        self.seed = seed

    def __getitem__(self, name):
        return self.points(name)

    def points(self, name):
        idx = self.indices[name]
        return np.stack([idx // GRID_SIZE, idx % GRID_SIZE], axis=1)

    def sizes(self):
        return tuple(len(self.indices[k]) for k in SPLIT_NAMES)

    def examples(self, name):
        return [
            ParallelExample(encode_pair(int(a), int(b)), encode_sum(int(a + b)))
            for a, b in self.points(name)
        ]

    def sources(self, name):
        return [encode_pair(int(a), int(b)) for a, b in self.points(name)]

    @property
    def train(self):
        return self.examples("train")

    @property
    def valid(self):
        return self.examples("valid")

    @property
    def test(self):
        return self.examples("test")

    @property
    def unlabeled(self):
        return self.sources("unlabeled")


def gen_toy_dataset(seed, sizes=None):
    sizes = OrderedDict(SPLIT_SIZES if sizes is None else sizes)
    if sum(sizes.values()) > GRID_SIZE * GRID_SIZE:
        raise UsageError("Split sizes exceed the grid")
    order = np.random.default_rng(seed).permutation(GRID_SIZE * GRID_SIZE)
    indices = OrderedDict()
    start = 0
    for name, n in sizes.items():
        indices[name] = order[start : start + n]
        start += n
    indices["remainder"] = order[start:]
    return ToySplit(indices, seed)


class GridPrediction(object):
    """
    Parsed predictions at every grid point. `values[x1, x2]` is the
    predicted integer (meaningless where `failed` is set).
    """

    def __init__(self, values, failed):
        self.values = np.asarray(values, dtype=np.int64)
        self.failed = np.asarray(failed, dtype=bool)
        if self.values.shape != (GRID_SIZE, GRID_SIZE) or self.failed.shape != self.values.shape:
            raise UsageError("A grid prediction must cover the full 100x100 grid")

    @classmethod
    def from_function(cls, fn):
        values = np.zeros((GRID_SIZE, GRID_SIZE), dtype=np.int64)
        failed = np.zeros((GRID_SIZE, GRID_SIZE), dtype=bool)
        for a in range(GRID_SIZE):
            for b in range(GRID_SIZE):
                v = fn(a, b)
                if v is None:
                    failed[a, b] = True
                else:
                    values[a, b] = v
        return cls(values, failed)

    @classmethod
    def from_outputs(cls, outputs):
        """
        `outputs` holds 10000 token sequences in row-major grid order.
        """
        parsed = [parse_prediction(seq) for seq in outputs]
        failed = np.array([p is None for p in parsed]).reshape(GRID_SIZE, GRID_SIZE)
        values = np.array([0 if p is None else p for p in parsed]).reshape(GRID_SIZE, GRID_SIZE)
        return cls(values, failed)

    def transpose(self):
        return GridPrediction(self.values.T, self.failed.T)

    def __eq__(self, other):
        return (
            isinstance(other, GridPrediction)
            and np.array_equal(self.failed, other.failed)
            and np.array_equal(
                np.where(self.failed, 0, self.values), np.where(other.failed, 0, other.values)
            )
        )


def grid_sources():
    return [encode_pair(a, b) for a in range(GRID_SIZE) for b in range(GRID_SIZE)]


def predict_grid(params, max_len=8, batch_size=2500):
    """
    Greedy decoding at all 10000 grid points.
    """
    spec = DecodeSpec(mode="greedy", max_len=max_len)
    sources = grid_sources()
    outputs = []
    for start in range(0, len(sources), batch_size):
        hyps = greedy_decode_batch(params, sources[start : start + batch_size], spec)
        outputs += [h.sequence for h in hyps]
    return GridPrediction.from_outputs(outputs)


def true_sums():
    r = np.arange(GRID_SIZE)
    return np.add.outer(r, r)


def error_heatmap(grid, penalty=FAILURE_PENALTY):
    err = np.abs(grid.values - true_sums()).astype(np.float64)
    err[grid.failed] = penalty
    return err


def mean_test_error(grid, test_points, penalty=FAILURE_PENALTY):
    pts = np.asarray(test_points)
    return float(error_heatmap(grid, penalty)[pts[:, 0], pts[:, 1]].mean())


def failure_rate(grid, points=None):
    if points is None:
        return float(grid.failed.mean())
    pts = np.asarray(points)
    return float(grid.failed[pts[:, 0], pts[:, 1]].mean())


def _neighborhood_views(arr, fill):
    padded = np.pad(arr, 1, mode="constant", constant_values=fill)
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            yield padded[1 + dx : 1 + dx + GRID_SIZE, 1 + dy : 1 + dy + GRID_SIZE]


def smoothness(grid):
    """
    Population standard deviation of the parseable predictions in each
    point's 3x3 neighborhood (clipped at the border), averaged over the
    grid. Neighborhoods with fewer than two parseable values count as 0.
    """
    vals = grid.values.astype(np.float64)
    ok = ~grid.failed
    counts = sum(v.astype(np.float64) for v in _neighborhood_views(ok, False))
    sums = sum(
        np.where(m, v, 0.0)
        for v, m in zip(_neighborhood_views(vals, 0.0), _neighborhood_views(ok, False))
    )
    mean = sums / np.maximum(counts, 1.0)
    sq = sum(
        np.where(m, (v - mean) ** 2, 0.0)
        for v, m in zip(_neighborhood_views(vals, 0.0), _neighborhood_views(ok, False))
    )
    sd = np.where(counts >= 2, np.sqrt(sq / np.maximum(counts, 1.0)), 0.0)
    return float(sd.mean())


def symmetry(grid, penalty=FAILURE_PENALTY):
    """
    Mean |f(x1, x2) - f(x2, x1)| over the grid; a pair with a parse
    failure on either side counts as `penalty`, the diagonal as 0.
    """
    diff = np.abs(grid.values - grid.values.T).astype(np.float64)
    diff[grid.failed | grid.failed.T] = penalty
    np.fill_diagonal(diff, 0.0)
    return float(diff.mean())


def grid_rows(grid, penalty=FAILURE_PENALTY):
    err = error_heatmap(grid, penalty)
    for a in range(GRID_SIZE):
        for b in range(GRID_SIZE):
            failed = bool(grid.failed[a, b])
            yield OrderedDict(
                [
                    ("x1", a),
                    ("x2", b),
                    ("predicted", None if failed else int(grid.values[a, b])),
                    ("error", float(err[a, b])),
                    ("failed", int(failed)),
                ]
            )


def write_grid_csv(path, grid, penalty=FAILURE_PENALTY):
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=GRID_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(grid_rows(grid, penalty))
    return path


def read_grid_csv(path):
    values = np.zeros((GRID_SIZE, GRID_SIZE), dtype=np.int64)
    failed = np.zeros((GRID_SIZE, GRID_SIZE), dtype=bool)
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            a, b = int(row["x1"]), int(row["x2"])
            failed[a, b] = row["failed"] == "1"
            values[a, b] = int(row["predicted"]) if row["predicted"] else 0
    return GridPrediction(values, failed)


def write_toy_corpus(out_dir, split):
    """
    Writes train/valid/test as parallel TSV and unlabeled as source-only
    TSV, all in the toy vocabulary's token strings.
    """
    from .convert import write_corpus

    out_dir = pathlib.Path(out_dir)
    paths = OrderedDict()
    for name in ["train", "valid", "test"]:
        paths[name] = write_corpus(out_dir / f"{name}.tsv", split.examples(name), TOY_VOCAB)
    paths["unlabeled"] = write_corpus(
        out_dir / "unlabeled.tsv", split.sources("unlabeled"), TOY_VOCAB
    )
    return paths
