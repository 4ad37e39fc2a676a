from .exceptions import UsageError
from .vocab import Vocabulary, ParallelExample
from collections import OrderedDict
import numpy as np
import pathlib
import json


serializers = {
    np.float64: float,
    np.float32: float,
    np.int64: int,
    np.int32: int,
    np.bool_: int,
    np.ndarray: lambda obj: [serialize(x) for x in obj.tolist()],
    list: lambda obj: list(serialize(x) for x in obj),
    tuple: lambda obj: tuple(serialize(x) for x in obj),
    dict: lambda obj: {k: serialize(v) for k, v in obj.items()},
    OrderedDict: lambda obj: OrderedDict((k, serialize(v)) for k, v in obj.items()),
    bool: int,
}


def serialize(obj):
    if obj is None:
        return None

    t = type(obj)

    # Basic types don't need to be converted
    if t in (int, float, str):
        return obj

    fn = serializers.get(t)
    if fn is not None:
        return fn(obj)
    else:
        return str(obj)


def to_json(obj, stream=None, indent=None):
    serialized = serialize(obj)
    if stream is None:
        return json.dumps(serialized, indent=indent, sort_keys=True)
    else:
        return json.dump(serialized, stream, indent=indent, sort_keys=True)


class Corpus(object):
    """
    A parsed TSV corpus. `examples` holds ParallelExamples for parallel
    files and bare source sequences for unlabeled ones; `line_numbers`
    maps each example back to its 1-based line.
    """

    def __init__(self, examples, vocab, line_numbers, parallel, confidences=None):
        self.examples = examples
        self.vocab = vocab
        self.line_numbers = line_numbers
        self.parallel = parallel
        self.confidences = confidences

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @property
    def sources(self):
        if self.parallel:
            return [ex.source for ex in self.examples]
        return list(self.examples)


def read_tsv(path, parallel=None):
    """
    Returns (rows, line_numbers, confidences, parallel) where each row is
    a list of token lists. Blank lines are skipped; any other malformed
    line raises UsageError naming it.
    """
    rows, line_numbers, confidences = [], [], []
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            cols = line.split("\t")
            if parallel is None:
                parallel = len(cols) > 1
            if parallel and len(cols) not in (2, 3):
                raise UsageError(f"{path}:{n}: expected source<TAB>target")
            if not parallel and len(cols) != 1:
                raise UsageError(f"{path}:{n}: unlabeled lines must not contain a tab")
            tokens = [c.split() for c in cols[:2]]
            if any(len(t) == 0 for t in tokens):
                raise UsageError(f"{path}:{n}: empty source or target")
            if len(cols) == 3:
                try:
                    confidences.append(float(cols[2]))
                except ValueError:
                    raise UsageError(f"{path}:{n}: confidence is not a number")
            rows.append(tokens)
            line_numbers.append(n)
    if not rows:
        raise UsageError(f"{path} is empty")
    if confidences and len(confidences) != len(rows):
        raise UsageError(f"{path}: confidence column present on some lines only")
    return rows, line_numbers, confidences or None, bool(parallel)


def ingest_corpus(path, vocab=None, parallel=None):
    """
    Reads a corpus TSV. Without `vocab`, a vocabulary is built from the
    file's tokens (reserved tokens first); with one, unseen tokens are
    added to it.
    """
    rows, line_numbers, confidences, parallel = read_tsv(path, parallel)
    if vocab is None:
        vocab = Vocabulary.from_corpus(t for row in rows for t in row)
    else:
        for row in rows:
            for tokens in row:
                for t in tokens:
                    vocab.add(t)
    if parallel:
        examples = [ParallelExample(vocab.encode(s), vocab.encode(t)) for s, t in rows]
    else:
        examples = [vocab.encode(row[0]) for row in rows]
    return Corpus(examples, vocab, line_numbers, parallel, confidences)


def format_example(example, vocab, confidence=None):
    if isinstance(example, ParallelExample):
        cols = [" ".join(vocab.decode(example.source)), " ".join(vocab.decode(example.target))]
    else:
        cols = [" ".join(vocab.decode(example))]
    if confidence is not None:
        cols.append(repr(float(confidence)))
    return "\t".join(cols)


def write_corpus(path, examples, vocab, confidences=None):
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    confidences = confidences if confidences is not None else [None] * len(examples)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ex, conf in zip(examples, confidences):
            f.write(format_example(ex, vocab, conf) + "\n")
    return path
