from .checkpoint import load_checkpoint
from .config import RunConfig, load_config
from .convert import ingest_corpus
from .decoding import DecodeSpec, decode_all
from .display import save_stage_grid
from .exceptions import ConfigError, UsageError
from .model import ModelConfig
from .report import MetricsReport
from .selftrain import ExperimentPlan, SelfTrainer
from .train import evaluate_loss
from . import toysum
import pathlib
import time
import logging

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
SUMMARY_FILE = "summary.txt"
TIMING_FILE = "timing.log"


class ToyEvaluator(object):
    """
    Greedy-decodes the whole grid after every stage, reports the toy
    metrics and writes the stage's grid CSV and heat map.
    """

    def __init__(self, split, out_dir=None, max_len=8):
        self.split = split
        self.test = split.test
        self.test_points = split.points("test")
        self.out_dir = pathlib.Path(out_dir) if out_dir is not None else None
        self.max_len = max_len

    def __call__(self, params, stage, iteration):
        grid = toysum.predict_grid(params, self.max_len)
        if self.out_dir is not None:
            save_stage_grid(self.out_dir / str(iteration), f"{stage.lower()}_grid", grid)
        return dict(
            test_loss=evaluate_loss(params, self.test),
            test_error=toysum.mean_test_error(grid, self.test_points),
            smoothness=toysum.smoothness(grid),
            symmetry=toysum.symmetry(grid),
            failure_rate=toysum.failure_rate(grid),
        )


class CorpusEvaluator(object):
    """
    Test loss plus exact-match error (1 - accuracy) of greedy outputs;
    failure_rate is the share of empty outputs.
    """

    def __init__(self, test, max_len=8):
        self.test = list(test)
        self.spec = DecodeSpec(mode="greedy", max_len=max_len)

    def __call__(self, params, stage, iteration):
        if not self.test:
            return {}
        hyps = decode_all(params, [ex.source for ex in self.test], self.spec)
        exact = sum(h.sequence == tuple(ex.target) for h, ex in zip(hyps, self.test))
        empty = sum(len(h.sequence) == 0 for h in hyps)
        n = len(self.test)
        return dict(
            test_loss=evaluate_loss(params, self.test),
            test_error=1.0 - exact / n,
            failure_rate=empty / n,
        )


class RunData(object):
    def __init__(self, vocab, parallel, valid, test, unlabeled, evaluator):
        self.vocab = vocab
        self.parallel = parallel
        self.valid = valid
        self.test = test
        self.unlabeled = unlabeled
        self.evaluator = evaluator


def load_toy_data(config, seed, run_dir):
    split = toysum.gen_toy_dataset(seed)
    size = config["data"]["unlabeled_size"]
    max_len = config["model"]["max_decode_len"]
    return RunData(
        toysum.TOY_VOCAB,
        split.train,
        split.valid,
        split.test,
        split.unlabeled[:size],
        ToyEvaluator(split, run_dir, max_len),
    )


def load_corpus_data(config):
    data = config["data"]
    train = ingest_corpus(data["train"], parallel=True)
    vocab = train.vocab
    valid = ingest_corpus(data["valid"], vocab, parallel=True).examples if data["valid"] else []
    test = ingest_corpus(data["test"], vocab, parallel=True).examples if data["test"] else []
    unlabeled = (
        ingest_corpus(data["unlabeled"], vocab, parallel=False).examples
        if data["unlabeled"]
        else []
    )
    evaluator = CorpusEvaluator(test, config["model"]["max_decode_len"])
    return RunData(vocab, train.examples, valid, test, unlabeled, evaluator)


def _initial_baseline(config, model_config):
    path = config["run"]["init_checkpoint"]
    if not path:
        return None
    params, meta = load_checkpoint(path)
    if params.config.vocab_size != model_config.vocab_size:
        raise ConfigError(
            f"{path} has vocab_size {params.config.vocab_size}, "
            f"the data needs {model_config.vocab_size}"
        )
    logger.info("Starting from checkpoint %s (%s)", path, meta["fingerprint"])
    return params


def write_timing(path, report, total):
    lines = [
        f"{r['iteration']}\t{r['stage']}\t{r['wall_time']:.3f}"
        for r in report.records
        if r["wall_time"] is not None
    ]
    lines.append(f"total\t-\t{total:.3f}")
    pathlib.Path(path).write_text("\n".join(lines) + "\n")


def write_summary(path, report):
    header = [
        f"run: {report.run}",
        f"seed: {report.seed}",
        f"config_hash: {report.config_hash}",
        "",
    ]
    pathlib.Path(path).write_text("\n".join(header) + report.summary_table())


def run_seed(config, seed):
    """
    Executes one config for one master seed. Writes metrics.csv,
    summary.txt, timing.log, per-stage checkpoints and (toy task) grid
    CSVs and heat maps under the seed's run directory.
    """
    started = time.perf_counter()
    run_dir = config.run_dir(seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    logger.info("Running %s seed %d into %s", config.name, seed, run_dir)

    if config.task == "toy":
        data = load_toy_data(config, seed, run_dir)
    else:
        data = load_corpus_data(config)

    model_config = ModelConfig(vocab_size=len(data.vocab), **config.model_settings())
    plan = ExperimentPlan(**config.plan_settings(seed))
    report = MetricsReport(config.name, seed, config.config_hash())
    trainer = SelfTrainer(plan, model_config, data.evaluator, report, run_dir, data.vocab)
    baseline = _initial_baseline(config, model_config)

    if config.experiment == "baseline":
        trainer.run_baseline(data.parallel, data.valid, baseline)
    else:
        trainer.run(data.parallel, data.unlabeled, data.valid, baseline)

    with open(run_dir / METRICS_FILE, "w", newline="") as f:
        report.to_csv(f)
    write_summary(run_dir / SUMMARY_FILE, report)
    total = time.perf_counter() - started
    write_timing(run_dir / TIMING_FILE, report, total)
    logger.info("Finished %s seed %d in %.1fs", config.name, seed, total)
    return run_dir


def run(config, seeds=None):
    """
    Runs every sweep point of `config` (a RunConfig, a path or a bundled
    config name) for every seed. Returns the run directories.
    """
    if not isinstance(config, RunConfig):
        config = load_config(config)
    run_dirs = []
    for point in config.expand():
        for seed in seeds if seeds is not None else point.seeds:
            if seed < 0:
                raise UsageError(f"Seeds must be non-negative, got {seed}")
            run_dirs.append(run_seed(point, seed))
    return run_dirs
