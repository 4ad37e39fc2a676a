from . import utils
from .checkpoint import save_checkpoint
from .convert import write_corpus
from .decoding import DecodeSpec, decode_all
from .exceptions import ConfigError, UsageError, NoisySTError, StageError
from .model import ModelConfig, ModelParams, init_params
from .noise import NoiseSpec, make_perturber
from .report import MetricsReport
from .train import TrainSchedule, train, evaluate_loss
from .vocab import ParallelExample
import numpy as np
import pathlib
import time
import math
import logging

logger = logging.getLogger(__name__)

INIT_MODES = ["scratch", "baseline", "previous"]
REGIMES = ["separate", "joint"]
PT_TARGETS = ["fake", "real"]
PT_DATA = ["unlabeled", "parallel"]

DEFAULT_PLAN_SETTINGS = dict(
    iterations=1,
    init_mode="baseline",
    decode=None,
    pt_dropout=True,
    pt_dropout_rate=None,
    noise=None,
    selection="all",
    regime="separate",
    upsample_ratio=1.0,
    pt_target="fake",
    pt_data="unlabeled",
    confidence_normalize=True,
    baseline_schedule=None,
    pt_schedule=None,
    ft_schedule=None,
    seed=1,
    workers=1,
)


class Selection(object):
    """
    Pseudo-example selection rule: `all`, `top_fraction:<f>` or
    `schedule:<n1>,<n2>,...` (count per iteration; the last count repeats).
    """

    MODES = ["all", "top_fraction", "schedule"]

    def __init__(self, mode="all", fraction=None, counts=None):
        if mode not in self.MODES:
            raise ConfigError(f"selection mode must be one of {self.MODES}")
        self.mode = mode
        self.fraction = fraction
        self.counts = counts
        if mode == "top_fraction" and not (fraction is not None and 0 < fraction <= 1):
            raise ConfigError(f"top_fraction must be in (0, 1], got {fraction}")
        if mode == "schedule":
            if not counts:
                raise ConfigError("A selection schedule needs at least one count")
            self.counts = [utils.check_count("selection count", c) for c in counts]

    @classmethod
    def parse(cls, value):
        if isinstance(value, Selection):
            return value
        text = str(value).strip()
        mode, _, arg = text.partition(":")
        mode = mode.strip()
        try:
            if mode == "top_fraction":
                return cls(mode, fraction=float(arg))
            if mode == "schedule":
                return cls(mode, counts=[int(c) for c in arg.split(",") if c.strip()])
        except ValueError:
            raise ConfigError(f"Cannot parse selection {text!r}")
        if arg:
            raise ConfigError(f"Cannot parse selection {text!r}")
        return cls(mode)

    def count(self, n, iteration=1):
        if self.mode == "all":
            return n
        if self.mode == "top_fraction":
            return min(n, int(math.ceil(self.fraction * n)))
        k = self.counts[min(iteration, len(self.counts)) - 1]
        return min(n, k)

    def __str__(self):
        if self.mode == "top_fraction":
            return f"top_fraction:{self.fraction}"
        if self.mode == "schedule":
            return "schedule:" + ",".join(map(str, self.counts))
        return "all"


class ExperimentPlan(object):
    def __init__(self, **settings):
        utils.apply_settings(self, settings, DEFAULT_PLAN_SETTINGS, "ExperimentPlan")
        self.iterations = utils.check_count("iterations", self.iterations)
        self.workers = utils.check_count("workers", self.workers)
        self.seed = utils.check_count("seed", self.seed, 0)
        for name, allowed in (
            ("init_mode", INIT_MODES),
            ("regime", REGIMES),
            ("pt_target", PT_TARGETS),
            ("pt_data", PT_DATA),
        ):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}")
        if self.regime == "joint" and self.upsample_ratio < 1:
            raise ConfigError("upsample_ratio must be >= 1 for joint training")
        if self.pt_target == "real" and self.pt_data != "parallel":
            raise ConfigError("pt_target=real is only valid with pt_data=parallel")
        if self.pt_dropout_rate is not None:
            utils.check_probability("pt_dropout_rate", self.pt_dropout_rate, False)
        self.decode = _coerce(self.decode, DecodeSpec)
        self.noise = _coerce(self.noise, NoiseSpec)
        self.selection = Selection.parse(self.selection)
        self.baseline_schedule = _coerce(self.baseline_schedule, TrainSchedule)
        self.pt_schedule = _coerce(self.pt_schedule, TrainSchedule)
        self.ft_schedule = _coerce(self.ft_schedule, TrainSchedule)

    def stage_schedule(self, which, iteration):
        base = getattr(self, f"{which}_schedule")
        stage_index = {"baseline": 0, "pt": 1, "ft": 2}[which]
        return base.replace(seed=utils.derive_seed(self.seed, iteration, stage_index))


def _coerce(value, cls):
    if value is None:
        return cls()
    if isinstance(value, dict):
        return cls(**value)
    return value


class PseudoCorpus(object):
    """
    Sources paired with teacher outputs. `indices` point back into the
    list that was labeled; `n_dropped` counts decode failures and
    `n_filtered` the examples removed by selection.
    """

    def __init__(self, examples, confidences, indices, teacher_fingerprint=None,
                 n_dropped=0, n_filtered=0):
        self.examples = list(examples)
        self.confidences = [float(c) for c in confidences]
        self.indices = list(indices)
        self.teacher_fingerprint = teacher_fingerprint
        self.n_dropped = n_dropped
        self.n_filtered = n_filtered
        if not all(np.isfinite(self.confidences)):
            raise UsageError("Pseudo corpus confidences must be finite")

    @classmethod
    def from_parallel(cls, examples):
        """
        Real targets standing in for pseudo targets; confidence 0 each.
        """
        return cls(examples, [0.0] * len(examples), range(len(examples)))

    def __len__(self):
        return len(self.examples)

    @property
    def n_input(self):
        return len(self) + self.n_dropped + self.n_filtered

    def subset(self, keep):
        keep = sorted(keep)
        return PseudoCorpus(
            [self.examples[k] for k in keep],
            [self.confidences[k] for k in keep],
            [self.indices[k] for k in keep],
            self.teacher_fingerprint,
            self.n_dropped,
            self.n_filtered + len(self) - len(keep),
        )

    def write(self, path, vocab):
        return write_corpus(path, self.examples, vocab, self.confidences)


def confidence_of(hyp, normalize=True):
    n = len(hyp.sequence) + (1 if hyp.finished else 0)
    if normalize and n:
        return hyp.logprob / n
    return hyp.logprob


def pseudo_label(teacher, unlabeled, decode_spec, workers=1, normalize=True):
    """
    Decodes one target per source with the frozen teacher. Sources whose
    decoding fails or comes back empty are dropped and counted.
    """
    unlabeled = list(unlabeled)
    hyps = decode_all(teacher, unlabeled, decode_spec, workers=workers, skip_errors=True)
    examples, confidences, indices = [], [], []
    for i, (source, hyp) in enumerate(zip(unlabeled, hyps)):
        if hyp is None or len(hyp.sequence) == 0:
            continue
        conf = confidence_of(hyp, normalize)
        if not np.isfinite(conf):
            continue
        examples.append(ParallelExample(tuple(source), hyp.sequence))
        confidences.append(conf)
        indices.append(i)
    dropped = len(unlabeled) - len(examples)
    if dropped:
        logger.info("Dropped %d of %d sources at decoding", dropped, len(unlabeled))
    return PseudoCorpus(examples, confidences, indices, teacher.fingerprint(), dropped)


def select_subset(corpus, selection, iteration=1):
    """
    Keeps the highest-confidence examples per the selection rule, in their
    original order. Confidence ties go to the lower original index.
    """
    selection = Selection.parse(selection)
    if selection.mode == "all":
        if len(corpus) == 0:
            raise UsageError("Selection produced an empty pseudo corpus")
        return corpus
    k = selection.count(len(corpus), iteration)
    if k == 0:
        raise UsageError("Selection produced an empty pseudo corpus")
    ranked = sorted(
        range(len(corpus)), key=lambda j: (-corpus.confidences[j], corpus.indices[j])
    )
    return corpus.subset(ranked[:k])


def _fresh_or(init, seed):
    if isinstance(init, ModelConfig):
        return init_params(init, seed)
    return init


def pseudo_train(plan, init, corpus, parallel=(), valid=(), iteration=1,
                 return_history=False):
    """
    Trains on the pseudo corpus (sources re-noised every epoch when the
    plan has noise). Under the joint regime the real parallel data,
    upsampled by duplication and left clean, is mixed in. `init` is a
    ModelParams snapshot or a ModelConfig for a fresh model.
    """
    if len(corpus) == 0:
        raise UsageError("Cannot pseudo-train on an empty corpus")
    schedule = plan.stage_schedule("pt", iteration)
    params = _fresh_or(init, utils.derive_seed(plan.seed, iteration, 3))
    model_config = params.config
    if plan.pt_dropout_rate is not None:
        params = params.with_config(dropout_rate=plan.pt_dropout_rate)

    examples = list(corpus.examples)
    noisy = [True] * len(examples)
    if plan.regime == "joint":
        copies = max(1, int(round(plan.upsample_ratio)))
        real = list(parallel) * copies
        examples += real
        noisy += [False] * len(real)

    perturb = make_perturber(plan.noise) if plan.noise.kind != "none" else None
    trained, history = train(
        params,
        examples,
        valid,
        schedule,
        perturb=perturb,
        perturb_mask=noisy if perturb is not None else None,
        train_mode=plan.pt_dropout,
    )
    trained = ModelParams(model_config, dict(trained.items()), seed=trained.seed)
    return (trained, history) if return_history else trained


def fine_tune(plan, pt_params, parallel, valid=(), iteration=1, return_history=False):
    """
    Continues training on real parallel data. Dropout is always on here,
    whatever the plan says for pseudo-training.
    """
    schedule = plan.stage_schedule("ft", iteration)
    trained, history = train(pt_params, parallel, valid, schedule, train_mode=True)
    return (trained, history) if return_history else trained


def train_baseline(plan, config, parallel, valid=()):
    params = init_params(config, utils.derive_seed(plan.seed, 0, 3))
    return train(params, parallel, valid, plan.stage_schedule("baseline", 0), train_mode=True)


def _losses(history):
    train_loss = next(
        (h["train_loss"] for h in reversed(history) if h["train_loss"] is not None), None
    )
    trained = [h["valid_loss"] for h in history if h["update"] > 0]
    valid_loss = min(trained) if trained else None
    return dict(train_loss=train_loss, valid_loss=valid_loss)


def default_evaluator(test):
    def evaluate(params, stage, iteration):
        if not test:
            return {}
        return dict(test_loss=evaluate_loss(params, list(test)))

    return evaluate


class SelfTrainer(object):
    """
    Drives the classic / noisy self-training loop: a baseline on the
    parallel data, then per iteration pseudo-label -> select ->
    pseudo-train -> fine-tune (or a single joint stage).
    """

    def __init__(self, plan, config, evaluator=None, report=None,
                 run_dir=None, vocab=None):
        self.plan = plan
        self.config = config
        self.evaluator = evaluator
        self.report = report if report is not None else MetricsReport()
        self.run_dir = pathlib.Path(run_dir) if run_dir is not None else None
        self.vocab = vocab

    def record(self, iteration, stage, params, history, started, **extra):
        metrics = _losses(history) if history else {}
        if self.evaluator is not None:
            metrics.update(self.evaluator(params, stage, iteration))
        metrics.update(extra)
        wall = time.perf_counter() - started
        logger.info("iteration %d %s done in %.1fs", iteration, stage, wall)
        self.report.add(iteration, stage, wall_time=wall, **metrics)
        if self.run_dir is not None:
            save_checkpoint(
                self.run_dir / str(iteration) / f"{stage.lower()}.ckpt",
                params,
                self.vocab,
                provenance=dict(iteration=iteration, stage=stage, seed=self.plan.seed),
            )

    def _stage(self, iteration, stage, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except (NoisySTError, ArithmeticError, ValueError) as e:
            raise StageError(iteration, stage, e) from e

    def build_corpus(self, teacher, parallel, unlabeled, iteration):
        plan = self.plan
        if plan.pt_data == "parallel" and plan.pt_target == "real":
            return PseudoCorpus.from_parallel(list(parallel))
        sources = unlabeled if plan.pt_data == "unlabeled" else [ex.source for ex in parallel]
        spec = plan.decode.replace(seed=utils.derive_seed(plan.seed, iteration, 4) % (2 ** 30))
        return pseudo_label(
            teacher, sources, spec, plan.workers, plan.confidence_normalize
        )

    def run_baseline(self, parallel, valid=(), baseline=None):
        """
        Trains (or, given `baseline`, just records) the iteration-0 model.
        """
        started = time.perf_counter()
        if baseline is None:
            baseline, history = self._stage(
                0, "baseline", train_baseline, self.plan, self.config, list(parallel), list(valid)
            )
        else:
            history = []
        self.record(0, "baseline", baseline, history, started)
        return baseline

    def run(self, parallel, unlabeled, valid=(), baseline=None):
        plan = self.plan
        parallel, unlabeled, valid = list(parallel), list(unlabeled), list(valid)
        baseline = self.run_baseline(parallel, valid, baseline)

        if plan.pt_data == "unlabeled" and not unlabeled:
            logger.info("No unlabeled data; returning the baseline")
            return baseline, self.report

        teacher = baseline
        for it in range(1, plan.iterations + 1):
            started = time.perf_counter()
            corpus = self._stage(it, "label", self.build_corpus, teacher, parallel, unlabeled, it)
            n_pseudo = len(corpus)
            corpus = self._stage(it, "select", select_subset, corpus, plan.selection, it)
            logger.info(
                "iteration %d: %d pseudo examples, %d selected, %d dropped",
                it, n_pseudo, len(corpus), corpus.n_dropped,
            )
            if self.run_dir is not None and self.vocab is not None:
                corpus.write(self.run_dir / str(it) / "pseudo.tsv", self.vocab)

            init = {
                "scratch": self.config,
                "baseline": baseline,
                "previous": teacher,
            }[plan.init_mode]
            counts = dict(n_pseudo=n_pseudo, n_selected=len(corpus))
            stage = "joint" if plan.regime == "joint" else "PT"
            pt, history = self._stage(
                it, stage, pseudo_train, plan, init, corpus, parallel, valid, it, True
            )
            self.record(it, stage, pt, history, started, **counts)
            if plan.regime == "joint":
                teacher = pt
                continue

            started = time.perf_counter()
            ft, history = self._stage(it, "FT", fine_tune, plan, pt, parallel, valid, it, True)
            self.record(it, "FT", ft, history, started, **counts)
            teacher = ft

        return teacher, self.report


def self_train_loop(plan, parallel, unlabeled, valid=(), test=(), config=None,
                    baseline=None, evaluator=None, report=None, run_dir=None, vocab=None):
    if config is None:
        if baseline is None:
            raise UsageError("self_train_loop needs a ModelConfig or a baseline")
        config = baseline.config
    evaluator = evaluator or default_evaluator(test)
    trainer = SelfTrainer(plan, config, evaluator, report, run_dir, vocab)
    return trainer.run(parallel, unlabeled, valid, baseline)
