from . import utils
from .exceptions import ConfigError, UsageError
from .vocab import BLANK, SEP
import numpy as np

NOISE_KINDS = ["none", "synthetic", "operand_swap"]

DEFAULT_NOISE_SETTINGS = dict(
    kind="none",
    drop_prob=0.1,
    blank_prob=0.2,
    shuffle_window=3,
    swap_prob=0.5,
    seed_stream=0,
)


class NoiseSpec(object):
    def __init__(self, **settings):
        utils.apply_settings(self, settings, DEFAULT_NOISE_SETTINGS, "NoiseSpec")
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        self.drop_prob = utils.check_probability("drop_prob", self.drop_prob)
        self.blank_prob = utils.check_probability("blank_prob", self.blank_prob)
        self.swap_prob = utils.check_probability("swap_prob", self.swap_prob)
        self.shuffle_window = utils.check_count("shuffle_window", self.shuffle_window, 0)
        self.seed_stream = utils.check_count("seed_stream", self.seed_stream, 0)

    def to_dict(self):
        return {k: getattr(self, k) for k in DEFAULT_NOISE_SETTINGS}

    def replace(self, **overrides):
        settings = self.to_dict()
        settings.update(overrides)
        return NoiseSpec(**settings)

    def __repr__(self):
        return f"<NoiseSpec:{self.to_dict()}>"


def drop_tokens(x, prob, rng):
    """
    Deletes each token independently with `prob`. May return an empty
    list; synthetic_noise applies the keep-one guard.
    """
    keep = rng.random(len(x)) >= prob
    return [t for t, k in zip(x, keep) if k]


def blank_tokens(x, prob, rng):
    hit = rng.random(len(x)) < prob
    return [BLANK if b else t for t, b in zip(x, hit)]


def local_shuffle(x, window, rng):
    """
    Adds uniform noise in [0, window] to every position and stably sorts,
    so no token moves past another more than `window` positions away.
    """
    if window == 0 or len(x) < 2:
        return list(x)
    keys = np.arange(len(x)) + rng.uniform(0, window, size=len(x))
    order = np.argsort(keys, kind="stable")
    return [x[i] for i in order]


def synthetic_noise(x, spec, example_seed):
    if spec.kind != "synthetic":
        raise UsageError(f"synthetic_noise called with a {spec.kind!r} NoiseSpec")
    rng = utils.make_rng(spec.seed_stream, example_seed)
    x = list(x)
    kept = drop_tokens(x, spec.drop_prob, rng)
    if not kept:
        kept = [x[int(rng.integers(len(x)))]]
    kept = blank_tokens(kept, spec.blank_prob, rng)
    return tuple(local_shuffle(kept, spec.shuffle_window, rng))


def split_operands(x):
    x = tuple(x)
    if x.count(SEP) != 1:
        raise UsageError(f"Expected exactly one separator in {x}")
    k = x.index(SEP)
    if k == 0 or k == len(x) - 1:
        raise UsageError(f"Both operands of {x} must be nonempty")
    return x[:k], x[k + 1 :]


def operand_swap(x):
    left, right = split_operands(x)
    return right + (SEP,) + left


class Perturber(object):
    """
    A NoiseSpec bound into a per-example function: perturber(x, example_seed).
    """

    def __init__(self, spec):
        self.spec = spec

    def __call__(self, x, example_seed=0):
        spec = self.spec
        if spec.kind == "none":
            return tuple(x)
        if spec.kind == "synthetic":
            return synthetic_noise(x, spec, example_seed)
        rng = utils.make_rng(spec.seed_stream, example_seed)
        if rng.random() < spec.swap_prob:
            return operand_swap(x)
        split_operands(x)
        return tuple(x)

    @property
    def is_identity(self):
        return self.spec.kind == "none"

    def __repr__(self):
        return f"<Perturber:{self.spec.kind}>"


def make_perturber(spec):
    return Perturber(spec)
