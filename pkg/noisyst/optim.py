from . import utils
from .exceptions import ConfigError, NumericError
from collections import OrderedDict
import numpy as np

DEFAULT_OPTIMIZER_SETTINGS = dict(
    lr=5e-4,
    warmup_steps=400,
    lr_schedule="inverse_sqrt",
    beta1=0.9,
    beta2=0.98,
    eps=1e-8,
)

LR_SCHEDULES = ["inverse_sqrt", "constant"]


class OptimizerState(object):
    """
    Adam moment buffers, step counter and learning-rate schedule.
    """

    def __init__(self, params, **settings):
        utils.apply_settings(self, settings, DEFAULT_OPTIMIZER_SETTINGS, "OptimizerState")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError(f"lr_schedule must be one of {LR_SCHEDULES}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        self.warmup_steps = utils.check_count("warmup_steps", self.warmup_steps, 0)
        self.step = 0
        self.m = OrderedDict((k, np.zeros_like(v)) for k, v in params.items())
        self.v = OrderedDict((k, np.zeros_like(v)) for k, v in params.items())

    @property
    def settings(self):
        return {k: getattr(self, k) for k in DEFAULT_OPTIMIZER_SETTINGS}

    def learning_rate(self, step=None):
        """
        Rate applied at 1-based update `step`: linear warmup to `lr`,
        then `lr * sqrt(warmup / step)` for the inverse_sqrt schedule.
        """
        t = self.step + 1 if step is None else step
        if self.lr_schedule == "constant":
            return self.lr
        w = self.warmup_steps
        if w == 0:
            return self.lr / np.sqrt(t)
        if t <= w:
            return self.lr * t / w
        return self.lr * np.sqrt(w / t)

    def _advance(self, m, v):
        new = object.__new__(OptimizerState)
        new.__dict__.update(self.__dict__)
        new.m, new.v = m, v
        new.step = self.step + 1
        return new


def global_norm(grads):
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def clip_by_global_norm(grads, clip_norm):
    if not clip_norm or clip_norm <= 0:
        return grads, global_norm(grads)
    norm = global_norm(grads)
    if norm > clip_norm:
        scale = clip_norm / norm
        grads = OrderedDict((k, g * scale) for k, g in grads.items())
    return grads, norm


def adam_step(params, optstate, grads, clip_norm=5.0):
    """
    Returns new (params, optstate); neither input is modified.
    """
    if list(grads) != params.names:
        raise ConfigError("Gradient names do not match the parameter arrays")
    grads, _ = clip_by_global_norm(grads, clip_norm)

    t = optstate.step + 1
    lr = optstate.learning_rate(t)
    b1, b2, eps = optstate.beta1, optstate.beta2, optstate.eps
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t

    new_arrays, new_m, new_v = OrderedDict(), OrderedDict(), OrderedDict()
    for name in params.names:
        g = grads[name]
        if g.shape != params[name].shape:
            raise ConfigError(f"Gradient {name} has shape {g.shape}")
        m = b1 * optstate.m[name] + (1.0 - b1) * g
        v = b2 * optstate.v[name] + (1.0 - b2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        if not np.all(np.isfinite(update)):
            raise NumericError(f"Update of {name} is not finite", name)
        new_arrays[name] = params[name] - update
        new_m[name], new_v[name] = m, v

    return params.replace(new_arrays), optstate._advance(new_m, new_v)
