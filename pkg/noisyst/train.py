from . import utils
from .exceptions import UsageError
from .model import make_batch, forward_loss, loss_and_grad
from .optim import OptimizerState, adam_step, DEFAULT_OPTIMIZER_SETTINGS
from .vocab import ParallelExample
import numpy as np
import logging

logger = logging.getLogger(__name__)

DEFAULT_SCHEDULE_SETTINGS = dict(
    max_updates=4000,
    batch_size=32,
    seed=1,
    patience=0,
    valid_interval=100,
    clip_norm=5.0,
    **DEFAULT_OPTIMIZER_SETTINGS,
)

EVAL_BATCH_SIZE = 512


class TrainSchedule(object):
    def __init__(self, **settings):
        utils.apply_settings(self, settings, DEFAULT_SCHEDULE_SETTINGS, "TrainSchedule")
        self.max_updates = utils.check_count("max_updates", self.max_updates, 0)
        self.batch_size = utils.check_count("batch_size", self.batch_size)
        self.valid_interval = utils.check_count("valid_interval", self.valid_interval)
        self.patience = utils.check_count("patience", self.patience, 0)
        self.seed = utils.check_count("seed", self.seed, 0)

    def to_dict(self):
        return {k: getattr(self, k) for k in DEFAULT_SCHEDULE_SETTINGS}

    def replace(self, **overrides):
        settings = self.to_dict()
        settings.update(overrides)
        return TrainSchedule(**settings)

    def optimizer_settings(self):
        return {k: getattr(self, k) for k in DEFAULT_OPTIMIZER_SETTINGS}


def evaluate_loss(params, examples, batch_size=EVAL_BATCH_SIZE):
    """
    Eval-mode loss averaged over every target token of `examples`.
    """
    total, n_tokens = 0.0, 0
    for start in range(0, len(examples), batch_size):
        batch = make_batch(examples[start : start + batch_size])
        loss, _ = forward_loss(params, batch, train_mode=False)
        total += loss * batch.n_tokens
        n_tokens += batch.n_tokens
    return total / n_tokens


def iter_batches(examples, schedule, perturb=None, perturb_mask=None):
    """
    Yields (epoch, batch) forever. Each epoch reshuffles with the
    schedule's seed; when `perturb` is set every source (or those flagged
    in `perturb_mask`) is re-noised per epoch with an example seed derived
    from (epoch, index).
    """
    rng = np.random.default_rng(utils.derive_seed(schedule.seed, 0))
    n = len(examples)
    epoch = 0
    while True:
        order = rng.permutation(n)
        for start in range(0, n, schedule.batch_size):
            chunk = order[start : start + schedule.batch_size]
            picked = []
            for idx in chunk:
                ex = examples[idx]
                if perturb is not None and (perturb_mask is None or perturb_mask[idx]):
                    seed = utils.derive_seed(schedule.seed, epoch, int(idx))
                    ex = ParallelExample(perturb(ex.source, seed), ex.target)
                picked.append(ex)
            dropout_seed = int(rng.integers(2 ** 31))
            yield epoch, make_batch(picked, dropout_seed)
        epoch += 1


def train(params, train_set, valid_set, schedule=None, perturb=None, train_mode=True,
          perturb_mask=None):
    """
    Adam training over shuffled mini-batches. Returns the snapshot with
    the lowest validation loss among those taken after at least one update
    and the per-interval history.
    """
    schedule = schedule or TrainSchedule()
    if isinstance(schedule, dict):
        schedule = TrainSchedule(**schedule)
    train_set = list(train_set)
    if len(train_set) == 0:
        raise UsageError("Cannot train on an empty training set")
    valid_set = list(valid_set or [])
    if len(valid_set) == 0:
        logger.warning("Empty validation set; selecting checkpoints by training loss")
        valid_set = train_set

    optstate = OptimizerState(params, **schedule.optimizer_settings())
    best_params, best_loss = params, float("inf")
    history = [
        dict(update=0, epoch=0, train_loss=None, lr=0.0,
             valid_loss=evaluate_loss(params, valid_set))
    ]
    stale = 0
    running, running_n = 0.0, 0
    batches = iter_batches(train_set, schedule, perturb, perturb_mask)

    for update in range(1, schedule.max_updates + 1):
        epoch, batch = next(batches)
        lr = optstate.learning_rate()
        loss, grads = loss_and_grad(params, batch, train_mode)
        params, optstate = adam_step(params, optstate, grads, schedule.clip_norm)
        running += loss
        running_n += 1

        if update % schedule.valid_interval and update != schedule.max_updates:
            continue

        valid_loss = evaluate_loss(params, valid_set)
        history.append(
            dict(
                update=update,
                epoch=epoch,
                train_loss=running / running_n,
                valid_loss=valid_loss,
                lr=float(lr),
            )
        )
        logger.info(
            "update %d epoch %d train %.4f valid %.4f lr %.2e",
            update,
            epoch,
            running / running_n,
            valid_loss,
            lr,
        )
        running, running_n = 0.0, 0
        if valid_loss < best_loss:
            best_loss, best_params, stale = valid_loss, params, 0
        else:
            stale += 1
            if schedule.patience and stale >= schedule.patience:
                logger.info("Stopping early at update %d", update)
                break

    return best_params, history
