from . import utils
from .exceptions import ConfigError, NumericError
from .vocab import PAD, BOS, EOS, ParallelExample
from collections import OrderedDict
import numpy as np
import logging

logger = logging.getLogger(__name__)

DEFAULT_MODEL_SETTINGS = dict(
    vocab_size=None,
    embed_dim=32,
    hidden_dim=32,
    dropout_rate=0.3,
    label_smoothing=0.1,
    max_decode_len=8,
)

PARAM_NAMES = [
    "embedding",
    "enc_W",
    "enc_b",
    "dec_W",
    "dec_b",
    "out_W",
    "out_b",
]


class ModelConfig(object):
    def __init__(self, **settings):
        utils.apply_settings(self, settings, DEFAULT_MODEL_SETTINGS, "ModelConfig")
        if self.vocab_size is None:
            raise ConfigError("ModelConfig requires vocab_size")
        self.vocab_size = utils.check_count("vocab_size", self.vocab_size, 6)
        self.embed_dim = utils.check_count("embed_dim", self.embed_dim)
        self.hidden_dim = utils.check_count("hidden_dim", self.hidden_dim)
        self.max_decode_len = utils.check_count("max_decode_len", self.max_decode_len)
        self.dropout_rate = utils.check_probability(
            "dropout_rate", self.dropout_rate, upper_inclusive=False
        )
        self.label_smoothing = utils.check_probability(
            "label_smoothing", self.label_smoothing, upper_inclusive=False
        )

    def to_dict(self):
        return {k: getattr(self, k) for k in DEFAULT_MODEL_SETTINGS}

    def replace(self, **overrides):
        settings = self.to_dict()
        settings.update(overrides)
        return ModelConfig(**settings)

    def param_shapes(self):
        V, E, H = self.vocab_size, self.embed_dim, self.hidden_dim
        return OrderedDict(
            [
                ("embedding", (V, E)),
                ("enc_W", (E + H, 4 * H)),
                ("enc_b", (4 * H,)),
                ("dec_W", (E + H, 4 * H)),
                ("dec_b", (4 * H,)),
                ("out_W", (H, V)),
                ("out_b", (V,)),
            ]
        )

    def __eq__(self, other):
        return isinstance(other, ModelConfig) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"<ModelConfig:{self.to_dict()}>"


class ModelParams(object):
    """
    An immutable snapshot of every trainable array. The arrays are
    marked read-only; optimizers and perturbation helpers produce new
    snapshots instead of editing this one.
    """

    def __init__(self, config, arrays, seed=None):
        self.config = config
        self.seed = seed
        shapes = config.param_shapes()
        if set(arrays) != set(shapes):
            raise ConfigError(
                f"Expected arrays {sorted(shapes)}, got {sorted(arrays)}"
            )
        self._arrays = OrderedDict()
        for name, shape in shapes.items():
            arr = np.array(arrays[name], dtype=np.float64)
            if arr.shape != shape:
                raise ConfigError(
                    f"Array {name} has shape {arr.shape}, expected {shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"Array {name} has non-finite entries", name)
            arr.flags.writeable = False
            self._arrays[name] = arr

    def __getitem__(self, name):
        return self._arrays[name]

    def __iter__(self):
        return iter(self._arrays)

    def items(self):
        return self._arrays.items()

    @property
    def names(self):
        return list(self._arrays)

    def replace(self, arrays):
        merged = dict(self._arrays)
        merged.update(arrays)
        return ModelParams(self.config, merged, seed=self.seed)

    def with_config(self, **overrides):
        return ModelParams(self.config.replace(**overrides), self._arrays, self.seed)

    def fingerprint(self):
        return utils.array_fingerprint(self.items())

    def __repr__(self):
        return f"<ModelParams:{self.fingerprint()}>"


def init_params(config, seed):
    a = 1.0 / np.sqrt(config.hidden_dim)
    rng = np.random.default_rng(seed)
    arrays = OrderedDict(
        (name, rng.uniform(-a, a, size=shape))
        for name, shape in config.param_shapes().items()
    )
    return ModelParams(config, arrays, seed=seed)


class Batch(object):
    """
    Padded source/target matrices. Targets are stored without BOS/EOS;
    the decoder input (BOS + target) and output (target + EOS) views are
    derived here.
    """

    def __init__(self, src, src_len, tgt, tgt_len, dropout_seed=0):
        self.src = np.asarray(src, dtype=np.int64)
        self.src_len = np.asarray(src_len, dtype=np.int64)
        self.tgt = np.asarray(tgt, dtype=np.int64).reshape(len(self.src_len), -1)
        self.tgt_len = np.asarray(tgt_len, dtype=np.int64)
        self.dropout_seed = int(dropout_seed)

        B, S = self.src.shape
        W = self.tgt.shape[1]
        if len(self.tgt_len) != B or len(self.tgt) != B:
            raise ConfigError("Source and target batch sizes differ")
        if np.any(self.src_len < 1) or np.any(self.src_len > S):
            raise ConfigError("Source lengths must be in [1, width]")
        if np.any(self.tgt_len < 0) or np.any(self.tgt_len > W):
            raise ConfigError("Target lengths must be in [0, width]")

        self.src_mask = (np.arange(S)[None, :] < self.src_len[:, None]).astype(
            np.float64
        )
        tgt_mask = np.arange(W)[None, :] < self.tgt_len[:, None]
        if np.any((self.src == PAD) != (self.src_mask == 0)):
            raise ConfigError("Source padding must follow each sequence's length")
        if np.any((self.tgt == PAD) != ~tgt_mask):
            raise ConfigError("Target padding must follow each sequence's length")

        self.dec_in = np.full((B, W + 1), PAD, dtype=np.int64)
        self.dec_in[:, 0] = BOS
        self.dec_in[:, 1:] = self.tgt
        self.dec_out = np.full((B, W + 1), PAD, dtype=np.int64)
        self.dec_out[:, :W] = self.tgt
        self.dec_out[np.arange(B), self.tgt_len] = EOS
        self.dec_mask = (np.arange(W + 1)[None, :] <= self.tgt_len[:, None]).astype(
            np.float64
        )

    def __len__(self):
        return len(self.src_len)

    @property
    def n_tokens(self):
        return int(self.dec_mask.sum())

    def with_seed(self, dropout_seed):
        return Batch(self.src, self.src_len, self.tgt, self.tgt_len, dropout_seed)


def pad_sequences(seqs):
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    width = max(1, int(lengths.max())) if len(seqs) else 1
    out = np.full((len(seqs), width), PAD, dtype=np.int64)
    for row, s in enumerate(seqs):
        out[row, : len(s)] = s
    return out, lengths


def make_batch(examples, dropout_seed=0):
    src, src_len = pad_sequences([ex.source for ex in examples])
    tgt, tgt_len = pad_sequences([ex.target for ex in examples])
    return Batch(src, src_len, tgt, tgt_len, dropout_seed)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def dropout_masks(config, batch):
    """
    Inverted-dropout masks for the embedding outputs and the recurrent
    outputs. Drawn from the batch's seed, so forward and backward see the
    same masks.
    """
    keep = 1.0 - config.dropout_rate
    rng = np.random.default_rng(batch.dropout_seed)
    E, H = config.embed_dim, config.hidden_dim
    B, S = batch.src.shape
    T = batch.dec_in.shape[1]

    def draw(shape):
        return (rng.random(shape) < keep) / keep

    return {
        "enc_embed": draw((B, S, E)),
        "enc_state": draw((B, H)),
        "dec_embed": draw((B, T, E)),
        "dec_out": draw((B, T, H)),
    }


def _check_batch(params, batch):
    V = params.config.vocab_size
    for name, ids in (("source", batch.src), ("target", batch.tgt)):
        if ids.size and (ids.max() >= V or ids.min() < 0):
            raise ConfigError(
                f"Batch {name} ids exceed the model's vocabulary of {V}"
            )


def _lstm_step(x, h, c, W, b):
    H = h.shape[1]
    xh = np.concatenate([x, h], axis=1)
    z = xh @ W + b
    i = _sigmoid(z[:, :H])
    f = _sigmoid(z[:, H : 2 * H])
    o = _sigmoid(z[:, 2 * H : 3 * H])
    g = np.tanh(z[:, 3 * H :])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (xh, i, f, o, g, c, tc)


def _lstm_step_backward(dh, dc, cache, W, E):
    xh, i, f, o, g, c_prev, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate(
        [
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            do * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ],
        axis=1,
    )
    dxh = dz @ W.T
    return dxh[:, :E], dxh[:, E:], dc * f, xh.T @ dz, dz.sum(axis=0)


def _forward(params, batch, train_mode):
    cfg = params.config
    _check_batch(params, batch)
    E, H, V = cfg.embed_dim, cfg.hidden_dim, cfg.vocab_size
    masks = None
    if train_mode and cfg.dropout_rate > 0:
        masks = dropout_masks(cfg, batch)

    emb = params["embedding"]
    B, S = batch.src.shape
    x = emb[batch.src]
    if masks is not None:
        x = x * masks["enc_embed"]

    h = np.zeros((B, H))
    c = np.zeros((B, H))
    enc_caches = []
    for t in range(S):
        m = batch.src_mask[:, t : t + 1]
        h_new, c_new, cache = _lstm_step(x[:, t], h, c, params["enc_W"], params["enc_b"])
        enc_caches.append((cache, m))
        h = m * h_new + (1.0 - m) * h
        c = m * c_new + (1.0 - m) * c

    h_dec = h * masks["enc_state"] if masks is not None else h
    c_dec = c
    y = emb[batch.dec_in]
    if masks is not None:
        y = y * masks["dec_embed"]

    T = batch.dec_in.shape[1]
    dec_caches = []
    hs = []
    for t in range(T):
        h_dec, c_dec, cache = _lstm_step(
            y[:, t], h_dec, c_dec, params["dec_W"], params["dec_b"]
        )
        dec_caches.append(cache)
        hs.append(h_dec)
    hs = np.stack(hs, axis=1)
    hd = hs * masks["dec_out"] if masks is not None else hs

    logits = hd @ params["out_W"] + params["out_b"]
    logp = log_softmax(logits)
    gold = np.take_along_axis(logp, batch.dec_out[..., None], axis=2)[..., 0]
    eps = cfg.label_smoothing
    per_token = -(1.0 - eps) * gold - (eps / V) * logp.sum(axis=-1)
    n_tokens = batch.dec_mask.sum()
    loss = float((per_token * batch.dec_mask).sum() / n_tokens)
    token_logprobs = gold * batch.dec_mask

    state = dict(
        masks=masks,
        x=x,
        enc_caches=enc_caches,
        dec_caches=dec_caches,
        hd=hd,
        logp=logp,
        n_tokens=n_tokens,
    )
    return loss, token_logprobs, state


def forward_loss(params, batch, train_mode=False):
    """
    Mean label-smoothed negative log-likelihood over non-PAD target
    tokens (EOS included), plus the per-position log-probability of each
    gold token (zero at padding).
    """
    loss, token_logprobs, _ = _forward(params, batch, train_mode)
    if not np.isfinite(loss):
        raise NumericError("Loss is not finite")
    return loss, token_logprobs


def loss_and_grad(params, batch, train_mode=False):
    cfg = params.config
    E, V = cfg.embed_dim, cfg.vocab_size
    loss, _, st = _forward(params, batch, train_mode)
    masks = st["masks"]
    B = len(batch)

    q = np.zeros_like(st["logp"])
    q += cfg.label_smoothing / V
    np.put_along_axis(
        q,
        batch.dec_out[..., None],
        np.take_along_axis(q, batch.dec_out[..., None], axis=2)
        + (1.0 - cfg.label_smoothing),
        axis=2,
    )
    dlogits = (np.exp(st["logp"]) - q) * (batch.dec_mask / st["n_tokens"])[..., None]

    grads = OrderedDict((name, np.zeros_like(params[name])) for name in params.names)
    hd = st["hd"]
    grads["out_W"] = hd.reshape(-1, hd.shape[-1]).T @ dlogits.reshape(-1, V)
    grads["out_b"] = dlogits.sum(axis=(0, 1))
    dhs = dlogits @ params["out_W"].T
    if masks is not None:
        dhs = dhs * masks["dec_out"]

    T = batch.dec_in.shape[1]
    dy = np.zeros((B, T, E))
    dh_next = np.zeros_like(dhs[:, 0])
    dc_next = np.zeros_like(dh_next)
    for t in reversed(range(T)):
        dx, dh_next, dc_next, dW, db = _lstm_step_backward(
            dhs[:, t] + dh_next, dc_next, st["dec_caches"][t], params["dec_W"], E
        )
        dy[:, t] = dx
        grads["dec_W"] += dW
        grads["dec_b"] += db
    if masks is not None:
        dy = dy * masks["dec_embed"]
        dh_next = dh_next * masks["enc_state"]
    np.add.at(grads["embedding"], batch.dec_in, dy)

    S = batch.src.shape[1]
    dx_enc = np.zeros((B, S, E))
    dh, dc = dh_next, dc_next
    for t in reversed(range(S)):
        cache, m = st["enc_caches"][t]
        dx, dh_prev, dc_prev, dW, db = _lstm_step_backward(
            m * dh, m * dc, cache, params["enc_W"], E
        )
        dx_enc[:, t] = dx
        grads["enc_W"] += dW
        grads["enc_b"] += db
        dh = dh_prev + (1.0 - m) * dh
        dc = dc_prev + (1.0 - m) * dc
    if masks is not None:
        dx_enc = dx_enc * masks["enc_embed"]
    np.add.at(grads["embedding"], batch.src, dx_enc)

    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"Gradient of {name} is not finite", name)
    return loss, grads


def grad(params, batch, train_mode=False):
    return loss_and_grad(params, batch, train_mode)[1]


def encode(params, sources):
    """
    Eval-mode encoder over a list of sequences; returns the decoder's
    initial (h, c).
    """
    src, src_len = pad_sequences(sources)
    src_mask = (np.arange(src.shape[1])[None, :] < src_len[:, None]).astype(
        np.float64
    )
    x = params["embedding"][src]
    B, H = len(sources), params.config.hidden_dim
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(src.shape[1]):
        m = src_mask[:, t : t + 1]
        h_new, c_new, _ = _lstm_step(x[:, t], h, c, params["enc_W"], params["enc_b"])
        h = m * h_new + (1.0 - m) * h
        c = m * c_new + (1.0 - m) * c
    return h, c


def decode_step(params, tokens, h, c):
    """
    One eval-mode decoder step. Returns log-probabilities over the
    vocabulary for the next token and the new state.
    """
    y = params["embedding"][np.asarray(tokens, dtype=np.int64)]
    h, c, _ = _lstm_step(y, h, c, params["dec_W"], params["dec_b"])
    logits = h @ params["out_W"] + params["out_b"]
    return log_softmax(logits), h, c


def score(params, source, target, include_eos=True):
    """
    Sum of eval-mode log-probabilities of `target` given `source`.
    """
    batch = make_batch([ParallelExample(source, tuple(target))])
    _, token_logprobs = forward_loss(params, batch, train_mode=False)
    n = len(target) + (1 if include_eos else 0)
    return float(token_logprobs[0, :n].sum())


def relative_error(a, b, floor=1e-3):
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_gradients(params, batch, train_mode=False, n_entries=100, step=1e-4, seed=0):
    """
    Compares analytic gradients against central finite differences on
    `n_entries` randomly chosen parameter entries. Returns a list of
    (array name, index, analytic, numeric, relative error).
    """
    analytic = grad(params, batch, train_mode)
    rng = np.random.default_rng(seed)
    sizes = np.array([params[n].size for n in params.names])
    picks = rng.choice(int(sizes.sum()), size=min(n_entries, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    results = []
    for flat in sorted(picks):
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        name = params.names[k]
        index = np.unravel_index(flat - offsets[k], params[name].shape)

        def loss_at(delta):
            arr = params[name].copy()
            arr[index] += delta
            return forward_loss(params.replace({name: arr}), batch, train_mode)[0]

        numeric = (loss_at(step) - loss_at(-step)) / (2 * step)
        a = float(analytic[name][index])
        results.append((name, index, a, numeric, relative_error(a, numeric)))
    return results
