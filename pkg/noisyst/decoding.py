from . import utils
from .exceptions import ConfigError, NoisySTError
from .model import encode, decode_step
from .vocab import PAD, BOS, EOS
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
import numpy as np
import logging

logger = logging.getLogger(__name__)

DECODE_MODES = ["beam", "sample", "greedy"]

DEFAULT_DECODE_SETTINGS = dict(
    mode="beam",
    beam_size=5,
    max_len=8,
    length_normalize=True,
    temperature=1.0,
    seed=0,
)

# Below this temperature sampling degenerates to argmax.
MIN_TEMPERATURE = 1e-6

NEVER_EMIT = [PAD, BOS]

ScoredHypothesis = namedtuple(
    "ScoredHypothesis", ["sequence", "logprob", "normalized_score", "finished"]
)


class DecodeSpec(object):
    def __init__(self, **settings):
        utils.apply_settings(self, settings, DEFAULT_DECODE_SETTINGS, "DecodeSpec")
        if self.mode not in DECODE_MODES:
            raise ConfigError(f"mode must be one of {DECODE_MODES}, got {self.mode!r}")
        self.beam_size = utils.check_count("beam_size", self.beam_size)
        self.max_len = utils.check_count("max_len", self.max_len)
        self.seed = utils.check_count("seed", self.seed, 0)
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        self.length_normalize = bool(self.length_normalize)

    def to_dict(self):
        return {k: getattr(self, k) for k in DEFAULT_DECODE_SETTINGS}

    def replace(self, **overrides):
        settings = self.to_dict()
        settings.update(overrides)
        return DecodeSpec(**settings)

    def __repr__(self):
        return f"<DecodeSpec:{self.to_dict()}>"


def make_hypothesis(tokens, logprob, finished, length_normalize):
    n_scored = len(tokens) + (1 if finished else 0)
    normalized = logprob / n_scored if (length_normalize and n_scored) else logprob
    return ScoredHypothesis(
        tuple(int(t) for t in tokens), float(logprob), float(normalized), finished
    )


def _check_mode(spec, *modes):
    if spec.mode not in modes:
        raise ConfigError(f"Decode mode {spec.mode!r} used where {modes} expected")


def _score_bound(logprob, spec):
    # Log-probabilities only fall as a prefix grows; the longest scored
    # length is max_len.
    return logprob / spec.max_len if spec.length_normalize else logprob


def beam_search(params, source, spec):
    """
    Length-bounded beam search. Every step keeps the `beam_size` best
    extensions by cumulative log-probability (ties going to the lower
    token id); extensions ending in EOS are set aside as finished and
    the rest form the next frontier. Search runs to `max_len` unless the
    frontier empties or no live prefix can still beat the best candidate.

    For `beam_size` > 1 the greedy hypothesis is a candidate too, so the
    returned score is never below greedy decoding's.
    """
    _check_mode(spec, "beam", "greedy")
    k = spec.beam_size
    key = (lambda x: x.normalized_score) if spec.length_normalize else (lambda x: x.logprob)
    pool = [greedy_decode(params, source, spec.replace(mode="greedy"))] if k > 1 else []
    best_score = max((key(hyp) for hyp in pool if hyp.finished), default=-np.inf)

    h, c = encode(params, [source])
    beams = [((), 0.0)]
    n_finished = 0
    for _ in range(spec.max_len):
        last = [tokens[-1] if tokens else BOS for tokens, _ in beams]
        logp, h_all, c_all = decode_step(params, last, h, c)
        prefix = np.array([lp for _, lp in beams])
        scores = prefix[:, None] + logp
        scores[:, NEVER_EMIT] = -np.inf

        n_beams, V = scores.shape
        beam_idx = np.repeat(np.arange(n_beams), V)
        tok_idx = np.tile(np.arange(V), n_beams)
        flat = scores.ravel()
        order = np.lexsort((beam_idx, tok_idx, -flat))[:k]

        new_beams, keep_rows = [], []
        for j in order:
            if not np.isfinite(flat[j]):
                break
            b, tok = int(beam_idx[j]), int(tok_idx[j])
            tokens, prefix_lp = beams[b]
            lp = prefix_lp + float(logp[b, tok])
            if tok == EOS:
                hyp = make_hypothesis(tokens, lp, True, spec.length_normalize)
                pool.append(hyp)
                n_finished += 1
                best_score = max(best_score, key(hyp))
            else:
                new_beams.append((tokens + (tok,), lp))
                keep_rows.append(b)

        beams = new_beams
        if not beams or all(_score_bound(lp, spec) <= best_score for _, lp in beams):
            break
        h, c = h_all[keep_rows], c_all[keep_rows]

    if n_finished == 0:
        pool += [make_hypothesis(t, lp, False, spec.length_normalize) for t, lp in beams]
    best = pool[0]
    for hyp in pool[1:]:
        if key(hyp) > key(best):
            best = hyp
    return best


def _pick_token(row, temperature, rng):
    masked = np.array(row)
    masked[NEVER_EMIT] = -np.inf
    if temperature < MIN_TEMPERATURE:
        return int(np.argmax(masked))
    z = masked / temperature
    p = np.exp(z - z.max())
    cdf = np.cumsum(p)
    u = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), len(cdf) - 1))


def _decode_single(params, source, spec, temperature, rng):
    h, c = encode(params, [source])
    tokens, lp = [], 0.0
    last = BOS
    for _ in range(spec.max_len):
        logp, h, c = decode_step(params, [last], h, c)
        tok = _pick_token(logp[0], temperature, rng)
        lp += float(logp[0, tok])
        if tok == EOS:
            return make_hypothesis(tokens, lp, True, spec.length_normalize)
        tokens.append(tok)
        last = tok
    return make_hypothesis(tokens, lp, False, spec.length_normalize)


def sample_decode(params, source, spec):
    """
    Ancestral sampling at `spec.temperature`; the returned log-probability
    is the model's own (temperature 1) score of the sampled sequence.
    """
    _check_mode(spec, "sample")
    rng = np.random.default_rng(spec.seed)
    return _decode_single(params, source, spec, spec.temperature, rng)


def greedy_decode(params, source, spec):
    return _decode_single(params, source, spec, 0.0, None)


def greedy_decode_batch(params, sources, spec):
    """
    Argmax decoding of many sources at once; same outputs as
    greedy_decode applied to each source.
    """
    sources = list(sources)
    if not sources:
        return []
    h, c = encode(params, sources)
    B = len(sources)
    last = np.full(B, BOS, dtype=np.int64)
    logprob = np.zeros(B)
    done = np.zeros(B, dtype=bool)
    outputs = [[] for _ in range(B)]
    for _ in range(spec.max_len):
        logp, h, c = decode_step(params, last, h, c)
        masked = logp.copy()
        masked[:, NEVER_EMIT] = -np.inf
        toks = np.argmax(masked, axis=1)
        for row in np.flatnonzero(~done):
            tok = int(toks[row])
            logprob[row] += logp[row, tok]
            if tok == EOS:
                done[row] = True
            else:
                outputs[row].append(tok)
        if done.all():
            break
        last = toks
    return [
        make_hypothesis(outputs[i], logprob[i], bool(done[i]), spec.length_normalize)
        for i in range(B)
    ]


DECODERS = {
    "beam": beam_search,
    "sample": sample_decode,
    "greedy": greedy_decode,
}


def decode(params, source, spec):
    return DECODERS[spec.mode](params, source, spec)


def decode_all(params, sources, spec, workers=1, skip_errors=False):
    """
    Decodes every source. Sampling uses the per-example seed
    `spec.seed + index`, so sharded and serial runs agree. With
    `skip_errors`, a failing example yields None instead of raising.
    """
    sources = list(sources)
    if spec.mode == "greedy":
        try:
            return greedy_decode_batch(params, sources, spec)
        except (NoisySTError, FloatingPointError):
            if not skip_errors:
                raise

    def run_one(i):
        s = spec.replace(seed=spec.seed + i) if spec.mode == "sample" else spec
        try:
            return decode(params, sources[i], s)
        except (NoisySTError, FloatingPointError) as e:
            if not skip_errors:
                raise
            logger.debug("Decoding example %d failed: %s", i, e)
            return None

    if workers <= 1 or len(sources) < 2:
        return [run_one(i) for i in range(len(sources))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_one, range(len(sources))))
