from .exceptions import ConfigError
import numpy as np
import hashlib
import numbers


def apply_settings(obj, settings, defaults, owner=None):
    """
    Sets every key of `defaults` on `obj`, overridden by `settings`.
    Unknown keys raise ConfigError.
    """
    owner = owner or obj.__class__.__name__
    for s in settings:
        if s not in defaults:
            raise ConfigError(f"{s} is not a valid {owner} parameter")
    merged = dict(defaults)
    merged.update(settings)
    for s, val in merged.items():
        setattr(obj, s, val)
    return merged


def _entropy(parts):
    parts = [int(p) for p in parts]
    if any(p < 0 for p in parts):
        raise ValueError(f"Seed parts must be non-negative, got {parts}")
    # SeedSequence zero-pads its entropy, so (1,) and (1, 0) would collide
    # without the leading part count.
    return [len(parts)] + parts


def derive_seed(*parts):
    """
    Mixes non-negative integers into a single 32-bit seed. Used wherever
    the engine needs an independent, reproducible random stream (per
    batch, per example, per stage). Tuples of different lengths, such as
    (s, 0) and (s, 0, 0), give different seeds.
    """
    state = np.random.SeedSequence(_entropy(parts)).generate_state(1, dtype=np.uint32)
    return int(state[0])


def make_rng(*parts):
    return np.random.default_rng(np.random.SeedSequence(_entropy(parts)))


def short_hash(text, length=12):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:length]


def array_fingerprint(named_arrays, length=12):
    h = hashlib.sha256()
    for name, arr in named_arrays:
        h.update(name.encode("utf-8"))
        h.update(str(arr.shape).encode("ascii"))
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:length]


def check_probability(name, value, upper_inclusive=True):
    if not isinstance(value, numbers.Real):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    ok = 0 <= value <= 1 if upper_inclusive else 0 <= value < 1
    if not ok:
        bound = "[0, 1]" if upper_inclusive else "[0, 1)"
        raise ConfigError(f"{name} must be in {bound}, got {value}")
    return float(value)


def check_count(name, value, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def median(values):
    xs = sorted(v for v in values if v is not None)
    if not xs:
        return None
    mid = len(xs) // 2
    if len(xs) % 2:
        return xs[mid]
    return (xs[mid - 1] + xs[mid]) / 2
