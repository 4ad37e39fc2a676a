from .exceptions import ConfigError
from .model import ModelConfig, ModelParams
from io import BytesIO
import numpy as np
import zipfile
import pathlib
import json

FORMAT_VERSION = 1

# Fixed entry timestamp: identical params give identical bytes.
ZIP_DATE_TIME = (1980, 1, 1, 0, 0, 0)


def _write_member(zf, name, data):
    info = zipfile.ZipInfo(name, date_time=ZIP_DATE_TIME)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_checkpoint(path, params, vocab=None, provenance=None):
    """
    Writes a self-describing container: one .npy member per array plus
    meta.json with the config, array shapes, vocabulary and provenance.
    """
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "config": params.config.to_dict(),
        "arrays": {name: list(arr.shape) for name, arr in params.items()},
        "seed": params.seed,
        "fingerprint": params.fingerprint(),
        "vocab": None if vocab is None else list(vocab.tokens),
        "provenance": provenance or {},
    }
    with zipfile.ZipFile(path, "w") as zf:
        _write_member(zf, "meta.json", json.dumps(meta, sort_keys=True, indent=2))
        for name, arr in params.items():
            buf = BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
            _write_member(zf, f"{name}.npy", buf.getvalue())
    return path


def load_checkpoint(path):
    """
    Returns (params, meta). Arrays are restored bit-exactly.
    """
    with zipfile.ZipFile(path, "r") as zf:
        meta = json.loads(zf.read("meta.json").decode("utf-8"))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"{path} has unsupported checkpoint format")
        arrays = {}
        for name, shape in meta["arrays"].items():
            arr = np.lib.format.read_array(BytesIO(zf.read(f"{name}.npy")))
            if list(arr.shape) != shape:
                raise ConfigError(f"{path}: array {name} does not match its shape")
            arrays[name] = arr
    params = ModelParams(ModelConfig(**meta["config"]), arrays, seed=meta["seed"])
    return params, meta
