__all__ = [
    "__version__",
    "utils",
    "Vocabulary",
    "ModelConfig",
    "ModelParams",
    "DecodeSpec",
    "NoiseSpec",
    "ExperimentPlan",
    "MetricsReport",
    "RunConfig",
    "self_train_loop",
    "run",
    "set_debug",
]

from ._version import __version__
from . import utils
from .vocab import Vocabulary
from .model import ModelConfig, ModelParams
from .decoding import DecodeSpec
from .noise import NoiseSpec
from .selftrain import ExperimentPlan, self_train_loop
from .report import MetricsReport
from .config import RunConfig
from .runner import run
import logging


def set_debug(debug=0):
    logging.getLogger(__name__).setLevel(logging.DEBUG if debug else logging.NOTSET)


set_debug(0)
