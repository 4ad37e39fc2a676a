from . import utils
from .decoding import DEFAULT_DECODE_SETTINGS
from .exceptions import ConfigError
from .model import DEFAULT_MODEL_SETTINGS
from .noise import DEFAULT_NOISE_SETTINGS
from .selftrain import DEFAULT_PLAN_SETTINGS
from .train import DEFAULT_SCHEDULE_SETTINGS
from collections import OrderedDict
from itertools import product
import configparser
import pathlib
import os

CONFIG_DIR = pathlib.Path(__file__).parent / "configs"
CONFIG_SUFFIX = ".ini"

OUTPUT_DIR_ENV = "NOISYST_OUTPUT_DIR"
THREADS_ENV = "NOISYST_THREADS"

EXPERIMENTS = ["baseline", "selftrain"]
TASKS = ["toy", "corpus"]

DEFAULT_RUN_SETTINGS = dict(
    name=None,
    output_dir="runs",
    seeds="1",
    experiment="selftrain",
    task="toy",
    init_checkpoint=None,
)

DEFAULT_DATA_SETTINGS = dict(
    unlabeled_size=4000,
    train=None,
    valid=None,
    test=None,
    unlabeled=None,
)

# Seeds are derived per stage from the run seed, and the vocabulary fixes
# vocab_size, so neither is configurable here.
SCHEDULE_KEYS = [k for k in DEFAULT_SCHEDULE_SETTINGS if k != "seed"]

PLAN_KEYS = [
    "iterations",
    "init_mode",
    "pt_dropout",
    "pt_dropout_rate",
    "selection",
    "regime",
    "upsample_ratio",
    "pt_target",
    "pt_data",
    "confidence_normalize",
]

SECTION_DEFAULTS = OrderedDict(
    [
        ("run", DEFAULT_RUN_SETTINGS),
        ("data", DEFAULT_DATA_SETTINGS),
        ("model", {k: v for k, v in DEFAULT_MODEL_SETTINGS.items() if k != "vocab_size"}),
        ("train", {k: DEFAULT_SCHEDULE_SETTINGS[k] for k in SCHEDULE_KEYS}),
        ("pt_train", {}),
        ("ft_train", {}),
        ("selftrain", {k: DEFAULT_PLAN_SETTINGS[k] for k in PLAN_KEYS}),
        ("decode", dict(DEFAULT_DECODE_SETTINGS)),
        ("noise", dict(DEFAULT_NOISE_SETTINGS)),
    ]
)

# Sections whose keys are optional overrides of another section.
OVERRIDE_SECTIONS = {"pt_train": "train", "ft_train": "train"}

TRUE_WORDS = {"1", "yes", "true", "on"}
FALSE_WORDS = {"0", "no", "false", "off"}


def _parse_auto(text):
    if text.lower() == "none" or text == "":
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_value(section, key, text, default):
    """
    Converts an INI string to the type of the key's default. Keys whose
    default is None accept int, float or string values.
    """
    text = text.strip()
    try:
        if isinstance(default, bool):
            word = text.lower()
            if word in TRUE_WORDS:
                return True
            if word in FALSE_WORDS:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {text!r}")
    if default is None:
        return _parse_auto(text)
    return text


def _section_defaults(section):
    if section in OVERRIDE_SECTIONS:
        return SECTION_DEFAULTS[OVERRIDE_SECTIONS[section]]
    return SECTION_DEFAULTS[section]


def _split_target(target):
    section, _, key = target.partition(".")
    if section not in SECTION_DEFAULTS or key not in _section_defaults(section):
        raise ConfigError(f"{target} is not a valid sweep target")
    return section, key


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return "none" if v is None else str(v)


class RunConfig(object):
    """
    A fully defaulted experiment description. `sections` maps each INI
    section to its settings; `sweep` maps "section.key" to the list of
    values to expand over.
    """

    def __init__(self, sections=None, sweep=None, source=None):
        sections = sections or {}
        self.source = source
        self.sections = OrderedDict()
        for name in sections:
            if name not in SECTION_DEFAULTS:
                raise ConfigError(f"[{name}] is not a valid config section")
        for name, defaults in SECTION_DEFAULTS.items():
            given = dict(sections.get(name) or {})
            allowed = _section_defaults(name)
            for key in given:
                if key not in allowed:
                    raise ConfigError(f"{key} is not a valid [{name}] parameter")
            merged = OrderedDict(sorted(defaults.items()))
            merged.update(sorted(given.items()))
            self.sections[name] = merged
        self.sweep = OrderedDict(sweep or {})
        for target in self.sweep:
            _split_target(target)
        self._validate()

    def _validate(self):
        run = self.sections["run"]
        if not run["name"]:
            raise ConfigError("[run] name is required")
        if run["experiment"] not in EXPERIMENTS:
            raise ConfigError(f"[run] experiment must be one of {EXPERIMENTS}")
        if run["task"] not in TASKS:
            raise ConfigError(f"[run] task must be one of {TASKS}")
        if not self.seeds:
            raise ConfigError("[run] seeds is empty")
        data = self.sections["data"]
        if run["task"] == "toy":
            utils.check_count("[data] unlabeled_size", data["unlabeled_size"], 0)
            if data["unlabeled_size"] > 4000:
                raise ConfigError("[data] unlabeled_size cannot exceed the 4000-source toy pool")
        elif not data["train"]:
            raise ConfigError("[data] train is required when task = corpus")

    @classmethod
    def from_string(cls, text, source=None):
        parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
        parser.optionxform = str
        try:
            parser.read_string(text, source=str(source or "<string>"))
        except configparser.Error as e:
            raise ConfigError(f"Cannot parse config {source or ''}: {e}")
        sections, sweep = {}, OrderedDict()
        for name in parser.sections():
            if name == "sweep":
                for target, values in parser.items(name):
                    section, key = _split_target(target)
                    default = _section_defaults(section)[key]
                    sweep[target] = [
                        parse_value(section, key, v, default)
                        for v in values.split(",")
                        if v.strip()
                    ]
                    if not sweep[target]:
                        raise ConfigError(f"[sweep] {target} lists no values")
                continue
            if name not in SECTION_DEFAULTS:
                raise ConfigError(f"[{name}] is not a valid config section")
            defaults = _section_defaults(name)
            given = {}
            for key, text in parser.items(name):
                if key not in defaults:
                    raise ConfigError(f"{key} is not a valid [{name}] parameter")
                given[key] = parse_value(name, key, text, defaults[key])
            sections[name] = given
        return cls(sections, sweep, source)

    @classmethod
    def from_file(cls, path):
        path = pathlib.Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"Cannot read config {path}: {e}")
        return cls.from_string(text, source=path)

    def __getitem__(self, section):
        return self.sections[section]

    @property
    def name(self):
        return self.sections["run"]["name"]

    @property
    def task(self):
        return self.sections["run"]["task"]

    @property
    def experiment(self):
        return self.sections["run"]["experiment"]

    @property
    def seeds(self):
        raw = self.sections["run"]["seeds"]
        try:
            seeds = [int(s) for s in str(raw).split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"[run] seeds must be comma-separated integers, got {raw!r}")
        if not seeds or any(s < 0 for s in seeds):
            raise ConfigError("[run] seeds must list at least one non-negative integer")
        return seeds

    @property
    def output_dir(self):
        return pathlib.Path(os.environ.get(OUTPUT_DIR_ENV) or self.sections["run"]["output_dir"])

    def run_dir(self, seed):
        return self.output_dir / self.name / f"seed-{seed}"

    def canonical(self):
        """
        Sorted key=value rendering of every setting but the output
        directory; the input of config_hash.
        """
        lines = []
        for section, settings in self.sections.items():
            for key, value in sorted(settings.items()):
                if (section, key) == ("run", "output_dir"):
                    continue
                lines.append(f"{section}.{key}={_format_value(value)}")
        for target, values in self.sweep.items():
            lines.append(f"sweep.{target}=" + ",".join(_format_value(v) for v in values))
        return "\n".join(lines) + "\n"

    def config_hash(self):
        return utils.short_hash(self.canonical())

    def replace(self, section, **overrides):
        sections = {k: dict(v) for k, v in self.sections.items()}
        sections[section].update(overrides)
        return RunConfig(sections, self.sweep, self.source)

    def expand(self):
        """
        One RunConfig per point of the sweep's Cartesian product, named
        `{name}-{key}={value}` per swept key.
        """
        if not self.sweep:
            return [self]
        targets = list(self.sweep)
        expanded = []
        for values in product(*(self.sweep[t] for t in targets)):
            sections = {k: dict(v) for k, v in self.sections.items()}
            suffix = []
            for target, value in zip(targets, values):
                section, key = _split_target(target)
                sections[section][key] = value
                suffix.append(f"{key}={_format_value(value)}")
            sections["run"]["name"] = "-".join([self.name] + suffix)
            expanded.append(RunConfig(sections, None, self.source))
        return expanded

    def model_settings(self):
        return dict(self.sections["model"])

    def schedule_settings(self, which):
        """
        Settings for the "baseline", "pt" or "ft" stage: [train] with the
        stage's override section applied.
        """
        settings = dict(self.sections["train"])
        if which in ("pt", "ft"):
            settings.update(self.sections[f"{which}_train"])
        return settings

    def plan_settings(self, seed, workers=None):
        plan = dict(self.sections["selftrain"])
        plan.update(
            decode=dict(self.sections["decode"]),
            noise=dict(self.sections["noise"]),
            baseline_schedule=self.schedule_settings("baseline"),
            pt_schedule=self.schedule_settings("pt"),
            ft_schedule=self.schedule_settings("ft"),
            seed=seed,
            workers=workers if workers is not None else env_threads(),
        )
        return plan

    def __repr__(self):
        return f"<RunConfig:{self.name}:{self.config_hash()}>"


def env_threads():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        return utils.check_count(THREADS_ENV, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")


def bundled_configs():
    return sorted(p.stem for p in CONFIG_DIR.glob("*" + CONFIG_SUFFIX))


def find_config(name_or_path):
    """
    A path to an existing file, or the name of a bundled config.
    """
    path = pathlib.Path(name_or_path)
    if path.is_file():
        return path
    bundled = CONFIG_DIR / (path.name if path.suffix else path.name + CONFIG_SUFFIX)
    if bundled.is_file():
        return bundled
    raise ConfigError(
        f"No config file {name_or_path!r}; bundled configs: {', '.join(bundled_configs())}"
    )


def load_config(name_or_path):
    return RunConfig.from_file(find_config(name_or_path))
