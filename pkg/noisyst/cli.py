#!/usr/bin/env python
from . import report, runner, toysum
from .config import load_config
from .convert import ingest_corpus
from .exceptions import ConfigError, NoisySTError
from .noise import make_perturber, NoiseSpec
from .utils import derive_seed
import argparse
import logging
import sys

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def parse_seeds(s_str):
    try:
        return [int(s) for s in s_str.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated seed list: {s_str!r}")


def parse_args(args_raw):
    parser = argparse.ArgumentParser("noisyst")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level.")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Log warnings only.")
    sub = parser.add_subparsers(dest="command")
    sub.required = True

    p_run = sub.add_parser("run", help="Run an experiment config.")
    p_run.add_argument("config", help="Config path or bundled config name.")
    p_run.add_argument(
        "--seeds", type=parse_seeds, help="Comma-separated seeds; overrides [run] seeds."
    )
    p_run.add_argument("--output-dir", help="Overrides [run] output_dir.")

    p_compare = sub.add_parser("compare", help="Tabulate metrics CSVs across runs.")
    p_compare.add_argument("csvs", nargs="+")
    p_compare.add_argument("--view", choices=report.COMPARE_VIEWS, default="final")

    p_gen = sub.add_parser("gen-toy", help="Write the toy-sum splits as TSV corpora.")
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--out", required=True)

    p_noise = sub.add_parser("noise-preview", help="Print perturbed corpus sources.")
    p_noise.add_argument("corpus")
    p_noise.add_argument("config")
    p_noise.add_argument("-n", type=int, default=10, help="Number of lines to preview.")
    p_noise.add_argument("--seed", type=int, default=1, help="Schedule seed.")
    p_noise.add_argument("--epoch", type=int, default=0)

    return parser.parse_args(args_raw)


def configure_logging(args):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def cmd_run(args):
    config = load_config(args.config)
    if args.output_dir:
        config = config.replace("run", output_dir=args.output_dir)
    for run_dir in runner.run(config, args.seeds):
        sys.stdout.write(f"{run_dir}\n")


def cmd_compare(args):
    rows = report.compare_runs(args.csvs, args.view)
    sys.stdout.write(report.format_table(rows, ["run", "n_seeds"] + report.COMPARE_FIELDS))


def cmd_gen_toy(args):
    split = toysum.gen_toy_dataset(args.seed)
    for name, path in toysum.write_toy_corpus(args.out, split).items():
        sys.stdout.write(f"{name}\t{path}\n")


def cmd_noise_preview(args):
    config = load_config(args.config)
    perturb = make_perturber(NoiseSpec(**config["noise"]))
    corpus = ingest_corpus(args.corpus)
    vocab = corpus.vocab
    for i, source in enumerate(corpus.sources[: args.n]):
        noisy = perturb(source, derive_seed(args.seed, args.epoch, i))
        cols = [" ".join(vocab.decode(source)), " ".join(vocab.decode(noisy))]
        sys.stdout.write("\t".join(cols) + "\n")


COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "gen-toy": cmd_gen_toy,
    "noise-preview": cmd_noise_preview,
}


def main(args_raw=sys.argv[1:]):
    args = parse_args(args_raw)
    configure_logging(args)
    try:
        COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error("Config error: %s", e)
        return EXIT_CONFIG
    except NoisySTError as e:
        logger.error("%s", e)
        return EXIT_RUNTIME
    except OSError as e:
        logger.error("I/O error: %s", e)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
