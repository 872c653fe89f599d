"""Command-line front end: simulate, narrow, priors, fit, predict, pipeline."""
import argparse
import logging
import os.path as osp
import pprint
import sys
from datetime import datetime

from tensorboardX import SummaryWriter

from . import pipeline
from .utils.config_helper import load_config, resolve_threads
from .utils.utils import (
    ConfigError,
    DataFormatError,
    NumericalError,
    UsageError,
    check_makedirs,
    init_log,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

STAGE_HELP = {
    "simulate": "write a synthetic spectrum and its truth record",
    "narrow": "bootstrap the Raman spectrum and line-narrow it",
    "priors": "build line priors and estimate the noise variance",
    "fit": "sample the posterior with tempered SMC",
    "predict": "posterior predictive bands from the saved draws",
    "pipeline": "run every stage in order",
}


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError("{}: {}".format(self.prog, message))


def _u64(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("invalid seed '{}'".format(text))
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return value


def _positive(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("invalid thread count '{}'".format(text))
    if value < 1:
        raise argparse.ArgumentTypeError("thread count must be >= 1")
    return value


def build_parser():
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="YAML or JSON config file")
    common.add_argument("--seed", type=_u64, default=None, help="overrides the config seed")
    common.add_argument("--threads", type=_positive, default=None)
    common.add_argument("--out", type=str, default="out", help="artefact directory")
    common.add_argument("--quiet", action="store_true", help="only log warnings and errors")

    parser = ArgumentParser(
        prog="cars_infer", description="Bayesian line-shape inference for CARS spectra"
    )
    sub = parser.add_subparsers(dest="stage", metavar="stage", parser_class=ArgumentParser)
    for name, text in STAGE_HELP.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def run_stage(args):
    logger = init_log("global", logging.WARNING if args.quiet else logging.INFO)
    cfg = load_config(args.config)
    seed = cfg["seed"] if args.seed is None else args.seed
    threads = resolve_threads(cfg, args.threads)
    logger.info("{}".format(pprint.pformat(cfg)))
    check_makedirs(args.out)
    progress = not args.quiet

    tb_logger = None
    if args.stage in ("fit", "pipeline") and cfg["tensorboard"]:
        current_time = datetime.now().strftime("%Y%m%d_%H%M%S")
        tb_logger = SummaryWriter(
            osp.join(args.out, "log/events_{}/".format(args.stage) + current_time)
        )

    try:
        if args.stage == "simulate":
            pipeline.simulate(cfg, args.out, seed)
        elif args.stage == "narrow":
            pipeline.narrow(cfg, args.out, threads=threads, progress=progress)
        elif args.stage == "priors":
            pipeline.priors(cfg, args.out)
        elif args.stage == "fit":
            pipeline.fit(cfg, args.out, seed, threads, tb_logger, progress)
        elif args.stage == "predict":
            pipeline.predict(cfg, args.out, seed, threads=threads)
        elif args.stage == "pipeline":
            pipeline.pipeline(cfg, args.out, seed, threads, tb_logger, progress)
        else:
            raise NotImplementedError("stage {} is not supported".format(args.stage))
    finally:
        if tb_logger is not None:
            tb_logger.close()


def _report(message):
    logger = logging.getLogger("global")
    if not logger.handlers:
        logger = init_log("global")
    logger.error(message)


def main(argv=None):
    """Run one command line; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.stage is None:
            raise UsageError("{}: a stage is required".format(parser.prog))
        run_stage(args)
    except SystemExit as e:
        # --help
        return e.code or EXIT_OK
    except UsageError as e:
        parser.print_usage(sys.stderr)
        _report(str(e))
        return EXIT_USAGE
    except (ConfigError, DataFormatError) as e:
        _report(str(e))
        return EXIT_DATA
    except (NumericalError, ValueError, FloatingPointError) as e:
        _report("numerical failure: {}".format(e))
        return EXIT_NUMERICAL
    return EXIT_OK
