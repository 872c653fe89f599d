import logging
import os
import zlib

import numpy as np


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


class DataFormatError(ValueError):
    """Unreadable, missing or inconsistent input artifact."""


class NumericalError(RuntimeError):
    """Numerical failure, e.g. every particle weight underflowed."""


class UsageError(Exception):
    """Bad command line."""


class AverageMeter(object):
    """Computes and stores the average and current value"""

    def __init__(self):
        self.reset()

    def reset(self):
        self.count = 0
        self.sum = 0.0
        self.val = 0.0
        self.avg = 0.0

    def update(self, val, num=1):
        self.val = val
        self.sum += val * num
        self.count += num
        self.avg = self.sum / self.count


logs = set()


def init_log(name, level=logging.INFO):
    logger = logging.getLogger(name)
    logger.setLevel(level)
    if (name, level) in logs:
        return logger
    logs.add((name, level))
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    ch = logging.StreamHandler()
    ch.setLevel(level)
    format_str = "[%(asctime)s][%(levelname)8s] %(message)s"
    formatter = logging.Formatter(format_str)
    ch.setFormatter(formatter)
    logger.addHandler(ch)
    logger.propagate = False
    return logger


def stream_key(name):
    return zlib.crc32(name.encode("utf-8"))


def named_rng(seed, name, *keys):
    """Counter-based generator for the substream ``name`` of ``seed``.

    Extra integer ``keys`` (iteration, particle index, ...) select
    independent child streams, so the same (seed, name, keys) always
    yields the same numbers regardless of call order.
    """
    seq = np.random.SeedSequence(
        int(seed), spawn_key=(stream_key(name),) + tuple(int(k) for k in keys)
    )
    return np.random.Generator(np.random.Philox(seq))


def check_makedirs(dir_name):
    if not os.path.exists(dir_name):
        os.makedirs(dir_name)
