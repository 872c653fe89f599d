"""Synthetic CARS measurements with a known generating truth."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre

from ..models.spectral import MeasuredSpectrum, ModelParams, VoigtLine, cars_signal
from ..models.wavelet import ErrorFunctionEngine
from ..utils.utils import ConfigError, named_rng

logger = logging.getLogger("global")

TRUTH_SCHEMA_VERSION = 1


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    params: ModelParams
    log_artefact: np.ndarray = field(repr=False)
    nr_level: float
    noise_sd: float
    kind: str = "polynomial"
    p_star: float = None

    def __post_init__(self):
        if self.noise_sd < 0:
            raise ValueError("noise sd must be >= 0")
        if self.kind == "wavelet" and self.p_star is None:
            raise ValueError("wavelet artefact needs p*")

    @property
    def artefact(self):
        return np.exp(self.log_artefact)

    def clean(self, grid):
        """eps_m * S, the noise-free measurement."""
        return self.artefact * cars_signal(grid, self.params, self.nr_level)

    def to_dict(self):
        doc = {
            "schema_version": TRUTH_SCHEMA_VERSION,
            "lines": [
                {"amplitude": ln.amplitude, "location": ln.location, "sigma": ln.sigma, "gamma": ln.gamma}
                for ln in self.params.lines
            ],
            "nr_level": self.nr_level,
            "noise_sd": self.noise_sd,
            "noise_variance": self.noise_sd ** 2,
            "artefact": {"kind": self.kind},
        }
        if self.kind == "wavelet":
            doc["artefact"]["p"] = self.p_star
        return doc


def polynomial_log_artefact(grid, coefficients, modulation):
    """Legendre series on the axis mapped to [-1, 1], scaled so max |log eps| = log(1 + modulation)."""
    x = np.linspace(-1.0, 1.0, grid.count)
    shape = legendre.legval(x, np.asarray(coefficients, dtype=float))
    shape = shape - shape.mean()
    peak = np.max(np.abs(shape))
    if peak == 0 or modulation == 0:
        return np.zeros(grid.count)
    return math.log1p(modulation) * shape / peak


def wavelet_log_artefact(grid, coefficients, modulation, p_star, order):
    """log eps_m(p*) of an engine built on a smooth polynomial base signal."""
    base = np.exp(polynomial_log_artefact(grid, coefficients, modulation))
    engine = ErrorFunctionEngine.from_signal(grid, base, order=order)
    if not 1.0 <= p_star <= engine.levels:
        raise ConfigError(
            "invalid value for 'simulate.artefact.p': {} outside [1, {}]".format(
                p_star, engine.levels
            )
        )
    return engine.log_modulating_error(float(p_star))


def simulate(grid, truth, seed, edge_mask=0):
    """y = eps_m * S + N(0, noise_sd^2), noise from the "simulate" stream of ``seed``."""
    clean = truth.clean(grid)
    noise = named_rng(seed, "simulate").normal(scale=1.0, size=grid.count) * truth.noise_sd
    logger.info(
        "Simulated {} lines on {} channels, noise sd {}".format(
            truth.params.num_lines, grid.count, truth.noise_sd
        )
    )
    return MeasuredSpectrum(grid, clean + noise, edge_mask=edge_mask), truth.to_dict()


def lines_from_config(cfg_lines):
    lines = [
        VoigtLine(ln["amplitude"], ln["location"], ln["sigma"], ln["gamma"]) for ln in cfg_lines
    ]
    return sorted(lines, key=lambda ln: ln.location)
