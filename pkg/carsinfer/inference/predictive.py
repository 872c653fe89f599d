"""Posterior summaries: parameter table and channel-wise predictive bands."""
from dataclasses import dataclass, field

import numpy as np

from ..models.model_helper import batched_lines, split_theta
from ..utils.parallel_helper import chunk_bounds, parallel_map
from ..utils.utils import named_rng

BASE_SERIES = ("y", "f", "S", "eps_m", "V_N")


@dataclass(eq=False)
class Band:
    lower: np.ndarray = field(repr=False)
    median: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)

    def contains(self, values):
        values = np.asarray(values, dtype=float)
        return (values >= self.lower) & (values <= self.upper)


@dataclass(eq=False)
class PosteriorSummary:
    draws: np.ndarray = field(repr=False)
    loglik: np.ndarray = field(repr=False)
    bands: dict = field(repr=False)
    diagnostics: list = field(repr=False)
    log_evidence: float = 0.0

    @property
    def num_lines(self):
        return (self.draws.shape[1] - 1) // 4

    @property
    def kappas(self):
        return [row["kappa"] for row in self.diagnostics]

    @property
    def acceptance(self):
        return [row["acceptance"] for row in self.diagnostics]

    @property
    def ess(self):
        return [row["ess_before_resample"] for row in self.diagnostics]


def parameter_names(num_lines):
    names = ["p"]
    for n in range(1, num_lines + 1):
        names += ["a_{}".format(n), "nu_{}".format(n), "sigma_{}".format(n), "gamma_{}".format(n)]
    return names


def line_series(num_lines):
    return ["line_{:02d}".format(n) for n in range(1, num_lines + 1)]


def band_from_samples(samples, level=0.95):
    """Equal-tailed channel-wise band of a (draws, K) sample matrix."""
    tail = 0.5 * (1.0 - level)
    lower, median, upper = np.quantile(samples, [tail, 0.5, 1.0 - tail], axis=0)
    return Band(lower, median, upper)


def parameter_summary(draws, level=0.95):
    """Rows (name, mean, sd, lower, median, upper) for every parameter column."""
    draws = np.atleast_2d(draws)
    tail = 0.5 * (1.0 - level)
    q = np.quantile(draws, [tail, 0.5, 1.0 - tail], axis=0)
    sd = draws.std(axis=0, ddof=1) if draws.shape[0] > 1 else np.zeros(draws.shape[1])
    names = parameter_names((draws.shape[1] - 1) // 4)
    return [
        (name, float(m), float(s), float(lo), float(med), float(hi))
        for name, m, s, lo, med, hi in zip(names, draws.mean(axis=0), sd, q[0], q[1], q[2])
    ]


def predictive_bands(model, draws, seed, level=0.95, threads=1, chunk_size=64):
    """Bands for y, f, S, eps_m, V_N and each line over equal-weight draws.

    The y band adds N(0, sigma_eps^2) noise from the "predict" stream to f;
    the f band does not.
    """
    draws = np.atleast_2d(draws)
    _, lines = split_theta(draws)

    def work(bounds):
        beg, end = bounds
        comps = model.components(draws[beg:end])
        comps["lines"] = batched_lines(model.axis, lines[beg:end])
        return comps

    parts = parallel_map(work, chunk_bounds(draws.shape[0], chunk_size), threads)
    stacked = {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}

    noise = named_rng(seed, "predict").normal(
        scale=np.sqrt(model.measured.noise_variance), size=stacked["f"].shape
    )
    stacked["y"] = stacked["f"] + noise

    bands = {name: band_from_samples(stacked[name], level) for name in BASE_SERIES}
    for n, name in enumerate(line_series(lines.shape[1])):
        bands[name] = band_from_samples(stacked["lines"][:, n, :], level)
    return bands
