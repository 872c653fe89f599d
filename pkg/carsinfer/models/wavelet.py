"""Multilevel symlet DWT, detail reconstructions and the modulating error function."""
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import pywt

from .symlets import symlet_wavelet

logger = logging.getLogger("global")

PERIODIC = "periodization"
SYMMETRIC = "symmetric"


def next_pow2(n):
    return 1 << int(np.ceil(np.log2(max(int(n), 1))))


def max_levels(count):
    """floor(log2 K), the deepest decomposition of a K-sample signal."""
    return int(np.floor(np.log2(max(int(count), 1))))


def default_levels(count):
    return max(1, max_levels(count) - 2)


@dataclass(frozen=True, eq=False)
class WaveletDecomposition:
    """a(l) and b_j for j = 1..J; ``details[0]`` is the finest level."""

    approximation: np.ndarray
    details: tuple
    order: int
    mode: str
    length: int
    padded_length: int = field(default=None)

    @property
    def levels(self):
        return len(self.details)

    def coeff_list(self):
        # pywt ordering: [cA_J, cD_J, ..., cD_1]
        return [self.approximation] + list(self.details[::-1])

    def detail_energy(self):
        return float(sum(np.sum(d ** 2) for d in self.details))

    def total_energy(self):
        return float(np.sum(self.approximation ** 2)) + self.detail_energy()


def _pad(signal):
    n = signal.shape[-1]
    target = next_pow2(n)
    if target == n:
        return signal
    return np.pad(signal, (0, target - n), mode="symmetric")


def dwt_multilevel(signal, order, levels=None, mode=PERIODIC):
    signal = np.asarray(signal, dtype=float)
    if signal.ndim != 1:
        raise ValueError("dwt_multilevel expects a 1-D signal")
    if not np.all(np.isfinite(signal)):
        raise ValueError("signal must be finite")
    wavelet = symlet_wavelet(order)
    if signal.size < wavelet.dec_len:
        raise ValueError(
            "signal length {} shorter than sym{} filter ({})".format(
                signal.size, order, wavelet.dec_len
            )
        )
    padded = _pad(signal)
    deepest = max_levels(signal.size)
    if levels is None:
        levels = default_levels(signal.size)
    if levels < 1 or levels > deepest:
        raise ValueError("levels must be in [1, {}], got {}".format(deepest, levels))
    with warnings.catch_warnings():
        # pywt warns when the coarsest level is shorter than the filter
        warnings.simplefilter("ignore", UserWarning)
        coeffs = pywt.wavedec(padded, wavelet, mode=mode, level=levels)
    return WaveletDecomposition(
        approximation=coeffs[0],
        details=tuple(coeffs[1:][::-1]),
        order=order,
        mode=mode,
        length=signal.size,
        padded_length=padded.size,
    )


def inverse(dec, coeffs=None):
    wavelet = symlet_wavelet(dec.order)
    if coeffs is None:
        coeffs = dec.coeff_list()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        rec = pywt.waverec(coeffs, wavelet, mode=dec.mode)
    return rec[: dec.length]


def approximation_reconstruction(dec):
    coeffs = [dec.approximation] + [np.zeros_like(d) for d in dec.details[::-1]]
    return inverse(dec, coeffs)


def detail_reconstructions(dec):
    """D_j for j = 1..J stacked as a (J, K) array; row 0 is D_1."""
    rows = []
    for j in range(dec.levels):
        details = [np.zeros_like(d) for d in dec.details]
        details[j] = dec.details[j]
        coeffs = [np.zeros_like(dec.approximation)] + details[::-1]
        rows.append(inverse(dec, coeffs))
    return np.stack(rows, axis=0)


def energy_concentration(signal, order=8):
    """Share of the signal energy carried by detail coefficients (full depth)."""
    signal = np.asarray(signal, dtype=float)
    if not np.any(signal):
        raise ValueError("energy concentration of an all-zero signal is undefined")
    padded = _pad(signal)
    wavelet = symlet_wavelet(order)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        coeffs = pywt.wavedec(padded, wavelet, mode=PERIODIC, level=max_levels(signal.size))
    approx = float(np.sum(coeffs[0] ** 2))
    detail = float(sum(np.sum(c ** 2) for c in coeffs[1:]))
    return detail / (approx + detail)


def interpolation_weights(p, levels, interpolation="floor"):
    """Per-level weights w_j(p), j = 1..J, with log eps_m = sum_j w_j D_j.

    ``floor``: 1 for j > floor(p), 1 - beta at j = floor(p), else 0.
    ``ceil``: the printed variant, 1 for j >= ceil(p + 1), 1 - beta at
    j = ceil(p). Both agree at integer p; only ``floor`` is continuous.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any(~np.isfinite(p)) or np.any(p < 1) or np.any(p > levels):
        raise ValueError("p must lie in [1, {}]".format(levels))
    j = np.arange(1, levels + 1)[None, :]
    lo = np.floor(p)[:, None]
    beta = p[:, None] - lo
    if interpolation == "floor":
        w = np.where(j > lo, 1.0, 0.0) + np.where(j == lo, 1.0 - beta, 0.0)
    elif interpolation == "ceil":
        up = np.ceil(p)[:, None]
        w = np.where(j >= np.ceil(p + 1)[:, None], 1.0, 0.0) + np.where(j == up, 1.0 - beta, 0.0)
    else:
        raise NotImplementedError("interpolation {}".format(interpolation))
    return w


class ErrorFunctionEngine(object):
    """Detail reconstructions of a log-signal and the interpolated error function."""

    def __init__(self, grid, details, approximation=None, interpolation="floor"):
        details = np.asarray(details, dtype=float)
        assert details.ndim == 2 and details.shape[1] == grid.count
        self.grid = grid
        self.details = details
        self.approximation = approximation
        self.interpolation = interpolation
        self.details.setflags(write=False)

    @property
    def levels(self):
        return self.details.shape[0]

    @classmethod
    def from_log_signal(cls, grid, log_signal, order=34, levels=None, interpolation="floor"):
        dec = dwt_multilevel(log_signal, order, levels=levels, mode=SYMMETRIC)
        engine = cls(
            grid,
            detail_reconstructions(dec),
            approximation=approximation_reconstruction(dec),
            interpolation=interpolation,
        )
        logger.info(
            "Error function engine: sym{} J={} ({})".format(order, engine.levels, interpolation)
        )
        return engine

    @classmethod
    def from_signal(cls, grid, signal, order=34, levels=None, interpolation="floor"):
        """Engine on log(signal); non-positive samples are floored first."""
        signal = np.asarray(signal, dtype=float)
        floor = 1e-6 * np.max(np.abs(signal)) if np.any(signal) else 1.0
        return cls.from_log_signal(
            grid, np.log(np.clip(signal, floor, None)), order, levels, interpolation
        )

    @classmethod
    def flat(cls, grid, levels):
        return cls(grid, np.zeros((levels, grid.count)), approximation=np.zeros(grid.count))

    def log_modulating_error(self, p):
        w = interpolation_weights(p, self.levels, self.interpolation)
        out = w @ self.details
        return out[0] if np.ndim(p) == 0 else out

    def modulating_error(self, p):
        """eps_m(nu; p) > 0; vectorised over an array of p (one row per value)."""
        return np.exp(self.log_modulating_error(p))
