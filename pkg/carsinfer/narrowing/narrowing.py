"""Line narrowing: Lorentzian self-deconvolution over a width grid with Burg
prediction, candidate filtering and prefix averaging."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft, ndimage, signal
from tqdm import tqdm

from ..models.wavelet import energy_concentration
from ..utils.parallel_helper import chunk_bounds, parallel_map
from .linear_prediction import burg, extrapolate, is_stable

logger = logging.getLogger("global")

EDGE_WINDOW = 8
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True, eq=False)
class NarrowingConfig:
    gammas: np.ndarray
    max_fir: int = 150
    extrapolation_length: int = None
    p_we: float = 0.5
    p_fc: float = 0.025
    p_fc_increment: float = 0.025
    min_intersection: int = 50
    smoothing_fwhm: float = None
    wavelet_order: int = 8
    divisor_floor: float = 1e-3

    def __post_init__(self):
        gammas = np.asarray(self.gammas, dtype=float)
        if gammas.ndim != 1 or gammas.size < 1 or np.any(gammas <= 0):
            raise ValueError("width grid must be a non-empty vector of positive values")
        if np.any(np.diff(gammas) <= 0):
            raise ValueError("width grid must be strictly increasing")
        if self.max_fir < 2:
            raise ValueError("max_fir must be >= 2")
        for name in ("p_we", "p_fc", "p_fc_increment"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ValueError("{} must lie in (0, 1]".format(name))
        object.__setattr__(self, "gammas", gammas)

    @classmethod
    def from_config(cls, cfg):
        cfg_nar = cfg["narrowing"]
        gammas = np.linspace(cfg_nar["gamma_min"], cfg_nar["gamma_max"], cfg_nar["gamma_points"])
        return cls(
            gammas=gammas,
            max_fir=cfg_nar["max_fir"],
            extrapolation_length=cfg_nar["extrapolation_length"],
            p_we=cfg_nar["p_we"],
            p_fc=cfg_nar["p_fc"],
            p_fc_increment=cfg_nar["p_fc_increment"],
            min_intersection=cfg_nar["min_intersection"],
            smoothing_fwhm=cfg_nar["smoothing_fwhm"],
            wavelet_order=cfg["wavelet"]["energy_order"],
            divisor_floor=cfg_nar["divisor_floor"],
        )


@dataclass(eq=False)
class CandidateSolution:
    gamma: float
    n_fir: int
    D_A: np.ndarray = field(repr=False)
    d: float = np.inf
    d_c: float = np.inf
    c_n: float = np.nan
    c_we: float = np.nan
    f_c: float = np.inf
    rejected: bool = False
    reason: str = ""


@dataclass(eq=False)
class NarrowedSpectrum:
    narrowed: np.ndarray = field(repr=False)
    smoothed: np.ndarray = field(repr=False)
    reconstruction: np.ndarray = field(repr=False)
    selected: list = field(repr=False)
    intersection: list = field(repr=False)
    residual: float
    n_evaluated: int
    n_valid: int
    p_fc_used: float
    warning: bool = False


def lorentz_kernel(count, step, gamma):
    """Unit-area Lorentzian at offsets -(K-1)h .. (K-1)h."""
    offsets = step * np.arange(-(count - 1), count)
    return gamma / (np.pi * (offsets ** 2 + gamma ** 2))


def lorentz_convolve(D_A, step, gamma):
    """Spectrum rebuilt from the area-per-channel deltas ``D_A``."""
    D_A = np.asarray(D_A, dtype=float)
    count = D_A.shape[-1]
    full = signal.fftconvolve(D_A, lorentz_kernel(count, step, gamma), mode="full")
    return full[count - 1 : 2 * count - 1]


def deconvolved_time_signal(spectrum, step, gamma, divisor_floor=1e-3):
    """x = F{spectrum} / F{Lorentzian} on the reliable part of the conjugate axis.

    Returns the kept samples and the edge offset removed before the FFT.
    """
    spectrum = np.asarray(spectrum, dtype=float)
    count = spectrum.size
    width = min(EDGE_WINDOW, count // 4)
    offset = 0.5 * (spectrum[:width].mean() + spectrum[-width:].mean())
    n_fft = 2 * count
    X = fft.rfft(spectrum - offset, n=n_fft)
    t = np.arange(count + 1) / (n_fft * step)
    decay = np.exp(-2.0 * np.pi * gamma * t)
    keep = min(int(np.count_nonzero(decay >= divisor_floor)), count + 1)
    x = step * X[:keep] / decay[:keep]
    return x, offset


def _delta_approximation(x, a, offset, count, step, extrap_len):
    n_fft = 2 * count
    if x.size < count + 1:
        ext = extrapolate(x, a, extrap_len)
        x = np.concatenate([x, ext])[: count + 1]
    if x.size < count + 1:
        x = np.concatenate([x, np.zeros(count + 1 - x.size, dtype=complex)])
    return fft.irfft(x, n=n_fft)[:count] + offset * step


def fsd_linear_predict(spectrum, grid, gamma, n_fir, extrap_len=None, divisor_floor=1e-3):
    """D_A for one (gamma, n_fir) pair.

    Returns ``(D_A, reason)``; ``reason`` is empty unless the prediction was
    rejected, in which case D_A is None.
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    if n_fir < 1:
        raise ValueError("n_fir must be >= 1")
    count = grid.count
    extrap_len = count if extrap_len is None else extrap_len
    x, offset = deconvolved_time_signal(spectrum, grid.step, gamma, divisor_floor)
    order = n_fir - 1
    if order >= x.size:
        return None, "order"
    filters, k = burg(x, order)
    if not is_stable(k):
        return None, "unstable"
    D_A = _delta_approximation(x, filters[order], offset, count, grid.step, extrap_len)
    if not np.all(np.isfinite(D_A)):
        return None, "non-finite"
    return D_A, ""


def score_candidate(spectrum, grid, D_A, gamma, wavelet_order=8):
    """(d, d_c, c_n, c_we, f_c) for one delta approximation.

    Raises ValueError when D_A has no positive mass (c_n undefined).
    """
    spectrum = np.asarray(spectrum, dtype=float)
    D_A = np.asarray(D_A, dtype=float)
    if not np.all(np.isfinite(D_A)):
        raise ValueError("D_A must be finite")
    positive = np.where(D_A > 0, D_A, 0.0)
    pos_mass = positive.sum()
    if not pos_mass > 0:
        raise ValueError("D_A has no positive mass")
    c_n = D_A.sum() / pos_mass
    d = float(np.sum((spectrum - lorentz_convolve(D_A, grid.step, gamma)) ** 2))
    d_c = float(np.sum((spectrum - c_n * lorentz_convolve(positive, grid.step, gamma)) ** 2))
    c_we = energy_concentration(D_A, wavelet_order)
    return d, d_c, float(c_n), c_we, d + d_c


def _sweep_gamma(spectrum, grid, gamma, cfg):
    """All N_FIR candidates for one width; Burg runs once at the top order."""
    count = grid.count
    extrap_len = count if cfg.extrapolation_length is None else cfg.extrapolation_length
    x, offset = deconvolved_time_signal(spectrum, grid.step, gamma, cfg.divisor_floor)
    top = min(cfg.max_fir - 1, x.size - 1)
    filters, k = burg(x, top)

    out = []
    for n_fir in range(1, cfg.max_fir + 1):
        order = n_fir - 1
        cand = CandidateSolution(gamma=float(gamma), n_fir=n_fir, D_A=None)
        out.append(cand)
        if order > top:
            cand.rejected, cand.reason = True, "order"
            continue
        if not is_stable(k[:order]):
            cand.rejected, cand.reason = True, "unstable"
            continue
        D_A = _delta_approximation(x, filters[order], offset, count, grid.step, extrap_len)
        if not np.all(np.isfinite(D_A)):
            cand.rejected, cand.reason = True, "non-finite"
            continue
        cand.D_A = D_A
        try:
            cand.d, cand.d_c, cand.c_n, cand.c_we, cand.f_c = score_candidate(
                spectrum, grid, D_A, gamma, cfg.wavelet_order
            )
        except ValueError:
            cand.rejected, cand.reason = True, "c_n"
    return out


def _top_fraction(values, fraction, gammas, n_firs, descending=False):
    n_take = int(math.ceil(fraction * len(values) - 1e-9))
    key = -values if descending else values
    # lexsort: last key is primary
    order = np.lexsort((n_firs, gammas, key))
    return order[:n_take]


def filter_candidates(valid, p_we, p_fc, p_fc_increment, min_intersection):
    """Indices into ``valid`` of the C_we/f_c intersection, the p_fc used and a warning flag."""
    c_we = np.array([c.c_we for c in valid])
    f_c = np.array([c.f_c for c in valid])
    gammas = np.array([c.gamma for c in valid])
    n_firs = np.array([c.n_fir for c in valid])

    we_set = set(_top_fraction(c_we, p_we, gammas, n_firs, descending=True).tolist())
    step = 0
    while True:
        p = min(p_fc + step * p_fc_increment, 1.0)
        fc_idx = _top_fraction(f_c, p, gammas, n_firs)
        inter = [i for i in fc_idx.tolist() if i in we_set]
        if len(inter) >= min_intersection:
            return inter, p, False
        if p >= 1.0:
            return inter, p, True
        step += 1


def prefix_residuals(spectrum, reconstructions):
    """d_M for M = 1..len(reconstructions), averaging the first M rows."""
    spectrum = np.asarray(spectrum, dtype=float)
    cums = np.cumsum(np.asarray(reconstructions, dtype=float), axis=0)
    means = cums / np.arange(1, cums.shape[0] + 1)[:, None]
    return np.sum((spectrum[None, :] - means) ** 2, axis=1)


def best_prefix(d_m, rtol=1e-12):
    """Smallest M reaching the minimum of d_M (1-based)."""
    d_m = np.asarray(d_m, dtype=float)
    best = d_m.min()
    return int(np.flatnonzero(d_m <= best + rtol * abs(best))[0]) + 1


def _smooth(narrowed, step, fwhm):
    sigma = fwhm / FWHM_PER_SIGMA / step
    return ndimage.gaussian_filter1d(narrowed, sigma, mode="reflect")


def select_and_average(candidates, cfg, spectrum, grid):
    if not candidates:
        raise ValueError("no candidates to select from")
    valid = [c for c in candidates if not c.rejected]
    if not valid:
        raise ValueError("every candidate was rejected")

    inter, p_used, warning = filter_candidates(
        valid, cfg.p_we, cfg.p_fc, cfg.p_fc_increment, cfg.min_intersection
    )
    if warning:
        logger.warning(
            "intersection has {} < {} members at p_fc = 100%; using the best-d candidate".format(
                len(inter), cfg.min_intersection
            )
        )
        best = min(range(len(valid)), key=lambda i: (valid[i].d, valid[i].gamma, valid[i].n_fir))
        inter = [best]

    pool = sorted((valid[i] for i in inter), key=lambda c: (c.d, c.gamma, c.n_fir))
    recs = np.stack([lorentz_convolve(c.D_A, grid.step, c.gamma) for c in pool])
    d_m = prefix_residuals(spectrum, recs)
    M = best_prefix(d_m)
    selected = pool[:M]

    narrowed = np.mean([c.D_A for c in selected], axis=0) / grid.step
    fwhm = 4.0 * grid.step if cfg.smoothing_fwhm is None else cfg.smoothing_fwhm
    return NarrowedSpectrum(
        narrowed=narrowed,
        smoothed=_smooth(narrowed, grid.step, fwhm),
        reconstruction=recs[:M].mean(axis=0),
        selected=selected,
        intersection=pool,
        residual=float(d_m[M - 1]),
        n_evaluated=len(candidates),
        n_valid=len(valid),
        p_fc_used=p_used,
        warning=warning,
    )


def sweep(spectrum, grid, cfg, threads=1, progress=False):
    spectrum = np.asarray(spectrum, dtype=float)
    if spectrum.shape != (grid.count,):
        raise ValueError("spectrum length does not match the grid")
    gammas = list(cfg.gammas)
    candidates = []
    with tqdm(total=len(gammas), desc="narrowing", disable=not progress) as pbar:
        for beg, end in chunk_bounds(len(gammas), max(threads, 1)):
            parts = parallel_map(
                lambda g: _sweep_gamma(spectrum, grid, g, cfg), gammas[beg:end], threads
            )
            for part in parts:
                candidates.extend(part)
            pbar.update(end - beg)
    return candidates


def narrow(spectrum, grid, cfg, threads=1, progress=False):
    """Full sweep over (gamma, N_FIR), then selection, averaging and smoothing."""
    candidates = sweep(spectrum, grid, cfg, threads=threads, progress=progress)
    n_valid = sum(not c.rejected for c in candidates)
    logger.info(
        "Narrowing: {} candidates evaluated, {} valid".format(len(candidates), n_valid)
    )
    if n_valid == 0:
        logger.warning("no stable candidate; returning a flat narrowed spectrum")
        zeros = np.zeros(grid.count)
        return NarrowedSpectrum(
            narrowed=zeros,
            smoothed=zeros.copy(),
            reconstruction=zeros.copy(),
            selected=[],
            intersection=[],
            residual=float(np.sum(np.asarray(spectrum) ** 2)),
            n_evaluated=len(candidates),
            n_valid=0,
            p_fc_used=1.0,
            warning=True,
        )
    result = select_and_average(candidates, cfg, spectrum, grid)
    logger.info(
        "Narrowing: intersection {} (p_fc {:.3f}), M = {}, d_M = {:.4g}".format(
            len(result.intersection), result.p_fc_used, len(result.selected), result.residual
        )
    )
    return result
