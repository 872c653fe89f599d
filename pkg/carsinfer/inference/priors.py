"""Priors from a line-narrowed spectrum, noise-variance estimate, prior sampling
and log-density."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, signal, stats

from ..models.model_helper import split_theta
from ..models.spectral import ModelParams, cars_from_raman
from ..utils.utils import DataFormatError

logger = logging.getLogger("global")

LOG_FWHM_SHIFT = math.log(math.sqrt(2.0 * math.log(2.0)))
MIN_NOISE_CHANNELS = 16
PRIOR_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PeakSegment:
    lo: int
    hi: int
    support: tuple
    area: float
    mean: float
    var: float


@dataclass(frozen=True, eq=False)
class PriorSpec:
    location_mean: np.ndarray = field(repr=False)
    location_var: np.ndarray = field(repr=False)
    amplitude_mean: np.ndarray = field(repr=False)
    mu_log_gamma: float
    var_log_gamma: float
    mu_log_sigma: float
    var_log_sigma: float
    p_min: float
    p_max: float
    warning: bool = False

    def __post_init__(self):
        for name in ("location_mean", "location_var", "amplitude_mean"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.location_mean.size
        if n < 1:
            raise ValueError("prior needs at least one line")
        if self.location_var.size != n or self.amplitude_mean.size != n:
            raise ValueError("per-line prior vectors differ in length")
        if np.any(self.location_var <= 0) or self.var_log_gamma <= 0 or self.var_log_sigma <= 0:
            raise ValueError("prior variances must be > 0")
        if np.any(self.amplitude_mean <= 0):
            raise ValueError("amplitude prior means must be > 0")
        if not (1.0 <= self.p_min < self.p_max):
            raise ValueError("background prior needs 1 <= p_min < p_max")

    @property
    def num_lines(self):
        return self.location_mean.size

    @property
    def dim(self):
        return 4 * self.num_lines + 1

    @property
    def amplitude_sd(self):
        return self.amplitude_mean / 4.0

    def to_dict(self):
        return {
            "schema_version": PRIOR_SCHEMA_VERSION,
            "lines": [
                {
                    "location_mean": float(m),
                    "location_var": float(v),
                    "amplitude_mean": float(a),
                }
                for m, v, a in zip(self.location_mean, self.location_var, self.amplitude_mean)
            ],
            "log_gamma": {"mean": self.mu_log_gamma, "var": self.var_log_gamma},
            "log_sigma": {"mean": self.mu_log_sigma, "var": self.var_log_sigma},
            "p": {"min": self.p_min, "max": self.p_max},
            "warning": self.warning,
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            if doc["schema_version"] != PRIOR_SCHEMA_VERSION:
                raise DataFormatError(
                    "unsupported prior schema_version {}".format(doc["schema_version"])
                )
            lines = doc["lines"]
            return cls(
                location_mean=[ln["location_mean"] for ln in lines],
                location_var=[ln["location_var"] for ln in lines],
                amplitude_mean=[ln["amplitude_mean"] for ln in lines],
                mu_log_gamma=float(doc["log_gamma"]["mean"]),
                var_log_gamma=float(doc["log_gamma"]["var"]),
                mu_log_sigma=float(doc["log_sigma"]["mean"]),
                var_log_sigma=float(doc["log_sigma"]["var"]),
                p_min=float(doc["p"]["min"]),
                p_max=float(doc["p"]["max"]),
                warning=bool(doc.get("warning", False)),
            )
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, DataFormatError):
                raise
            raise DataFormatError("malformed prior document: {}".format(e))


def _support(x, peak, floor):
    lo = peak
    while lo > 0 and x[lo - 1] > floor:
        lo -= 1
    hi = peak
    while hi < x.size - 1 and x[hi + 1] > floor:
        hi += 1
    return lo, hi


def _moments(axis, x, lo, hi):
    nu = axis[lo : hi + 1]
    w = x[lo : hi + 1]
    if hi == lo:
        return float(nu[0]), 0.0
    mass = integrate.trapezoid(w, nu)
    mean = integrate.trapezoid(w * nu, nu) / mass
    var = integrate.trapezoid(w * (nu - mean) ** 2, nu) / mass
    return float(mean), float(var)


def _merge_narrow(bounds, x, min_width):
    bounds = list(bounds)
    while len(bounds) > 2:
        widths = np.diff(bounds)
        narrow = np.flatnonzero(widths < min_width)
        if narrow.size == 0:
            break
        i = int(narrow[0])
        if i == 0:
            del bounds[1]
        elif i == len(widths) - 1:
            del bounds[-2]
        elif x[bounds[i]] >= x[bounds[i + 1]]:
            del bounds[i]
        else:
            del bounds[i + 1]
    return bounds


def segment_peaks(narrowed, grid, prominence=0.02, min_width=3, segments=None, support_floor=0.01):
    """Split a narrowed spectrum into per-line segments.

    Segments share their boundary channels so the segment areas add up to
    the trapezoid area of the clipped spectrum. Moments use the contiguous
    run around each apex above ``support_floor`` times the apex height.
    ``segments`` (list of [low, high] wavenumbers) overrides the automatic split.
    """
    x = np.clip(np.asarray(narrowed, dtype=float), 0.0, None)
    axis = grid.axis
    top = x.max() if x.size else 0.0
    if not top > 0:
        raise ValueError("no segment found: spectrum has no positive part")

    if segments is not None:
        out = []
        for low, high in segments:
            lo = int(np.clip(np.searchsorted(axis, low, side="left"), 0, grid.count - 1))
            hi = int(np.clip(np.searchsorted(axis, high, side="right") - 1, 0, grid.count - 1))
            if hi <= lo:
                raise ValueError("segment [{}, {}] covers fewer than two channels".format(low, high))
            peak = lo + int(np.argmax(x[lo : hi + 1]))
            area = float(integrate.trapezoid(x[lo : hi + 1], axis[lo : hi + 1]))
            if not area > 0:
                raise ValueError("segment [{}, {}] has no positive area".format(low, high))
            mean, var = _moments(axis, x, lo, hi)
            out.append(PeakSegment(lo, hi, (lo, hi), area, mean, var))
        return out

    peaks, _ = signal.find_peaks(x, prominence=prominence * top)
    if peaks.size == 0:
        raise ValueError("no segment found above relative prominence {}".format(prominence))

    bounds = [0]
    for left, right in zip(peaks[:-1], peaks[1:]):
        bounds.append(int(left + np.argmin(x[left : right + 1])))
    bounds.append(grid.count - 1)
    bounds = _merge_narrow(bounds, x, min_width)

    out = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        peak = lo + int(np.argmax(x[lo : hi + 1]))
        s_lo, s_hi = _support(x, peak, support_floor * x[peak])
        s_lo, s_hi = max(s_lo, lo), min(s_hi, hi)
        area = float(integrate.trapezoid(x[lo : hi + 1], axis[lo : hi + 1]))
        mean, var = _moments(axis, x, s_lo, s_hi)
        out.append(PeakSegment(lo, hi, (s_lo, s_hi), area, mean, var))
    return out


def build_priors(segments, candidates, levels, cfg, step):
    """PriorSpec from peak segments and the narrowing intersection set.

    ``cfg`` is the ``priors`` config section; ``step`` the grid step h.
    """
    if not segments:
        raise ValueError("no segments to build priors from")
    if not candidates:
        raise ValueError("no narrowing candidates to build priors from")
    warning = False
    log_g = np.log([c.gamma for c in candidates])
    mu = float(np.mean(log_g))
    var = float(np.var(log_g, ddof=1)) if log_g.size >= 2 else 0.0
    if not var > 0:
        logger.warning(
            "width prior variance undefined from {} candidates; using {}".format(
                log_g.size, cfg["default_log_width_variance"]
            )
        )
        var = float(cfg["default_log_width_variance"])
        warning = True

    p_min = float(cfg["p_min"])
    p_max = float(levels if cfg["p_max"] is None else cfg["p_max"])
    if p_max > levels:
        raise ValueError("p_max {} exceeds the wavelet depth {}".format(p_max, levels))

    loc_floor = (cfg["location_sd_floor"] * step) ** 2
    return PriorSpec(
        location_mean=[s.mean for s in segments],
        location_var=[max(s.var, loc_floor) for s in segments],
        amplitude_mean=[s.area for s in segments],
        mu_log_gamma=mu,
        var_log_gamma=var,
        mu_log_sigma=mu - LOG_FWHM_SHIFT,
        var_log_sigma=var,
        p_min=p_min,
        p_max=p_max,
        warning=warning,
    )


def estimate_noise_variance(measured, smooth_raman, p_hat, errfun, floor=1e-12):
    """Sample variance of y - eps_m(p_hat) S(smooth_raman) over the kept channels."""
    if measured.nr_level is None:
        raise ValueError("measurement has no NR level")
    mask = measured.mask
    if np.count_nonzero(mask) < MIN_NOISE_CHANNELS:
        raise ValueError(
            "noise estimate needs at least {} unmasked channels".format(MIN_NOISE_CHANNELS)
        )
    fitted = errfun.modulating_error(p_hat) * cars_from_raman(smooth_raman, measured.nr_level)
    resid = (measured.values - fitted)[mask]
    return max(float(np.var(resid, ddof=1)), floor)


def _amplitude_dist(spec):
    sd = spec.amplitude_sd
    return stats.truncnorm(-spec.amplitude_mean / sd, np.inf, loc=spec.amplitude_mean, scale=sd)


def sample_prior_matrix(spec, rng, size, max_tries=1000):
    """``size`` prior draws as rows of the flat layout [p, a_1, nu_1, sigma_1, gamma_1, ...].

    Draws whose locations come out unsorted are redrawn.
    """
    n = spec.num_lines
    theta = np.empty((size, spec.dim))
    todo = np.arange(size)
    amp = _amplitude_dist(spec)
    for _ in range(max_tries):
        m = todo.size
        draw = np.empty((m, spec.dim))
        draw[:, 0] = rng.uniform(spec.p_min, spec.p_max, size=m)
        lines = draw[:, 1:].reshape(m, n, 4)
        lines[..., 0] = amp.rvs(size=(m, n), random_state=rng)
        lines[..., 1] = rng.normal(spec.location_mean, np.sqrt(spec.location_var), size=(m, n))
        lines[..., 2] = np.exp(rng.normal(spec.mu_log_sigma, math.sqrt(spec.var_log_sigma), size=(m, n)))
        lines[..., 3] = np.exp(rng.normal(spec.mu_log_gamma, math.sqrt(spec.var_log_gamma), size=(m, n)))
        ok = np.all(np.diff(lines[..., 1], axis=1) > 0, axis=1)
        theta[todo[ok]] = draw[ok]
        todo = todo[~ok]
        if todo.size == 0:
            return theta
    raise ValueError("location priors overlap too much to draw ordered lines")


def sample_prior(spec, rng):
    return ModelParams.from_vector(sample_prior_matrix(spec, rng, 1)[0])


def log_prior_matrix(spec, theta):
    """Log prior density for each row of ``theta``; -inf outside the support."""
    p, lines = split_theta(theta)
    if lines.shape[1] != spec.num_lines:
        raise ValueError("parameter rows have {} lines, prior has {}".format(
            lines.shape[1], spec.num_lines))
    amp, loc, sig, gam = (lines[..., i] for i in range(4))
    inside = (p >= spec.p_min) & (p <= spec.p_max)
    inside &= np.all(amp > 0, axis=1) & np.all(sig > 0, axis=1) & np.all(gam > 0, axis=1)
    inside &= np.all(np.diff(loc, axis=1) > 0, axis=1)
    out = np.full(p.shape, -np.inf)
    if not np.any(inside):
        return out
    amp, loc, sig, gam = amp[inside], loc[inside], sig[inside], gam[inside]
    lp = -math.log(spec.p_max - spec.p_min)
    lp = lp + np.sum(_amplitude_dist(spec).logpdf(amp), axis=1)
    lp += np.sum(stats.norm.logpdf(loc, spec.location_mean, np.sqrt(spec.location_var)), axis=1)
    lp += np.sum(
        stats.lognorm.logpdf(sig, math.sqrt(spec.var_log_sigma), scale=math.exp(spec.mu_log_sigma)),
        axis=1,
    )
    lp += np.sum(
        stats.lognorm.logpdf(gam, math.sqrt(spec.var_log_gamma), scale=math.exp(spec.mu_log_gamma)),
        axis=1,
    )
    out[inside] = lp
    return out


def log_prior_density(spec, params):
    return float(log_prior_matrix(spec, params.to_vector()[None, :])[0])


def prior_sd(spec):
    """Per-component prior sd in the MCMC's transformed space (log for a, sigma, gamma)."""
    n = spec.num_lines
    sd = np.empty(spec.dim)
    sd[0] = (spec.p_max - spec.p_min) / math.sqrt(12.0)
    lines = sd[1:].reshape(n, 4)
    lines[:, 0] = 0.25
    lines[:, 1] = np.sqrt(spec.location_var)
    lines[:, 2] = math.sqrt(spec.var_log_sigma)
    lines[:, 3] = math.sqrt(spec.var_log_gamma)
    return sd

