"""CARS forward model: Voigt lines, discrete Hilbert transform, CARS modulus."""
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft
from scipy.special import wofz

SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class WavenumberGrid:
    start: float
    step: float
    count: int

    def __post_init__(self):
        if not (np.isfinite(self.start) and np.isfinite(self.step)):
            raise ValueError("grid start and step must be finite")
        if self.step <= 0:
            raise ValueError("grid step must be > 0, got {}".format(self.step))
        if int(self.count) != self.count or self.count < 8:
            raise ValueError("grid count must be an integer >= 8, got {}".format(self.count))

    @property
    def axis(self):
        return self.start + self.step * np.arange(self.count)

    @property
    def stop(self):
        return self.start + self.step * (self.count - 1)

    @classmethod
    def from_config(cls, cfg_grid):
        return cls(float(cfg_grid["start"]), float(cfg_grid["step"]), int(cfg_grid["count"]))

    @classmethod
    def from_axis(cls, axis, rtol=1e-6):
        axis = np.asarray(axis, dtype=float)
        if axis.ndim != 1 or axis.size < 8:
            raise ValueError("wavenumber axis needs at least 8 points")
        diffs = np.diff(axis)
        step = (axis[-1] - axis[0]) / (axis.size - 1)
        if step <= 0 or np.max(np.abs(diffs - step)) > rtol * abs(step):
            raise ValueError("wavenumber axis is not uniform and increasing")
        return cls(float(axis[0]), float(step), int(axis.size))


@dataclass(frozen=True)
class VoigtLine:
    amplitude: float
    location: float
    sigma: float
    gamma: float

    def __post_init__(self):
        values = (self.amplitude, self.location, self.sigma, self.gamma)
        if not all(np.isfinite(v) for v in values):
            raise ValueError("non-finite Voigt parameter in {}".format(values))
        if self.amplitude <= 0:
            raise ValueError("amplitude must be > 0")
        if self.sigma < 0 or self.gamma < 0:
            raise ValueError("widths must be >= 0")
        if self.sigma == 0 and self.gamma == 0:
            raise ValueError("sigma and gamma cannot both be zero")

    def as_tuple(self):
        return (self.amplitude, self.location, self.sigma, self.gamma)


@dataclass(frozen=True)
class ModelParams:
    """Line parameters theta and background level p.

    The flat vector layout ``[p, a_1, nu_1, sigma_1, gamma_1, ...]`` is shared
    with the posterior CSV and the batched forward model.
    """

    lines: tuple
    p: float

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple(self.lines))
        if len(self.lines) < 1:
            raise ValueError("at least one line is required")
        if not np.isfinite(self.p):
            raise ValueError("background level p must be finite")

    @property
    def num_lines(self):
        return len(self.lines)

    @property
    def dim(self):
        return 4 * len(self.lines) + 1

    def sorted(self):
        return replace(self, lines=tuple(sorted(self.lines, key=lambda ln: ln.location)))

    def to_vector(self):
        vec = [self.p]
        for line in self.lines:
            vec.extend(line.as_tuple())
        return np.asarray(vec, dtype=float)

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 1 or vec.size < 5 or (vec.size - 1) % 4 != 0:
            raise ValueError("parameter vector must have length 4N + 1")
        lines = [VoigtLine(*map(float, row)) for row in vec[1:].reshape(-1, 4)]
        return cls(tuple(lines), float(vec[0]))


@dataclass(frozen=True, eq=False)
class MeasuredSpectrum:
    """Observed intensities on a grid.

    ``noise_variance`` and ``nr_level`` may be left as None until the priors
    stage has estimated them; the likelihood requires both.
    """

    grid: WavenumberGrid
    values: np.ndarray = field(repr=False)
    noise_variance: float = None
    nr_level: float = None
    edge_mask: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.count,):
            raise ValueError(
                "spectrum has {} values, grid has {}".format(values.size, self.grid.count)
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrum values must be finite")
        if self.noise_variance is not None and not self.noise_variance > 0:
            raise ValueError("noise variance must be > 0")
        if self.edge_mask < 0 or 2 * self.edge_mask >= self.grid.count:
            raise ValueError("edge mask {} leaves no channels".format(self.edge_mask))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def mask(self):
        keep = np.ones(self.grid.count, dtype=bool)
        if self.edge_mask:
            keep[: self.edge_mask] = False
            keep[-self.edge_mask:] = False
        return keep

    def with_estimates(self, noise_variance=None, nr_level=None):
        return replace(
            self,
            noise_variance=self.noise_variance if noise_variance is None else noise_variance,
            nr_level=self.nr_level if nr_level is None else nr_level,
        )


def voigt_shape(x, sigma, gamma):
    """Unit-area Voigt profile at offsets ``x``; broadcasts over all arguments."""
    x, sigma, gamma = np.broadcast_arrays(
        np.asarray(x, dtype=float), np.asarray(sigma, dtype=float), np.asarray(gamma, dtype=float)
    )
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(sigma)) and np.all(np.isfinite(gamma))):
        raise ValueError("Voigt arguments must be finite")
    if np.any(sigma < 0) or np.any(gamma < 0):
        raise ValueError("widths must be >= 0")
    if np.any((sigma == 0) & (gamma == 0)):
        raise ValueError("sigma and gamma cannot both be zero")

    out = np.empty(x.shape)
    lorentz = sigma == 0
    gauss = (gamma == 0) & ~lorentz
    mixed = ~(lorentz | gauss)

    if np.any(lorentz):
        g = gamma[lorentz]
        out[lorentz] = g / (np.pi * (x[lorentz] ** 2 + g ** 2))
    if np.any(gauss):
        s = sigma[gauss]
        out[gauss] = np.exp(-0.5 * (x[gauss] / s) ** 2) / (s * SQRT_2PI)
    if np.any(mixed):
        s = sigma[mixed]
        z = (x[mixed] + 1j * gamma[mixed]) / (s * np.sqrt(2.0))
        out[mixed] = np.real(wofz(z)) / (s * SQRT_2PI)
    return out


def voigt_profile(grid, line):
    return line.amplitude * voigt_shape(grid.axis - line.location, line.sigma, line.gamma)


def _lines_of(params):
    if isinstance(params, ModelParams):
        return params.lines
    return tuple(params)


def raman_signal(grid, params):
    """V_N: sum of the Voigt lines of ``params`` (a ModelParams or a list of lines)."""
    total = np.zeros(grid.count)
    for line in _lines_of(params):
        total += voigt_profile(grid, line)
    return total


def _fft_hilbert(x, n_fft):
    spec = fft.rfft(x, n=n_fft, axis=-1)
    spec *= -1j
    spec[..., 0] = 0.0
    if n_fft % 2 == 0:
        spec[..., -1] = 0.0
    return fft.irfft(spec, n=n_fft, axis=-1)


def hilbert_transform(signal, mode="padded"):
    """Discrete Hilbert transform along the last axis, with H{cos} = sin.

    ``padded`` extends the record by K/2 mirrored samples on each side,
    tapered to zero by a half-Hann window, then zero-fills to 4K before the
    FFT and crops back. ``periodic`` treats the record as one period.
    """
    x = np.asarray(signal, dtype=float)
    K = x.shape[-1]
    if K < 8:
        raise ValueError("Hilbert transform needs at least 8 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("Hilbert transform input must be finite")

    if mode == "periodic":
        return _fft_hilbert(x, K)
    elif mode == "padded":
        pad = K // 2
        dist = np.arange(1, pad + 1)
        taper = 0.5 * (1.0 + np.cos(np.pi * dist / (pad + 1)))
        left = (x[..., 1 : pad + 1] * taper)[..., ::-1]
        right = x[..., K - 1 - pad : K - 1][..., ::-1] * taper
        ext = np.concatenate([left, x, right], axis=-1)
        return _fft_hilbert(ext, 4 * K)[..., pad : pad + K]
    else:
        raise NotImplementedError("hilbert mode {}".format(mode))


def cars_from_raman(raman, nr_level, mode="padded"):
    """|exp(A_J/2) + i V - H{V}|^2 for a Raman signal (or a stack of them)."""
    raman = np.asarray(raman, dtype=float)
    nr = np.exp(0.5 * nr_level)
    conj = hilbert_transform(raman, mode=mode)
    return (nr - conj) ** 2 + raman ** 2


def cars_signal(grid, params, nr_level):
    lines = _lines_of(params)
    if not lines:
        return np.full(grid.count, np.exp(nr_level))
    return cars_from_raman(raman_signal(grid, lines), nr_level)


def retrieve_raman(flattened, nr_level):
    """Imaginary (Raman) part of an artefact-free CARS spectrum.

    Inverts the CARS modulus with the Hilbert phase of its log-amplitude,
    exact when the resonant part stays below the NR background.
    """
    flattened = np.asarray(flattened, dtype=float)
    nr = np.exp(nr_level)
    ratio = np.clip(flattened / nr, 1e-12, None)
    log_amp = 0.5 * np.log(ratio)
    phase = hilbert_transform(log_amp - log_amp.mean())
    return np.sqrt(nr * ratio) * np.sin(phase)


def _check_grid(measured, errfun):
    if errfun.grid != measured.grid:
        raise ValueError("error-function grid does not match the measurement grid")


def forward_model(measured, params, errfun):
    _check_grid(measured, errfun)
    if measured.nr_level is None:
        raise ValueError("measurement has no NR level")
    eps = errfun.modulating_error(params.p)
    return eps * cars_signal(measured.grid, params, measured.nr_level)


def gaussian_loglik(values, fitted, noise_variance, mask=None):
    """Sum of Gaussian log-densities over the last axis (optionally masked)."""
    resid = np.asarray(values, dtype=float) - np.asarray(fitted, dtype=float)
    if mask is not None:
        resid = resid[..., mask]
    n = resid.shape[-1]
    return -0.5 * np.sum(resid ** 2, axis=-1) / noise_variance - 0.5 * n * np.log(
        2.0 * np.pi * noise_variance
    )


def log_likelihood(measured, params, errfun):
    if measured.noise_variance is None:
        raise ValueError("measurement has no noise variance")
    fitted = forward_model(measured, params, errfun)
    return float(gaussian_loglik(measured.values, fitted, measured.noise_variance, measured.mask))
