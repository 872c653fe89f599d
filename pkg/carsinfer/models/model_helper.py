import logging

import numpy as np

from .spectral import cars_from_raman, gaussian_loglik, voigt_shape
from .wavelet import ErrorFunctionEngine

logger = logging.getLogger("global")


def split_theta(theta):
    """(Q, 4N+1) flat parameters -> p (Q,), lines (Q, N, 4)."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    assert (theta.shape[1] - 1) % 4 == 0 and theta.shape[1] >= 5
    return theta[:, 0], theta[:, 1:].reshape(theta.shape[0], -1, 4)


def batched_raman(axis, lines):
    """V_N for a stack of line sets ``lines`` (Q, N, 4) -> (Q, K)."""
    amp = lines[..., 0:1]
    loc = lines[..., 1:2]
    sig = lines[..., 2:3]
    gam = lines[..., 3:4]
    prof = voigt_shape(axis[None, None, :] - loc, sig, gam)
    return np.sum(amp * prof, axis=1)


def batched_lines(axis, lines):
    """Per-line profiles a_n V(nu; theta_n) -> (Q, N, K)."""
    return lines[..., 0:1] * voigt_shape(
        axis[None, None, :] - lines[..., 1:2], lines[..., 2:3], lines[..., 3:4]
    )


class ForwardModel(object):
    """f = eps_m(p) * S(theta) and the Gaussian log-likelihood, for many particles at once.

    Rows of ``theta`` follow ``ModelParams.to_vector``. Each row gives the
    same result as the scalar ``forward_model``/``log_likelihood``.
    """

    def __init__(self, measured, errfun):
        if errfun.grid != measured.grid:
            raise ValueError("error-function grid does not match the measurement grid")
        assert measured.nr_level is not None, "NR level must be set"
        self.measured = measured
        self.errfun = errfun
        self.axis = measured.grid.axis
        self.mask = measured.mask

    @property
    def levels(self):
        return self.errfun.levels

    def components(self, theta):
        p, lines = split_theta(theta)
        raman = batched_raman(self.axis, lines)
        cars = cars_from_raman(raman, self.measured.nr_level)
        eps = np.atleast_2d(self.errfun.modulating_error(p))
        return {"V_N": raman, "S": cars, "eps_m": eps, "f": eps * cars}

    def predict(self, theta):
        return self.components(theta)["f"]

    def loglik(self, theta):
        assert self.measured.noise_variance is not None, "noise variance must be set"
        return gaussian_loglik(
            self.measured.values, self.predict(theta), self.measured.noise_variance, self.mask
        )


def estimate_nr_level(values, errfun, p_hat, mask=None):
    """A_J = log median(y / eps_m(p_hat)) over the kept channels."""
    flat = np.asarray(values, dtype=float) / errfun.modulating_error(p_hat)
    if mask is not None:
        flat = flat[mask]
    med = np.median(flat)
    if not med > 0:
        raise ValueError("flattened spectrum has non-positive median; set measurement.nr_level")
    return float(np.log(med))


class ModelBuilder(object):
    """Builds the error-function engine and forward model from the config."""

    def __init__(self, cfg):
        self._cfg_wavelet = cfg["wavelet"]
        self._cfg_meas = cfg["measurement"]

    def build_engine(self, measured):
        return ErrorFunctionEngine.from_signal(
            measured.grid,
            measured.values,
            order=self._cfg_wavelet["order"],
            levels=self._cfg_wavelet["levels"],
            interpolation=self._cfg_wavelet["interpolation"],
        )

    def build(self, measured, errfun=None):
        if errfun is None:
            errfun = self.build_engine(measured)
        return ForwardModel(measured, errfun)

