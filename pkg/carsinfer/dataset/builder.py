import logging

from ..models.spectral import MeasuredSpectrum, ModelParams, WavenumberGrid
from ..utils.utils import DataFormatError
from .base import read_spectrum
from .synthetic import (
    SyntheticTruth,
    lines_from_config,
    polynomial_log_artefact,
    wavelet_log_artefact,
)

logger = logging.getLogger("global")


def get_artefact(cfg_art, grid):
    """(log artefact, p*) for the configured artefact kind."""
    if cfg_art["kind"] == "polynomial":
        log_eps = polynomial_log_artefact(grid, cfg_art["coefficients"], cfg_art["modulation"])
        return log_eps, None

    elif cfg_art["kind"] == "wavelet":
        log_eps = wavelet_log_artefact(
            grid,
            cfg_art["coefficients"],
            cfg_art["modulation"],
            cfg_art["p"],
            cfg_art["order"],
        )
        return log_eps, float(cfg_art["p"])

    else:
        raise NotImplementedError("artefact kind {} is not supported".format(cfg_art["kind"]))


def get_truth(cfg):
    grid = WavenumberGrid.from_config(cfg["grid"])
    cfg_sim = cfg["simulate"]
    log_eps, p_star = get_artefact(cfg_sim["artefact"], grid)
    params = ModelParams(lines_from_config(cfg_sim["lines"]), p=1.0 if p_star is None else p_star)
    truth = SyntheticTruth(
        params=params,
        log_artefact=log_eps,
        nr_level=float(cfg_sim["nr_level"]),
        noise_sd=float(cfg_sim["noise_sd"]),
        kind=cfg_sim["artefact"]["kind"],
        p_star=p_star,
    )
    return grid, truth


def get_measurement(cfg, path):
    """MeasuredSpectrum from a spectrum CSV with the measurement settings of ``cfg``."""
    grid, values = read_spectrum(path)
    cfg_meas = cfg["measurement"]
    if 2 * cfg_meas["edge_mask"] >= grid.count:
        raise DataFormatError(
            "'{}' has {} channels, too few for edge mask {}".format(path, grid.count, cfg_meas["edge_mask"])
        )
    measured = MeasuredSpectrum(
        grid,
        values,
        noise_variance=cfg_meas["noise_variance"],
        nr_level=cfg_meas["nr_level"],
        edge_mask=cfg_meas["edge_mask"],
    )
    logger.info("Get measurement Done...")
    return measured
