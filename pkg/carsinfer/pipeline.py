"""Pipeline stages. Each stage reads its predecessor's artefacts from ``out``."""
import logging
import os.path as osp

from .dataset.base import (
    read_json,
    read_numeric,
    write_bands,
    write_csv,
    write_json,
    write_spectrum,
)
from .dataset.builder import get_measurement, get_truth
from .dataset.synthetic import simulate as simulate_spectrum
from .inference import smc
from .inference.predictive import parameter_names, parameter_summary, predictive_bands
from .inference.priors import PriorSpec, build_priors, estimate_noise_variance, segment_peaks
from .models.model_helper import ModelBuilder, estimate_nr_level
from .models.spectral import retrieve_raman
from .narrowing.narrowing import CandidateSolution, NarrowingConfig, narrow as narrow_spectrum
from .utils.utils import ConfigError, DataFormatError

logger = logging.getLogger("global")

SPECTRUM = "spectrum.csv"
TRUTH = "truth.json"
NARROWED = "narrowed.csv"
CANDIDATES = "candidates.csv"
NARROWING = "narrowing.json"
PRIORS = "priors.json"
POSTERIOR = "posterior.csv"
SUMMARY = "summary.csv"
DIAGNOSTICS = "diagnostics.csv"
BANDS = "bands.csv"

NARROWED_HEADER = ("wavenumber", "raman_estimate", "narrowed", "smoothed", "reconstruction")
CANDIDATE_HEADER = ("gamma", "n_fir", "d", "d_c", "c_n", "c_we", "f_c")
SUMMARY_HEADER = ("parameter", "mean", "sd", "lower", "median", "upper")
DIAGNOSTIC_KEYS = (
    "t",
    "kappa",
    "ess_before_resample",
    "resampled",
    "acceptance",
    "log_scale",
    "log_evidence",
)


def _measurement(cfg, out):
    return get_measurement(cfg, osp.join(out, SPECTRUM))


def _p_hat(cfg, levels):
    p_hat = cfg["priors"]["p_hat"]
    if p_hat is None:
        return 0.5 * (1.0 + levels)
    if p_hat > levels:
        raise ConfigError(
            "invalid value for 'priors.p_hat': {} exceeds the wavelet depth {}".format(p_hat, levels)
        )
    return float(p_hat)


def _estimates(cfg, out):
    """Measured spectrum with the priors stage's noise variance and A_J filled in."""
    measured = _measurement(cfg, out)
    doc = read_json(osp.join(out, PRIORS))
    try:
        measured = measured.with_estimates(
            noise_variance=float(doc["noise_variance"]), nr_level=float(doc["nr_level"])
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DataFormatError("'{}': {}".format(osp.join(out, PRIORS), e))
    return measured, PriorSpec.from_dict(doc)


def simulate(cfg, out, seed):
    grid, truth = get_truth(cfg)
    measured, doc = simulate_spectrum(grid, truth, seed, edge_mask=cfg["measurement"]["edge_mask"])
    doc["seed"] = seed
    write_spectrum(osp.join(out, SPECTRUM), grid, measured.values)
    write_json(osp.join(out, TRUTH), doc)
    logger.info("Simulate Done: {}".format(osp.join(out, SPECTRUM)))
    return measured


def narrow(cfg, out, threads=1, progress=True):
    """Bootstrap V_N from the measurement and line-narrow it."""
    measured = _measurement(cfg, out)
    grid = measured.grid
    engine = ModelBuilder(cfg).build_engine(measured)
    p_hat = _p_hat(cfg, engine.levels)
    nr_level = measured.nr_level
    if nr_level is None:
        try:
            nr_level = estimate_nr_level(measured.values, engine, p_hat, measured.mask)
        except ValueError as e:
            raise DataFormatError(str(e))
    logger.info("J = {}, p_hat = {:.3f}, A_J = {:.6f}".format(engine.levels, p_hat, nr_level))

    raman = retrieve_raman(measured.values / engine.modulating_error(p_hat), nr_level)
    result = narrow_spectrum(
        raman, grid, NarrowingConfig.from_config(cfg), threads=threads, progress=progress
    )

    write_csv(
        osp.join(out, NARROWED),
        NARROWED_HEADER,
        zip(grid.axis, raman, result.narrowed, result.smoothed, result.reconstruction),
    )
    write_csv(
        osp.join(out, CANDIDATES),
        CANDIDATE_HEADER,
        ((c.gamma, c.n_fir, c.d, c.d_c, c.c_n, c.c_we, c.f_c) for c in result.intersection),
    )
    write_json(
        osp.join(out, NARROWING),
        {
            "M": len(result.selected),
            "intersection": len(result.intersection),
            "evaluated": result.n_evaluated,
            "valid": result.n_valid,
            "p_fc_used": result.p_fc_used,
            "residual": result.residual,
            "warning": result.warning,
            "levels": engine.levels,
            "p_hat": p_hat,
            "nr_level": nr_level,
        },
    )
    logger.info(
        "Narrow Done: M = {} of {} intersecting candidates".format(
            len(result.selected), len(result.intersection)
        )
    )
    return result


def _read_candidates(path):
    _, data = read_numeric(path, CANDIDATE_HEADER)
    if data.shape[0] == 0:
        raise DataFormatError("'{}' lists no candidates".format(path))
    return [CandidateSolution(gamma=row[0], n_fir=int(row[1]), D_A=None) for row in data]


def priors(cfg, out):
    measured = _measurement(cfg, out)
    grid = measured.grid
    nar_doc = read_json(osp.join(out, NARROWING))
    _, table = read_numeric(osp.join(out, NARROWED), NARROWED_HEADER)
    if table.shape[0] != grid.count:
        raise DataFormatError(
            "'{}' has {} rows, spectrum has {}".format(osp.join(out, NARROWED), table.shape[0], grid.count)
        )
    candidates = _read_candidates(osp.join(out, CANDIDATES))
    try:
        p_hat = float(nar_doc["p_hat"])
        nr_level = float(nar_doc["nr_level"])
    except (KeyError, TypeError, ValueError) as e:
        raise DataFormatError("'{}': {}".format(osp.join(out, NARROWING), e))

    cfg_pri = cfg["priors"]
    engine = ModelBuilder(cfg).build_engine(measured)
    segments = segment_peaks(
        table[:, 3],
        grid,
        prominence=cfg_pri["prominence"],
        min_width=cfg_pri["min_segment_width"],
        segments=cfg_pri["segments"],
        support_floor=cfg_pri["support_floor"],
    )
    spec = build_priors(segments, candidates, engine.levels, cfg_pri, grid.step)
    for n in range(spec.num_lines):
        logger.info(
            " * line {}: nu ~ N({:.2f}, {:.3f}), a ~ {:.3f}".format(
                n + 1, spec.location_mean[n], spec.location_var[n], spec.amplitude_mean[n]
            )
        )

    measured = measured.with_estimates(nr_level=nr_level)
    noise_variance = measured.noise_variance
    if noise_variance is None:
        noise_variance = estimate_noise_variance(
            measured, table[:, 4], p_hat, engine, floor=cfg_pri["noise_floor"]
        )
    logger.info("noise variance {:.4g}".format(noise_variance))

    doc = spec.to_dict()
    doc.update(noise_variance=noise_variance, nr_level=nr_level, p_hat=p_hat)
    write_json(osp.join(out, PRIORS), doc)
    logger.info("Priors Done: {} lines".format(spec.num_lines))
    return spec


def fit(cfg, out, seed, threads=1, tb_logger=None, progress=True):
    measured, spec = _estimates(cfg, out)
    model = ModelBuilder(cfg).build(measured)
    result = smc.run(
        model, spec, cfg, seed=seed, threads=threads, tb_logger=tb_logger,
        progress=progress, with_bands=False,
    )

    write_csv(osp.join(out, POSTERIOR), parameter_names(result.num_lines), result.draws)
    write_csv(
        osp.join(out, SUMMARY),
        SUMMARY_HEADER,
        parameter_summary(result.draws, cfg["smc"]["band_level"]),
    )
    write_csv(
        osp.join(out, DIAGNOSTICS),
        DIAGNOSTIC_KEYS,
        ([row[k] for k in DIAGNOSTIC_KEYS] for row in result.diagnostics),
    )
    logger.info("Fit Done: log evidence {:.4f}".format(result.log_evidence))
    return result


def predict(cfg, out, seed, threads=1):
    measured, spec = _estimates(cfg, out)
    path = osp.join(out, POSTERIOR)
    _, draws = read_numeric(path, parameter_names(spec.num_lines))
    if draws.shape[0] == 0:
        raise DataFormatError("'{}' has no draws".format(path))
    model = ModelBuilder(cfg).build(measured)
    bands = predictive_bands(
        model,
        draws,
        seed,
        level=cfg["smc"]["band_level"],
        threads=threads,
        chunk_size=cfg["smc"]["chunk_size"],
    )
    write_bands(osp.join(out, BANDS), measured.grid.axis, bands)
    logger.info("Predict Done: {} series".format(len(bands)))
    return bands


def pipeline(cfg, out, seed, threads=1, tb_logger=None, progress=True):
    simulate(cfg, out, seed)
    narrow(cfg, out, threads=threads, progress=progress)
    priors(cfg, out)
    fit(cfg, out, seed, threads=threads, tb_logger=tb_logger, progress=progress)
    return predict(cfg, out, seed, threads=threads)

