"""Pipeline configuration: defaults, loading and validation."""
import copy
import logging
import os

import yaml

from .utils import ConfigError

logger = logging.getLogger("global")

SCHEMA_VERSION = 1
THREADS_ENV = "CARS_INFER_THREADS"

DEFAULT_LINES = [
    {"amplitude": 6.0, "location": 850.0, "sigma": 2.0, "gamma": 4.0},
    {"amplitude": 4.0, "location": 960.0, "sigma": 2.5, "gamma": 5.0},
    {"amplitude": 8.0, "location": 1080.0, "sigma": 3.0, "gamma": 4.5},
]

# Empty document resolves to exactly these values.
DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "threads": 1,
    "tensorboard": True,
    "grid": {
        "start": 700.0,
        "step": 0.5,
        "count": 1024,
    },
    "measurement": {
        "edge_mask": 16,
        "nr_level": None,
        "noise_variance": None,
    },
    "wavelet": {
        "order": 34,
        "levels": None,
        "interpolation": "floor",
        "energy_order": 8,
    },
    "narrowing": {
        "gamma_min": 1.0,
        "gamma_max": 35.0,
        "gamma_points": 33,
        "max_fir": 150,
        "extrapolation_length": None,
        "p_we": 0.5,
        "p_fc": 0.025,
        "p_fc_increment": 0.025,
        "min_intersection": 50,
        "smoothing_fwhm": None,
        "divisor_floor": 1e-3,
    },
    "priors": {
        "p_hat": None,
        "p_min": 1.0,
        "p_max": None,
        "prominence": 0.02,
        "min_segment_width": 3,
        "segments": None,
        "support_floor": 0.01,
        "default_log_width_variance": 0.25,
        "location_sd_floor": 1.0,
        "noise_floor": 1e-12,
    },
    "smc": {
        "num_particles": 2000,
        "resample_threshold": 1000,
        "learning_rate": 0.9,
        "mcmc_moves": 200,
        "target_acceptance": 0.23,
        "initial_scale": 0.1,
        "adaptation_gain": 1.0,
        "scale_mode": "robbins_monro",
        "band_level": 0.95,
        "max_iterations": 100000,
        "chunk_size": 64,
    },
    "simulate": {
        "noise_sd": 0.02,
        "nr_level": 0.0,
        "lines": DEFAULT_LINES,
        "artefact": {
            "kind": "polynomial",
            "coefficients": [0.0, 0.6, -0.3, 0.2],
            "modulation": 0.15,
            "p": None,
            "order": 34,
        },
    },
}

LINE_KEYS = ("amplitude", "location", "sigma", "gamma")


def default_config():
    return copy.deepcopy(DEFAULTS)


def _merge(defaults, doc, path):
    merged = copy.deepcopy(defaults)
    for key, value in doc.items():
        dotted = "{}.{}".format(path, key) if path else str(key)
        if key not in defaults:
            raise ConfigError("unknown configuration key '{}'".format(dotted))
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError("'{}' must be a mapping".format(dotted))
            merged[key] = _merge(defaults[key], value, dotted)
        else:
            merged[key] = value
    return merged


def _check(cond, key, msg):
    if not cond:
        raise ConfigError("invalid value for '{}': {}".format(key, msg))


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def validate_config(cfg):
    _check(cfg["schema_version"] == SCHEMA_VERSION, "schema_version",
           "expected {}".format(SCHEMA_VERSION))
    _check(_is_int(cfg["seed"]) and cfg["seed"] >= 0, "seed", "non-negative integer")
    _check(_is_int(cfg["threads"]) and cfg["threads"] >= 1, "threads", "integer >= 1")
    _check(isinstance(cfg["tensorboard"], bool), "tensorboard", "boolean")

    grid = cfg["grid"]
    _check(_is_num(grid["start"]), "grid.start", "number")
    _check(_is_num(grid["step"]) and grid["step"] > 0, "grid.step", "> 0")
    _check(_is_int(grid["count"]) and grid["count"] >= 8, "grid.count", "integer >= 8")

    meas = cfg["measurement"]
    _check(_is_int(meas["edge_mask"]) and meas["edge_mask"] >= 0,
           "measurement.edge_mask", "integer >= 0")
    _check(meas["nr_level"] is None or _is_num(meas["nr_level"]),
           "measurement.nr_level", "number or null")
    _check(meas["noise_variance"] is None
           or (_is_num(meas["noise_variance"]) and meas["noise_variance"] > 0),
           "measurement.noise_variance", "> 0 or null")

    wav = cfg["wavelet"]
    _check(_is_int(wav["order"]) and wav["order"] >= 2, "wavelet.order", "integer >= 2")
    _check(_is_int(wav["energy_order"]) and wav["energy_order"] >= 2,
           "wavelet.energy_order", "integer >= 2")
    _check(wav["levels"] is None or (_is_int(wav["levels"]) and wav["levels"] >= 1),
           "wavelet.levels", "integer >= 1 or null")
    _check(wav["interpolation"] in ("floor", "ceil"), "wavelet.interpolation",
           "'floor' or 'ceil'")

    nar = cfg["narrowing"]
    _check(_is_num(nar["gamma_min"]) and nar["gamma_min"] > 0, "narrowing.gamma_min", "> 0")
    _check(_is_num(nar["gamma_max"]) and nar["gamma_max"] >= nar["gamma_min"],
           "narrowing.gamma_max", ">= gamma_min")
    _check(_is_int(nar["gamma_points"]) and nar["gamma_points"] >= 1,
           "narrowing.gamma_points", "integer >= 1")
    _check(_is_int(nar["max_fir"]) and nar["max_fir"] >= 2, "narrowing.max_fir", "integer >= 2")
    _check(nar["extrapolation_length"] is None
           or (_is_int(nar["extrapolation_length"]) and nar["extrapolation_length"] >= 1),
           "narrowing.extrapolation_length", "integer >= 1 or null")
    for key in ("p_we", "p_fc", "p_fc_increment"):
        _check(_is_num(nar[key]) and 0 < nar[key] <= 1, "narrowing." + key, "in (0, 1]")
    _check(_is_int(nar["min_intersection"]) and nar["min_intersection"] >= 1,
           "narrowing.min_intersection", "integer >= 1")
    _check(nar["smoothing_fwhm"] is None
           or (_is_num(nar["smoothing_fwhm"]) and nar["smoothing_fwhm"] > 0),
           "narrowing.smoothing_fwhm", "> 0 or null")
    _check(_is_num(nar["divisor_floor"]) and 0 < nar["divisor_floor"] < 1,
           "narrowing.divisor_floor", "in (0, 1)")

    pri = cfg["priors"]
    _check(pri["p_hat"] is None or (_is_num(pri["p_hat"]) and pri["p_hat"] >= 1),
           "priors.p_hat", ">= 1 or null")
    _check(_is_num(pri["p_min"]) and pri["p_min"] >= 1, "priors.p_min", ">= 1")
    _check(pri["p_max"] is None or (_is_num(pri["p_max"]) and pri["p_max"] > pri["p_min"]),
           "priors.p_max", "> p_min or null")
    _check(_is_num(pri["prominence"]) and 0 < pri["prominence"] < 1,
           "priors.prominence", "in (0, 1)")
    _check(_is_int(pri["min_segment_width"]) and pri["min_segment_width"] >= 1,
           "priors.min_segment_width", "integer >= 1")
    if pri["segments"] is not None:
        _check(isinstance(pri["segments"], list) and len(pri["segments"]) > 0,
               "priors.segments", "non-empty list of [low, high] pairs")
        for bounds in pri["segments"]:
            _check(isinstance(bounds, (list, tuple)) and len(bounds) == 2
                   and all(_is_num(b) for b in bounds) and bounds[0] < bounds[1],
                   "priors.segments", "each entry must be [low, high] with low < high")
    _check(_is_num(pri["support_floor"]) and 0 < pri["support_floor"] < 1,
           "priors.support_floor", "in (0, 1)")
    for key in ("default_log_width_variance", "location_sd_floor", "noise_floor"):
        _check(_is_num(pri[key]) and pri[key] > 0, "priors." + key, "> 0")

    smc = cfg["smc"]
    _check(_is_int(smc["num_particles"]) and smc["num_particles"] >= 2,
           "smc.num_particles", "integer >= 2")
    _check(_is_int(smc["resample_threshold"])
           and 1 <= smc["resample_threshold"] <= smc["num_particles"],
           "smc.resample_threshold", "integer in [1, num_particles]")
    _check(_is_num(smc["learning_rate"]) and 0 < smc["learning_rate"] < 1,
           "smc.learning_rate", "in (0, 1)")
    _check(_is_int(smc["mcmc_moves"]) and smc["mcmc_moves"] >= 1,
           "smc.mcmc_moves", "integer >= 1")
    _check(_is_num(smc["target_acceptance"]) and 0 < smc["target_acceptance"] < 1,
           "smc.target_acceptance", "in (0, 1)")
    _check(_is_num(smc["initial_scale"]) and smc["initial_scale"] > 0,
           "smc.initial_scale", "> 0")
    _check(_is_num(smc["adaptation_gain"]) and smc["adaptation_gain"] >= 0,
           "smc.adaptation_gain", ">= 0")
    _check(smc["scale_mode"] in ("robbins_monro", "constant"), "smc.scale_mode",
           "'robbins_monro' or 'constant'")
    _check(_is_num(smc["band_level"]) and 0 < smc["band_level"] < 1,
           "smc.band_level", "in (0, 1)")
    _check(_is_int(smc["max_iterations"]) and smc["max_iterations"] >= 1,
           "smc.max_iterations", "integer >= 1")
    _check(_is_int(smc["chunk_size"]) and smc["chunk_size"] >= 1,
           "smc.chunk_size", "integer >= 1")

    sim = cfg["simulate"]
    _check(_is_num(sim["noise_sd"]) and sim["noise_sd"] >= 0, "simulate.noise_sd", ">= 0")
    _check(_is_num(sim["nr_level"]), "simulate.nr_level", "number")
    _check(isinstance(sim["lines"], list) and len(sim["lines"]) >= 1,
           "simulate.lines", "non-empty list")
    for i, line in enumerate(sim["lines"]):
        key = "simulate.lines[{}]".format(i)
        _check(isinstance(line, dict), key, "mapping")
        extra = set(line) - set(LINE_KEYS)
        if extra:
            raise ConfigError("unknown configuration key '{}.{}'".format(key, sorted(extra)[0]))
        _check(all(k in line and _is_num(line[k]) for k in LINE_KEYS), key,
               "needs numeric amplitude, location, sigma, gamma")
        _check(line["amplitude"] > 0 and line["sigma"] >= 0 and line["gamma"] >= 0
               and (line["sigma"] > 0 or line["gamma"] > 0), key,
               "amplitude > 0, widths >= 0 and not both zero")
    art = sim["artefact"]
    _check(art["kind"] in ("polynomial", "wavelet"), "simulate.artefact.kind",
           "'polynomial' or 'wavelet'")
    _check(isinstance(art["coefficients"], list)
           and all(_is_num(c) for c in art["coefficients"]),
           "simulate.artefact.coefficients", "list of numbers")
    _check(_is_num(art["modulation"]) and 0 <= art["modulation"] < 1,
           "simulate.artefact.modulation", "in [0, 1)")
    _check(art["p"] is None or (_is_num(art["p"]) and art["p"] >= 1),
           "simulate.artefact.p", ">= 1 or null")
    _check(art["kind"] != "wavelet" or art["p"] is not None, "simulate.artefact.p",
           "required for the wavelet artefact")
    _check(_is_int(art["order"]) and art["order"] >= 2, "simulate.artefact.order",
           "integer >= 2")
    return cfg


def resolve_config(doc):
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("configuration document must be a mapping")
    cfg = _merge(DEFAULTS, doc, "")
    return validate_config(cfg)


def load_config(path=None):
    """Read a YAML/JSON config file (or nothing) and resolve it over DEFAULTS."""
    if path is None:
        return resolve_config({})
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError("cannot read config '{}': {}".format(path, e.strerror))
    except yaml.YAMLError as e:
        raise ConfigError("cannot parse config '{}': {}".format(path, e))
    return resolve_config(doc)


def resolve_threads(cfg, flag=None):
    """Flag > environment > file."""
    if flag is not None:
        threads = flag
    elif os.environ.get(THREADS_ENV):
        try:
            threads = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ConfigError("{} must be an integer".format(THREADS_ENV))
    else:
        threads = cfg["threads"]
    if threads < 1:
        raise ConfigError("thread count must be >= 1, got {}".format(threads))
    return threads
