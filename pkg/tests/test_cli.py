import logging
import os

import numpy as np
import pytest
import yaml

from carsinfer import pipeline
from carsinfer.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, STAGE_HELP, main
from carsinfer.dataset.base import read_bands, read_csv, read_json
from carsinfer.dataset.builder import get_truth
from carsinfer.inference.predictive import parameter_names
from carsinfer.utils.config_helper import load_config
from carsinfer.utils.utils import init_log

ARTEFACTS = (
    pipeline.SPECTRUM,
    pipeline.TRUTH,
    pipeline.NARROWED,
    pipeline.CANDIDATES,
    pipeline.NARROWING,
    pipeline.PRIORS,
    pipeline.POSTERIOR,
    pipeline.SUMMARY,
    pipeline.DIAGNOSTICS,
    pipeline.BANDS,
)

TINY = {
    "tensorboard": False,
    "grid": {"start": 900.0, "step": 0.5, "count": 512},
    "measurement": {"edge_mask": 8},
    "narrowing": {"gamma_points": 5, "max_fir": 20, "min_intersection": 5},
    "smc": {"num_particles": 64, "resample_threshold": 32, "mcmc_moves": 5, "chunk_size": 16},
    "simulate": {
        "noise_sd": 0.01,
        "lines": [
            {"amplitude": 5.0, "location": 990.0, "sigma": 1.5, "gamma": 3.0},
            {"amplitude": 4.0, "location": 1060.0, "sigma": 1.5, "gamma": 3.0},
        ],
    },
}


@pytest.fixture
def errors():
    """Error messages sent to the "global" logger."""
    messages = []

    class _Collect(logging.Handler):
        def emit(self, record):
            messages.append(record.getMessage())

    logger = init_log("global", logging.INFO)
    handler = _Collect(level=logging.ERROR)
    logger.addHandler(handler)
    yield messages
    logger.removeHandler(handler)


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(TINY))
    return str(path)


@pytest.mark.parametrize("stage", sorted(STAGE_HELP))
def test_help_on_every_stage(stage, capsys):
    assert main([stage, "--help"]) == EXIT_OK
    assert "--config" in capsys.readouterr().out


def test_top_level_help(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "pipeline" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["calibrate"],
        ["fit", "--bogus"],
        ["fit", "--seed", "-3"],
        ["fit", "--threads", "0"],
    ],
)
def test_usage_errors(argv, errors):
    assert main(argv) == EXIT_USAGE
    assert errors


def test_missing_input_names_the_path(tmp_path, errors, tiny_config):
    out = str(tmp_path / "empty")
    assert main(["narrow", "--config", tiny_config, "--out", out]) == EXIT_DATA
    assert any(os.path.join(out, pipeline.SPECTRUM) in m for m in errors)


def test_bad_config_is_a_data_error(tmp_path, errors):
    path = tmp_path / "bad.yaml"
    path.write_text("smc:\n  particles: 10\n")
    out = str(tmp_path / "out")
    assert main(["simulate", "--config", str(path), "--out", out]) == EXIT_DATA
    assert any("smc.particles" in m for m in errors)
    missing = str(tmp_path / "absent.yaml")
    assert main(["simulate", "--config", missing, "--out", out]) == EXIT_DATA
    assert any("absent.yaml" in m for m in errors)


def test_artefact_depth_beyond_the_grid_is_a_config_error(tmp_path, errors):
    doc = dict(TINY, simulate=dict(TINY["simulate"], artefact={"kind": "wavelet", "p": 40.0, "order": 8}))
    path = tmp_path / "deep.yaml"
    path.write_text(yaml.safe_dump(doc))
    out = str(tmp_path / "out")
    assert main(["simulate", "--config", str(path), "--out", out]) == EXIT_DATA
    assert any("simulate.artefact.p" in m for m in errors)


def test_simulate_is_deterministic(tmp_path, tiny_config):
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert main(["simulate", "--config", tiny_config, "--seed", "7", "--out", out, "--quiet"]) == 0
    a = open(os.path.join(str(tmp_path / "a"), pipeline.SPECTRUM), "rb").read()
    b = open(os.path.join(str(tmp_path / "b"), pipeline.SPECTRUM), "rb").read()
    assert a == b
    truth = read_json(os.path.join(str(tmp_path / "a"), pipeline.TRUTH))
    assert truth["seed"] == 7 and len(truth["lines"]) == 2


def test_pipeline_writes_every_artefact(tmp_path, tiny_config):
    outs = [str(tmp_path / "run1"), str(tmp_path / "run2")]
    for out in outs:
        argv = ["pipeline", "--config", tiny_config, "--seed", "3", "--out", out, "--quiet"]
        assert main(argv) == EXIT_OK
    for name in ARTEFACTS:
        assert os.path.isfile(os.path.join(outs[0], name)), name

    priors = read_json(os.path.join(outs[0], pipeline.PRIORS))
    header, rows = read_csv(os.path.join(outs[0], pipeline.POSTERIOR))
    assert list(header) == parameter_names(len(priors["lines"]))
    assert len(rows) == 64

    bands = read_bands(os.path.join(outs[0], pipeline.BANDS))
    assert {"y", "f", "S", "eps_m", "V_N", "line_01"} <= set(bands)
    assert np.all(bands["y"][1] <= bands["y"][3])

    diag_header, diag = read_csv(os.path.join(outs[0], pipeline.DIAGNOSTICS))
    assert diag_header == pipeline.DIAGNOSTIC_KEYS
    assert float(diag[-1][1]) == 1.0

    nar = read_json(os.path.join(outs[0], pipeline.NARROWING))
    assert nar["evaluated"] == 5 * 20
    assert 1 <= nar["M"] <= nar["intersection"]

    for name in (pipeline.POSTERIOR, pipeline.BANDS):
        first = open(os.path.join(outs[0], name), "rb").read()
        second = open(os.path.join(outs[1], name), "rb").read()
        assert first == second


def test_stages_chain_through_the_out_directory(tmp_path, tiny_config):
    out = str(tmp_path / "staged")
    for stage in ("simulate", "narrow", "priors", "fit", "predict"):
        assert main([stage, "--config", tiny_config, "--out", out, "--quiet"]) == EXIT_OK
    os.remove(os.path.join(out, pipeline.POSTERIOR))
    assert main(["predict", "--config", tiny_config, "--out", out, "--quiet"]) == EXIT_DATA


def _recovered(out, cfg):
    grid, truth = get_truth(cfg)
    header, rows = read_csv(os.path.join(out, pipeline.POSTERIOR))
    draws = np.array(rows, dtype=float)
    if draws.shape[1] != truth.params.dim:
        return False
    for n, line in enumerate(truth.params.lines):
        a, nu = draws[:, 1 + 4 * n], draws[:, 2 + 4 * n]
        lo, hi = np.quantile(nu, [0.025, 0.975])
        if not lo <= line.location <= hi:
            return False
        if abs(np.median(nu) - line.location) > 2 * grid.step:
            return False
        if abs(np.median(a) - line.amplitude) > 0.15 * line.amplitude:
            return False
    replicate = truth.clean(grid) + np.random.default_rng(12345).normal(
        scale=truth.noise_sd, size=grid.count
    )
    y = read_bands(os.path.join(out, pipeline.BANDS))["y"]
    coverage = np.mean((replicate >= y[1]) & (replicate <= y[3]))
    return 0.88 <= coverage <= 0.99


@pytest.mark.slow
def test_three_line_recovery(tmp_path):
    config = os.path.join(
        os.path.dirname(__file__), os.pardir, "experiments", "synthetic", "three_lines", "config.yaml"
    )
    cfg = load_config(config)
    passed = 0
    for seed in (1, 2, 3):
        out = str(tmp_path / "seed{}".format(seed))
        argv = ["pipeline", "--config", config, "--seed", str(seed), "--out", out, "--quiet"]
        assert main(argv) == EXIT_OK
        passed += _recovered(out, cfg)
    assert passed >= 2
