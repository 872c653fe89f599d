import math

import numpy as np
import pytest

from carsinfer.dataset.base import (
    SPECTRUM_HEADER,
    read_bands,
    read_json,
    read_spectrum,
    write_bands,
    write_csv,
    write_json,
    write_spectrum,
)
from carsinfer.dataset.builder import get_artefact, get_measurement, get_truth
from carsinfer.dataset.synthetic import SyntheticTruth, polynomial_log_artefact, simulate
from carsinfer.inference.predictive import Band
from carsinfer.models.spectral import (
    MeasuredSpectrum,
    ModelParams,
    VoigtLine,
    WavenumberGrid,
    cars_signal,
    forward_model,
)
from carsinfer.models.wavelet import ErrorFunctionEngine
from carsinfer.utils.utils import ConfigError, DataFormatError


def test_spectrum_file_round_trip(tmp_path, grid):
    values = np.random.default_rng(0).normal(size=grid.count) * 1e-3 + math.pi
    path = str(tmp_path / "sub" / "spectrum.csv")
    write_spectrum(path, grid, values)
    with open(path, "rb") as f:
        text = f.read()
    assert text.startswith(b"wavenumber_cm-1,intensity\n")
    assert b"\r" not in text

    got_grid, got = read_spectrum(path)
    np.testing.assert_array_equal(got, values)
    assert got_grid.count == grid.count
    assert got_grid.start == grid.start
    assert got_grid.step == pytest.approx(grid.step, rel=1e-12)


def test_spectrum_format_errors(tmp_path, grid):
    bad_header = str(tmp_path / "header.csv")
    write_csv(bad_header, ("nu", "y"), zip(grid.axis, grid.axis))
    with pytest.raises(DataFormatError, match="header.csv"):
        read_spectrum(bad_header)

    uneven = str(tmp_path / "uneven.csv")
    axis = grid.axis.copy()
    axis[10] += 0.2
    write_csv(uneven, SPECTRUM_HEADER, zip(axis, np.zeros(grid.count)))
    with pytest.raises(DataFormatError, match="uneven.csv"):
        read_spectrum(uneven)

    text = str(tmp_path / "text.csv")
    write_csv(text, SPECTRUM_HEADER, [("700", "abc")] * 10)
    with pytest.raises(DataFormatError):
        read_spectrum(text)

    with pytest.raises(DataFormatError, match="missing.csv"):
        read_spectrum(str(tmp_path / "missing.csv"))


def test_json_and_band_files(tmp_path):
    doc = {"b": [1.0, 2.5], "a": {"x": 0.1 + 0.2}}
    path = str(tmp_path / "doc.json")
    write_json(path, doc)
    assert read_json(path) == doc

    broken = tmp_path / "broken.json"
    broken.write_text("{")
    with pytest.raises(DataFormatError, match="broken.json"):
        read_json(str(broken))

    axis = np.linspace(900.0, 910.0, 11)
    rng = np.random.default_rng(1)
    lo, hi = rng.normal(size=11), rng.normal(size=11) + 5.0
    bands = {"y": Band(lo, 0.5 * (lo + hi), hi), "line_01": Band(lo - 1, lo, lo + 1)}
    band_path = str(tmp_path / "bands.csv")
    write_bands(band_path, axis, bands)
    got = read_bands(band_path)
    assert set(got) == {"y", "line_01"}
    np.testing.assert_array_equal(got["y"][0], axis)
    np.testing.assert_array_equal(got["y"][1], lo)
    np.testing.assert_array_equal(got["y"][3], hi)


def test_polynomial_artefact_modulation(grid):
    log_eps = polynomial_log_artefact(grid, [0.0, 0.6, -0.3, 0.2], 0.15)
    assert np.max(np.abs(log_eps)) == pytest.approx(math.log1p(0.15), rel=1e-12)
    np.testing.assert_array_equal(polynomial_log_artefact(grid, [1.0], 0.15), 0.0)


def test_noise_free_simulation_is_the_forward_model(small_cfg):
    small_cfg["simulate"]["noise_sd"] = 0.0
    grid, truth = get_truth(small_cfg)
    measured, doc = simulate(grid, truth, seed=4)
    expected = np.exp(truth.log_artefact) * cars_signal(grid, truth.params, 0.0)
    np.testing.assert_array_equal(measured.values, expected)
    assert doc["noise_variance"] == 0.0
    assert "p" not in doc["artefact"]
    assert [ln["location"] for ln in doc["lines"]] == [850.0, 960.0, 1080.0]


def test_wavelet_artefact_matches_the_engine(small_cfg):
    art = small_cfg["simulate"]["artefact"]
    art.update(kind="wavelet", p=3.5, order=8)
    small_cfg["simulate"]["noise_sd"] = 0.0
    grid, truth = get_truth(small_cfg)
    measured, doc = simulate(grid, truth, seed=0)
    assert doc["artefact"] == {"kind": "wavelet", "p": 3.5}

    base = np.exp(polynomial_log_artefact(grid, art["coefficients"], art["modulation"]))
    engine = ErrorFunctionEngine.from_signal(grid, base, order=8)
    target = MeasuredSpectrum(grid, np.zeros(grid.count), nr_level=0.0)
    np.testing.assert_allclose(
        measured.values, forward_model(target, truth.params, engine), rtol=1e-12
    )

    art["p"] = 40.0
    with pytest.raises(ConfigError, match=r"simulate\.artefact\.p"):
        get_truth(small_cfg)


def test_noise_moments():
    grid = WavenumberGrid(500.0, 0.25, 4096)
    params = ModelParams((VoigtLine(3.0, 900.0, 1.0, 2.0),), p=1.0)
    truth = SyntheticTruth(params, np.zeros(grid.count), nr_level=0.0, noise_sd=0.1)
    measured, _ = simulate(grid, truth, seed=8)
    resid = measured.values - truth.clean(grid)
    assert np.var(resid, ddof=1) == pytest.approx(0.01, rel=0.1)


def test_same_seed_same_bytes(tmp_path, small_cfg):
    grid, truth = get_truth(small_cfg)
    paths = []
    for name, seed in (("a", 5), ("b", 5), ("c", 6)):
        measured, _ = simulate(grid, truth, seed=seed)
        paths.append(str(tmp_path / "{}.csv".format(name)))
        write_spectrum(paths[-1], grid, measured.values)
    data = [open(p, "rb").read() for p in paths]
    assert data[0] == data[1]
    assert data[0] != data[2]


def test_builder_dispatch(tmp_path, grid, small_cfg):
    with pytest.raises(NotImplementedError):
        get_artefact({"kind": "spline"}, grid)
    with pytest.raises(ValueError):
        SyntheticTruth(None, np.zeros(8), nr_level=0.0, noise_sd=-1.0)

    path = str(tmp_path / "spectrum.csv")
    write_spectrum(path, grid, np.ones(grid.count))
    small_cfg["measurement"].update(edge_mask=4, nr_level=0.5)
    measured = get_measurement(small_cfg, path)
    assert measured.edge_mask == 4 and measured.nr_level == 0.5
    assert measured.noise_variance is None
    small_cfg["measurement"]["edge_mask"] = 512
    with pytest.raises(DataFormatError, match="spectrum.csv"):
        get_measurement(small_cfg, path)
