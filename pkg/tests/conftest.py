import numpy as np
import pytest

from carsinfer.models.spectral import MeasuredSpectrum, ModelParams, VoigtLine, WavenumberGrid
from carsinfer.models.wavelet import ErrorFunctionEngine
from carsinfer.utils.config_helper import default_config


@pytest.fixture
def grid():
    return WavenumberGrid(700.0, 0.5, 1024)


@pytest.fixture
def wide_grid():
    # gamma = 1 Lorentzian centred at 0, +-204.8 cm-1
    return WavenumberGrid(-204.8, 0.05, 8192)


@pytest.fixture
def three_lines():
    return ModelParams(
        (
            VoigtLine(6.0, 850.0, 2.0, 4.0),
            VoigtLine(4.0, 960.0, 2.5, 5.0),
            VoigtLine(8.0, 1080.0, 3.0, 4.5),
        ),
        p=5.5,
    )


@pytest.fixture
def smooth_engine(grid):
    x = np.linspace(-1.0, 1.0, grid.count)
    artefact = 1.0 + 0.15 * np.sin(2.5 * x) + 0.05 * np.cos(7.0 * x)
    return ErrorFunctionEngine.from_signal(grid, artefact, order=8)


@pytest.fixture
def small_cfg():
    cfg = default_config()
    cfg["smc"].update(num_particles=64, resample_threshold=32, mcmc_moves=5)
    cfg["narrowing"].update(gamma_points=5, max_fir=20, min_intersection=5)
    cfg["tensorboard"] = False
    return cfg


@pytest.fixture
def make_measured():
    def _make(grid, values, noise_variance=1e-4, nr_level=0.0, edge_mask=0):
        return MeasuredSpectrum(grid, values, noise_variance, nr_level, edge_mask)

    return _make
