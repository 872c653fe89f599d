import numpy as np
import pytest
from scipy import integrate

from carsinfer.models.spectral import WavenumberGrid
from carsinfer.narrowing.linear_prediction import burg, extrapolate, is_stable
from carsinfer.narrowing.narrowing import (
    CandidateSolution,
    NarrowingConfig,
    best_prefix,
    filter_candidates,
    fsd_linear_predict,
    lorentz_convolve,
    narrow,
    prefix_residuals,
    score_candidate,
    select_and_average,
    sweep,
)
from carsinfer.utils.config_helper import default_config


def lorentzians(grid, centres, areas, gamma):
    nu = grid.axis[:, None]
    c = np.asarray(centres)[None, :]
    a = np.asarray(areas)[None, :]
    return np.sum(a * gamma / (np.pi * ((nu - c) ** 2 + gamma ** 2)), axis=1)


def scored(spectrum, grid, D_A, gamma, n_fir):
    cand = CandidateSolution(gamma=gamma, n_fir=n_fir, D_A=D_A)
    cand.d, cand.d_c, cand.c_n, cand.c_we, cand.f_c = score_candidate(spectrum, grid, D_A, gamma)
    return cand


def test_burg_recovers_a_complex_exponential():
    n = np.arange(64)
    x = np.exp(2j * np.pi * 0.1 * n)
    filters, k = burg(x, 1)
    assert is_stable(k)
    assert abs(filters[1][1] + np.exp(2j * np.pi * 0.1)) < 1e-10
    ext = extrapolate(x, filters[1], 16)
    np.testing.assert_allclose(ext, np.exp(2j * np.pi * 0.1 * np.arange(64, 80)), atol=1e-8)


def test_burg_zero_record_is_stable():
    filters, k = burg(np.zeros(32, dtype=complex), 5)
    np.testing.assert_array_equal(k, 0.0)
    assert len(filters) == 6
    with pytest.raises(ValueError):
        burg(np.ones(4), 4)


def test_zero_input_gives_zero_deltas(grid):
    D_A, reason = fsd_linear_predict(np.zeros(grid.count), grid, 3.0, 10)
    assert reason == ""
    np.testing.assert_allclose(D_A, 0.0, atol=1e-14)


def test_single_lorentzian_collapses_to_a_delta(grid):
    i0 = 511
    spectrum = lorentzians(grid, [grid.axis[i0]], [10.0], 4.0)
    D_A, reason = fsd_linear_predict(spectrum, grid, 4.0, 2)
    assert reason == ""
    near = D_A[i0 - 2 : i0 + 3].sum()
    assert near / D_A.sum() >= 0.95


def test_two_lorentzians_keep_their_areas(grid):
    gamma = 4.0
    centres = [grid.axis[471], grid.axis[551]]
    spectrum = lorentzians(grid, centres, [10.0, 5.0], gamma)
    D_A, reason = fsd_linear_predict(spectrum, grid, gamma, 3)
    assert reason == ""
    assert D_A[468:475].sum() == pytest.approx(10.0, rel=0.05)
    assert D_A[548:555].sum() == pytest.approx(5.0, rel=0.05)


def test_bad_arguments(grid):
    with pytest.raises(ValueError):
        fsd_linear_predict(np.zeros(grid.count), grid, 0.0, 3)
    with pytest.raises(ValueError):
        fsd_linear_predict(np.zeros(grid.count), grid, 1.0, 0)


def test_order_beyond_reliable_samples_is_rejected(grid):
    # gamma = 35 keeps only a few dozen conjugate samples
    D_A, reason = fsd_linear_predict(np.ones(grid.count), grid, 35.0, 150)
    assert D_A is None
    assert reason == "order"


def test_negative_mass_correction():
    grid = WavenumberGrid(0.0, 1.0, 64)
    D_A = np.zeros(64)
    D_A[30:33] = [2.0, -1.0, 3.0]
    _, _, c_n, _, _ = score_candidate(np.zeros(64), grid, D_A, 2.0)
    assert c_n == pytest.approx(0.8)

    D_A = np.abs(D_A)
    spectrum = lorentz_convolve(D_A, grid.step, 2.0)
    d, d_c, c_n, _, f_c = score_candidate(spectrum, grid, D_A, 2.0)
    assert c_n == 1.0
    assert d == pytest.approx(d_c, abs=1e-20)
    assert f_c == pytest.approx(d + d_c)

    with pytest.raises(ValueError):
        score_candidate(np.zeros(64), grid, -np.ones(64), 2.0)


def test_residual_matches_direct_convolution():
    grid = WavenumberGrid(100.0, 0.7, 200)
    rng = np.random.default_rng(3)
    D_A = rng.normal(size=200) + 0.5
    spectrum = rng.normal(size=200)
    gamma = 2.5
    nu = grid.axis
    rebuilt = np.zeros(200)
    for i in range(200):
        for j in range(200):
            rebuilt[i] += D_A[j] * gamma / (np.pi * ((nu[i] - nu[j]) ** 2 + gamma ** 2))
    expected = np.sum((spectrum - rebuilt) ** 2)
    d, _, _, _, _ = score_candidate(spectrum, grid, D_A, gamma)
    assert d == pytest.approx(expected, rel=1e-9)


def test_single_candidate_is_selected(grid):
    spectrum = lorentzians(grid, [900.0], [5.0], 3.0)
    D_A, _ = fsd_linear_predict(spectrum, grid, 3.0, 2)
    cand = scored(spectrum, grid, D_A, 3.0, 2)
    cfg = NarrowingConfig(gammas=[3.0], max_fir=2, min_intersection=1)
    out = select_and_average([cand], cfg, spectrum, grid)
    assert len(out.selected) == 1
    assert not out.warning
    np.testing.assert_allclose(out.reconstruction, lorentz_convolve(D_A, grid.step, 3.0))
    np.testing.assert_allclose(out.narrowed, D_A / grid.step)


def test_identical_candidates_pick_smallest_prefix(grid):
    spectrum = lorentzians(grid, [900.0], [5.0], 3.0)
    D_A, _ = fsd_linear_predict(spectrum, grid, 3.0, 2)
    # a constant misfit keeps d_M well away from zero
    spectrum = spectrum + 0.05
    cands = [scored(spectrum, grid, D_A, 3.0, n) for n in range(2, 7)]
    cfg = NarrowingConfig(gammas=[3.0], max_fir=6, p_we=1.0, p_fc=1.0, min_intersection=5)
    out = select_and_average(cands, cfg, spectrum, grid)
    assert len(out.intersection) == 5
    assert len(out.selected) == 1


def test_prefix_scan_matches_exhaustive_search():
    rng = np.random.default_rng(12)
    spectrum = np.sin(np.linspace(0, 6, 128))
    recs = spectrum[None, :] + rng.normal(scale=0.3, size=(200, 128)) + rng.normal(
        scale=0.1, size=(200, 1)
    )
    d_m = prefix_residuals(spectrum, recs)
    direct = [np.sum((spectrum - recs[:m].mean(axis=0)) ** 2) for m in range(1, 201)]
    np.testing.assert_allclose(d_m, direct, rtol=1e-10)
    assert best_prefix(d_m) == int(np.argmin(direct)) + 1


def test_best_prefix_ties_take_the_first():
    assert best_prefix([3.0, 1.0, 1.0, 2.0]) == 2
    assert best_prefix([1.0, 1.0, 1.0]) == 1


def _synthetic_valid(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        c = CandidateSolution(gamma=1.0 + i % 7, n_fir=1 + i // 7, D_A=None)
        c.c_we = rng.uniform()
        c.f_c = rng.uniform()
        out.append(c)
    return out


def test_filter_grows_p_fc_until_intersection_is_large_enough():
    valid = _synthetic_valid(400, 4)
    used = []
    for minimum in (1, 10, 40, 100):
        inter, p, warning = filter_candidates(valid, 0.5, 0.025, 0.025, minimum)
        assert len(inter) >= minimum
        assert not warning
        used.append(p)
    assert used == sorted(used)

    inter, p, warning = filter_candidates(valid, 0.5, 0.025, 0.025, 1000)
    assert warning
    assert p == 1.0
    assert len(inter) == 200


def test_intersection_grows_with_p_fc():
    valid = _synthetic_valid(400, 9)
    previous = set()
    for p_fc in np.linspace(0.025, 1.0, 40):
        inter, p, warning = filter_candidates(valid, 0.5, p_fc, 0.025, 0)
        assert p == pytest.approx(p_fc)
        assert not warning
        assert previous <= set(inter)
        previous = set(inter)
    assert len(previous) == 200


def test_exhausted_filter_falls_back_to_best_residual(grid):
    spectrum = lorentzians(grid, [900.0], [5.0], 3.0)
    cands = []
    for gamma in (2.0, 3.0):
        D_A, _ = fsd_linear_predict(spectrum, grid, gamma, 2)
        cands.append(scored(spectrum, grid, D_A, gamma, 2))
    cfg = NarrowingConfig(gammas=[2.0, 3.0], max_fir=2, min_intersection=50)
    out = select_and_average(cands, cfg, spectrum, grid)
    assert out.warning
    assert len(out.selected) == 1
    assert out.selected[0].d == min(c.d for c in cands)


def test_selection_needs_candidates(grid):
    cfg = NarrowingConfig(gammas=[1.0])
    with pytest.raises(ValueError):
        select_and_average([], cfg, np.zeros(grid.count), grid)


def test_default_sweep_size(grid):
    cfg = NarrowingConfig.from_config(default_config())
    spectrum = lorentzians(grid, [850.0, 960.0], [5.0, 3.0], 4.0)
    candidates = sweep(spectrum, grid, cfg)
    assert len(candidates) == 33 * 150
    assert any(c.reason == "order" for c in candidates)
    assert any(not c.rejected for c in candidates)


def test_narrowing_is_deterministic_across_threads(grid, small_cfg):
    cfg = NarrowingConfig.from_config(small_cfg)
    spectrum = lorentzians(grid, [850.0, 960.0, 1080.0], [5.0, 3.0, 6.0], 4.0)
    a = narrow(spectrum, grid, cfg, threads=1)
    b = narrow(spectrum, grid, cfg, threads=3)
    np.testing.assert_array_equal(a.narrowed, b.narrowed)
    assert [(c.gamma, c.n_fir) for c in a.selected] == [(c.gamma, c.n_fir) for c in b.selected]


def test_narrowing_conserves_area(grid, small_cfg):
    cfg = NarrowingConfig.from_config(small_cfg)
    spectrum = lorentzians(grid, [850.0, 960.0, 1080.0], [5.0, 3.0, 6.0], 4.0)
    out = narrow(spectrum, grid, cfg)
    area = integrate.trapezoid(spectrum, dx=grid.step)
    for rebuilt in (out.narrowed, out.smoothed, out.reconstruction):
        assert integrate.trapezoid(rebuilt, dx=grid.step) == pytest.approx(area, rel=0.05)


def _fwhm(x, peak, step):
    half = x[peak] / 2.0
    lo = peak
    while lo > 0 and x[lo - 1] > half:
        lo -= 1
    hi = peak
    while hi < x.size - 1 and x[hi + 1] > half:
        hi += 1
    return (hi - lo + 1) * step


@pytest.mark.slow
def test_narrowing_sharpens_three_lines(grid):
    gamma = 4.0
    centres = np.array([grid.axis[300], grid.axis[512], grid.axis[740]])
    areas = np.array([6.0, 4.0, 8.0])
    clean = lorentzians(grid, centres, areas, gamma)
    rng = np.random.default_rng(0)
    spectrum = clean + rng.normal(scale=clean.max() / 100.0, size=grid.count)

    cfg = NarrowingConfig.from_config(default_config())
    out = narrow(spectrum, grid, cfg)
    assert out.n_evaluated == 4950
    for idx in (300, 512, 740):
        window = slice(idx - 20, idx + 21)
        peak = idx - 20 + int(np.argmax(out.narrowed[window]))
        assert abs(peak - idx) <= 1
        assert _fwhm(out.narrowed, peak, grid.step) <= 0.5 * 2.0 * gamma
    area = integrate.trapezoid(clean, dx=grid.step)
    assert integrate.trapezoid(out.smoothed, dx=grid.step) == pytest.approx(area, rel=0.05)
