import math

import numpy as np
import pytest

from pathtomo.errors import (
    CalibrationError,
    ConfigMismatchError,
    FieldOfViewError,
    GeometryError,
    IncompletePlanError,
)
from pathtomo.experiment import reference_states, simulate_frameset
from pathtomo.geometry import PathGeometry, grid_2x3, plan_measurements, square_geometry
from pathtomo.optics import (
    CameraImage,
    NoiseModel,
    OpticalConfig,
    direct_image,
    oft_image,
    pixel_to_momentum,
    rotate_array,
    to_lab_frame,
)
from pathtomo.quantum import (
    DensityMatrix,
    fidelity,
    maximally_mixed,
    pure_state,
    random_state,
)
from pathtomo.reconstruct import (
    Calibration,
    FrameSet,
    calibrate,
    diagonals_from_direct,
    extract_slice,
    fringe_visibility,
    measure_angle,
    measure_frames,
    peak_at_frequency,
    reconstruct_state,
    rotate_image,
    slice_spectrum,
)

UNIFORM6 = pure_state(np.ones(6))


def frames_for(rho, g, cfg, **kw):
    return simulate_frameset(rho, g, cfg, plan_measurements(g), threads=1, **kw)


# ------------------------------------------------------------- rotation


def test_rotate_image_zero_is_identity(cfg, grid):
    img = oft_image(random_state(6, seed=0), grid, 45.0, cfg)
    out = rotate_image(img, 0.0)
    assert np.array_equal(out.intensities, img.intensities)


def test_rotate_image_round_trip(cfg):
    img = direct_image(maximally_mixed(2), PathGeometry([(0, 0), (2.7, 0)], sigma=1.0), cfg)
    back = rotate_image(rotate_image(img, 90.0), -90.0)
    assert np.max(np.abs(back.intensities - img.intensities)) < 0.01 * img.intensities.max()
    assert back.rotation == pytest.approx(0.0)


def column_phases(a, q, r0):
    rows = np.arange(a.shape[0]) - r0
    return np.angle(np.exp(-1j * q * rows) @ a)


def test_rotate_image_aligns_tilted_fringes(cfg):
    ny, nx = cfg.n_y, cfg.n_x
    r0, c0 = (ny - 1) / 2, (nx - 1) / 2
    rr, cc = np.mgrid[0:ny, 0:nx]
    q, t = 2 * np.pi / 25.0, math.radians(30)
    blob = np.exp(-((rr - r0) ** 2 + (cc - c0) ** 2) / (2 * 120.0**2))
    tilted = blob * (1 + np.cos(q * (math.cos(t) * (rr - r0) - math.sin(t) * (cc - c0))))
    img = CameraImage(tilted, cfg, 30.0, "lab")
    mid = slice(int(c0) - 60, int(c0) + 61)
    before = np.var(np.unwrap(column_phases(tilted, q, r0)[mid]))
    after = np.var(np.unwrap(column_phases(rotate_image(img, -30.0).intensities, q, r0)[mid]))
    assert before > 1.0
    assert after < 1e-3


# ------------------------------------------------------------- slices


def test_slice_through_single_gaussian(cfg):
    g = PathGeometry([(0.0, 0.0)])
    img = direct_image(DensityMatrix([[1.0]]), g, cfg)
    s = extract_slice(img, 0.0)
    assert int(np.argmax(s)) == pytest.approx(cfg.center[1], abs=0.5)
    v = (np.arange(cfg.n_y) - cfg.center[1]) * cfg.pixel_pitch_mm
    w = cfg.magnification * g.sigma
    profile = np.exp(-2 * v**2 / w**2)
    assert np.allclose(s / s.max(), profile / profile.max(), atol=1e-2)


def test_slice_width_on_untilted_fringes(cfg):
    g = PathGeometry([(0.0, 0.0), (0.0, 2.7)])
    img = oft_image(np.full((2, 2), 0.5), g, 90.0, cfg)
    s1 = extract_slice(img, 0.0, 1)
    s5 = extract_slice(img, 0.0, 5)
    assert np.allclose(s1 / s1.sum(), s5 / s5.sum(), atol=1e-9)


def test_slice_three_sigma_away_is_dark(cfg):
    g = PathGeometry([(0.0, 0.0)])
    img = direct_image(DensityMatrix([[1.0]]), g, cfg)
    centre = extract_slice(img, 0.0).sum()
    off = extract_slice(img, 3 * g.sigma).sum()
    assert off / centre < math.exp(-9)


def test_slice_out_of_frame(cfg, grid):
    img = oft_image(random_state(6, seed=0), grid, 90.0, cfg)
    with pytest.raises(FieldOfViewError):
        extract_slice(img, 100.0)


# ------------------------------------------------------------- projection


def k_axis(cfg):
    return pixel_to_momentum(np.arange(cfg.n_y), cfg.center[1], cfg)


def commensurate_spacing(cfg, m):
    """Spacing with exactly m fringe periods across the slice (no window leakage)."""
    return 2 * math.pi * m / (cfg.n_y * cfg.k_step * cfg.magnification)


@pytest.mark.parametrize("spacing", [6.7, 7.2236])
def test_peak_of_cosine_is_half_dc(cfg, spacing):
    k = k_axis(cfg)
    s = 1 + np.cos(k * spacing * cfg.magnification)
    dc = peak_at_frequency(s, 0.0, cfg.center[1], cfg)
    assert dc.imag == 0 and dc.real == pytest.approx(s.sum())
    ratio = abs(peak_at_frequency(s, spacing, cfg.center[1], cfg)) / dc.real
    assert ratio == pytest.approx(0.5, rel=5e-3)


def test_peak_of_commensurate_cosine_is_exact(cfg):
    spacing = commensurate_spacing(cfg, 26)
    s = 1 + np.cos(k_axis(cfg) * spacing * cfg.magnification + 0.3)
    p = peak_at_frequency(s, spacing, cfg.center[1], cfg)
    assert abs(p) / s.sum() == pytest.approx(0.5, abs=1e-9)
    assert np.angle(p) == pytest.approx(0.3, abs=1e-9)


def test_constant_slice_has_no_peak(cfg):
    s = np.ones(cfg.n_y)
    for spacing in (6.7, commensurate_spacing(cfg, 20)):
        assert abs(peak_at_frequency(s, spacing, cfg.center[1], cfg)) < 0.01 * s.sum()


@pytest.mark.parametrize("spacing", [6.7, 7.2236])
def test_peak_phase_follows_fringe_offset(cfg, spacing):
    # 1 + cos(k L + phi) = 1 + (e^{i(kL+phi)} + c.c.)/2; the e^{-ikL} kernel keeps e^{+i phi}.
    s = 1 + np.cos(k_axis(cfg) * spacing * cfg.magnification + np.pi / 2)
    assert np.angle(peak_at_frequency(s, spacing, cfg.center[1], cfg)) == pytest.approx(
        np.pi / 2, abs=0.01)


def test_slice_spectrum_peaks_at_spacing(cfg):
    spacing = 6.7
    s = (1 + np.cos(k_axis(cfg) * spacing * cfg.magnification)) * np.exp(
        -0.5 * (np.arange(cfg.n_y) - cfg.center[1]) ** 2 / 80**2)
    ybar, spec = slice_spectrum(s, cfg)
    spec[ybar < 1.0] = 0
    assert ybar[np.argmax(spec)] == pytest.approx(spacing, abs=ybar[1])


# ------------------------------------------------------------- per-angle readings


def test_maximally_mixed_has_no_coherence(cfg, grid, grid_plan):
    for th in grid_plan.thetas:
        img = oft_image(maximally_mixed(6), grid, th, cfg)
        for r in measure_angle(img, th, grid_plan):
            if r.kind == "pair":
                assert abs(r.estimate) < 0.01


def test_uniform_state_vertical_pairs(cfg, grid, grid_plan):
    img = oft_image(UNIFORM6, grid, 90.0, cfg)
    pairs = [r for r in measure_angle(img, 90.0, grid_plan) if r.kind == "pair"]
    assert len(pairs) == 3
    for r in pairs:
        assert abs(r.estimate) == pytest.approx(1 / 6, abs=0.005)


def test_readings_are_gain_invariant(cfg, grid, grid_plan):
    img = oft_image(random_state(6, seed=4), grid, 0.0, cfg)
    a = measure_angle(img, 0.0, grid_plan)
    b = measure_angle(img.scaled(2.0), 0.0, grid_plan)
    for ra, rb in zip(a, b):
        assert abs(ra.estimate - rb.estimate) < 1e-12


def test_dc_readings_are_positive(cfg, grid, grid_plan):
    rho = random_state(6, seed=3)
    for th in grid_plan.thetas:
        for r in measure_angle(oft_image(rho, grid, th, cfg), th, grid_plan):
            assert r.dc > 0 and r.norm > 0


def test_missing_group_is_flagged(cfg, grid, grid_plan):
    rho = np.diag([0.0, 0.2, 0.2, 0.2, 0.2, 0.2]).astype(complex)
    img = oft_image(rho, grid, 45.0, cfg, noise=NoiseModel(background=1.0), seed=1)
    readings = measure_angle(img, 45.0, grid_plan)
    grp = next(r for r in readings if r.kind == "group")  # paths (0, 4)
    assert not grp.flagged
    img2 = oft_image(np.diag([0.0, 0.25, 0.25, 0.25, 0, 0.25]).astype(complex), grid, 45.0,
                     cfg, noise=NoiseModel(background=1.0), seed=1)
    grp2 = next(r for r in measure_angle(img2, 45.0, grid_plan) if r.kind == "group")
    assert grp2.flagged


def test_two_path_visibility(cfg):
    g = PathGeometry([(0.0, 0.0), (0.0, 2.7)])
    for mag in (0.0, 0.2, 0.5):
        rho = np.array([[0.5, mag * 1j], [-mag * 1j, 0.5]])
        s = extract_slice(oft_image(rho, g, 90.0, cfg), 0.0)
        assert fringe_visibility(s, 2.7, cfg.center[1], cfg) == pytest.approx(2 * mag, abs=1e-3)


# ------------------------------------------------------------- direct-image diagonals


def test_direct_diagonals_uniform(cfg, grid):
    d = diagonals_from_direct(direct_image(maximally_mixed(6), grid, cfg), grid)
    assert d == pytest.approx([1 / 6] * 6, abs=0.005)


def test_direct_diagonals_single_path(cfg, grid):
    rho = np.zeros((6, 6))
    rho[0, 0] = 1
    d = diagonals_from_direct(direct_image(rho, grid, cfg), grid)
    assert d == pytest.approx([1, 0, 0, 0, 0, 0], abs=1e-6)


def test_direct_diagonals_with_shot_noise(cfg, grid):
    target = np.array([0.5, 0.3, 0.2, 0, 0, 0])
    nm = NoiseModel(poisson=True, photon_budget=1e6)
    for seed in range(3):
        img = direct_image(np.diag(target), grid, cfg, noise=nm, seed=seed)
        assert diagonals_from_direct(img, grid) == pytest.approx(target, abs=0.01)


def test_direct_overlapping_disks(cfg):
    g = PathGeometry([(0.0, 0.0), (1.5, 0.0)])
    with pytest.raises(GeometryError):
        diagonals_from_direct(direct_image(maximally_mixed(2), g, cfg), g)


# ------------------------------------------------------------- full reconstruction


def test_round_trip_maximally_mixed(cfg, grid, grid_plan):
    res = reconstruct_state(frames_for(maximally_mixed(6), grid, cfg), grid_plan)
    off = res.rho_raw.data - np.diag(res.rho_raw.data.diagonal())
    assert np.max(np.abs(off)) < 0.01
    assert fidelity(res.rho_physical, maximally_mixed(6)) >= 0.999


def test_round_trip_uniform_pure(cfg, grid, grid_plan):
    res = reconstruct_state(frames_for(UNIFORM6, grid, cfg), grid_plan)
    assert np.allclose(res.rho_raw.data, 1 / 6, atol=0.005)
    assert fidelity(res.rho_physical, UNIFORM6) >= 0.999


@pytest.mark.parametrize("seed", range(5))
def test_round_trip_random(cfg, grid, grid_plan, seed):
    rho = random_state(6, rank=1 + seed, seed=seed)
    res = reconstruct_state(frames_for(rho, grid, cfg), grid_plan)
    assert fidelity(res.rho_physical, rho) >= 0.999


def test_result_invariants(cfg, grid, grid_plan):
    rho = random_state(6, seed=21)
    res = reconstruct_state(frames_for(rho, grid, cfg), grid_plan)
    raw = res.rho_raw.data
    assert np.array_equal(raw, raw.conj().T)
    assert np.trace(raw).real == pytest.approx(1, abs=1e-12)
    assert res.rho_physical.is_physical(1e-12)
    # Full-rank states stay inside the positive cone when reconstructed without noise.
    assert res.diagnostics["psd_violation"] < 1e-6
    assert len(res.pair_table()) == 15


@pytest.mark.xfail(strict=True, reason="peaks 1.3 mm apart in one slice leak into each other "
                   "through the momentum envelope (~1e-4); a pure state has no slack in "
                   "|rho_ij| <= sqrt(rho_ii rho_jj) to absorb it")
def test_psd_violation_of_pure_state(cfg, grid, grid_plan):
    res = reconstruct_state(frames_for(UNIFORM6, grid, cfg), grid_plan)
    assert res.diagnostics["psd_violation"] == pytest.approx(1.1e-4, rel=0.1)
    assert res.diagnostics["psd_violation"] < 1e-6


def test_gain_invariance(cfg, grid, grid_plan):
    rho = random_state(6, rank=3, seed=2)
    fs = frames_for(rho, grid, cfg, noise=NoiseModel(poisson=True, photon_budget=1e5), seed=3)
    a = reconstruct_state(fs, grid_plan).rho_raw.data
    b = reconstruct_state(fs.scaled(3.7), grid_plan).rho_raw.data
    assert np.max(np.abs(a - b)) < 1e-9


def test_arbitrary_frames_give_hermitian_unit_trace(cfg, grid, grid_plan):
    rng = np.random.default_rng(0)
    fs = FrameSet(CameraImage(rng.random((cfg.n_y, cfg.n_x)), cfg))
    for th in grid_plan.thetas:
        fs.add(CameraImage(rng.random((cfg.n_y, cfg.n_x)) * 100, cfg, th))
    res = reconstruct_state(fs, grid_plan, subtract_background=False)
    raw = res.rho_raw.data
    assert np.array_equal(raw, raw.conj().T)
    assert np.trace(raw).real == pytest.approx(1, abs=1e-12)


def test_direct_and_case2_diagonals_are_merged(cfg, grid, grid_plan):
    rho = random_state(6, seed=5)
    res = reconstruct_state(frames_for(rho, grid, cfg), grid_plan)
    c2 = np.array(res.diagnostics["diagonal_case2"])
    direct = np.array(res.diagnostics["diagonal_direct"])
    true = rho.data.diagonal().real
    assert c2 == pytest.approx(true, abs=2e-3)
    assert direct == pytest.approx(true, abs=2e-3)


def test_repeated_frames_are_averaged(cfg, grid, grid_plan):
    rho = random_state(6, seed=5)
    nm = NoiseModel(poisson=True, photon_budget=1e4)
    fs = frames_for(rho, grid, cfg, noise=nm, seed=1, repeats=4)
    assert all(len(v) == 4 for v in fs.oft.values())
    res = reconstruct_state(fs, grid_plan, width=9)
    assert res.diagnostics["pair_stderr"]
    assert fidelity(res.rho_physical, rho) > 0.98


def test_uncovered_pair(cfg, grid, grid_plan):
    fs = frames_for(random_state(6, seed=1), grid, cfg)
    del fs.oft[next(iter(fs.oft))]
    with pytest.raises(IncompletePlanError, match="incomplete plan"):
        reconstruct_state(fs, grid_plan)


def test_lone_path_without_direct_image_is_fine_but_ruler_is_not(cfg):
    g = PathGeometry([(0.0, 0.0), (0.0, 2.7), (0.0, 6.7)])
    plan = plan_measurements(g)
    fs = frames_for(maximally_mixed(3), g, cfg)
    fs.direct = None
    with pytest.raises(IncompletePlanError, match="direct image"):
        reconstruct_state(fs, plan)


def test_config_mismatch(cfg, grid, grid_plan):
    fs = frames_for(random_state(6, seed=1), grid, cfg)
    other = OpticalConfig(exposure=2e6)
    fs.direct = direct_image(random_state(6, seed=1), grid, other)
    with pytest.raises(ConfigMismatchError, match="config mismatch"):
        reconstruct_state(fs, grid_plan)


def test_lab_frame_images(cfg, grid, grid_plan):
    rho = random_state(6, seed=7)
    fs = frames_for(rho, grid, cfg, lab_frame=True)
    assert all(im.frame == "lab" for ims in fs.oft.values() for im in ims)
    res = reconstruct_state(fs, grid_plan)
    assert fidelity(res.rho_physical, rho) > 0.99


def test_rotation_equivariance(cfg):
    rho = random_state(4, seed=3)
    g = square_geometry(2.7)
    a = reconstruct_state(frames_for(rho, g, cfg), plan_measurements(g)).rho_raw.data
    g_rot = g.rotated(17.0)
    b = reconstruct_state(frames_for(rho, g_rot, cfg), plan_measurements(g_rot)).rho_raw.data
    assert np.max(np.abs(a - b)) < 1e-3


# ------------------------------------------------------------- calibration


def offsets_for(plan, scale, seed=0):
    rng = np.random.default_rng(seed)
    return {t: float(rng.uniform(-scale, scale)) for t in plan.thetas}


def calibrate_on(g, cfg, offsets=None, mirrored=False, refs=None):
    plan = plan_measurements(g)
    r1, r2 = refs or reference_states(g.d)
    f1 = frames_for(r1, g, cfg, offsets=offsets, mirrored=mirrored)
    f2 = frames_for(r2, g, cfg, offsets=offsets, mirrored=mirrored)
    return calibrate(f1, r1, f2, r2, plan), plan


def test_identity_calibration_without_offsets(cfg, grid):
    cal, _ = calibrate_on(grid, cfg)
    assert not cal.conjugate
    for f in cal.factors.values():
        assert abs(f - 1) < 1e-6


def test_calibration_factors_are_unit(cfg, grid, grid_plan):
    cal, _ = calibrate_on(grid, cfg, offsets_for(grid_plan, 20))
    assert all(abs(abs(f) - 1) < 1e-9 for f in cal.factors.values())


def test_offset_phase_slope(cfg, grid, grid_plan):
    dp = 2.0
    cal, plan = calibrate_on(grid, cfg, {t: dp for t in grid_plan.thetas})
    expected = 2 * math.pi * cfg.pixel_pitch_mm * dp / (cfg.oft_focal_mm * cfg.wavelength_mm)
    xs, ys = [], []
    for a in plan.angles:
        for grp in a.groups:
            for p in grp.pairs:
                f = cal.factors[(round(a.theta, 6), p.i, p.j)]
                sign = -1 if p.conjugate else 1
                xs.append(sign * p.length * cfg.magnification)
                ys.append(np.angle(f))
    slope = np.dot(xs, ys) / np.dot(xs, xs)
    assert slope == pytest.approx(expected, rel=0.01)
    assert np.allclose(ys, slope * np.array(xs), atol=1e-3)


@pytest.mark.parametrize("mirrored", [False, True])
def test_calibration_restores_fidelity(cfg, grid, grid_plan, mirrored):
    offs = offsets_for(grid_plan, 20, seed=2)
    cal, plan = calibrate_on(grid, cfg, offs, mirrored)
    assert cal.conjugate == mirrored
    for seed in range(3):
        rho = random_state(6, seed=seed + 50)
        fs = frames_for(rho, grid, cfg, offsets=offs, mirrored=mirrored)
        assert fidelity(reconstruct_state(fs, plan).rho_physical, rho) < 0.99
        assert fidelity(reconstruct_state(fs, plan, cal).rho_physical, rho) >= 0.999


def test_swapping_references(cfg, grid, grid_plan):
    offs = offsets_for(grid_plan, 10, seed=4)
    r1, r2 = reference_states(6)
    cal_a, plan = calibrate_on(grid, cfg, offs, refs=(r1, r2))
    cal_b, _ = calibrate_on(grid, cfg, offs, refs=(r2, r1))
    rho = random_state(6, seed=99)
    fs = frames_for(rho, grid, cfg, offsets=offs)
    a = reconstruct_state(fs, plan, cal_a).rho_physical
    b = reconstruct_state(fs, plan, cal_b).rho_physical
    assert fidelity(a, b) >= 0.999
    assert fidelity(a, rho) >= 0.999


def test_vanishing_reference_coherence(cfg, grid):
    r1 = maximally_mixed(6)
    with pytest.raises(CalibrationError, match=r"unusable reference.*\(\d,\d\)"):
        calibrate_on(grid, cfg, refs=(r1, reference_states(6)[1]))


def test_identity_calibration_is_noop(cfg, grid, grid_plan):
    rho = random_state(6, seed=1)
    fs = frames_for(rho, grid, cfg)
    a = reconstruct_state(fs, grid_plan).rho_raw.data
    b = reconstruct_state(fs, grid_plan, Calibration.identity()).rho_raw.data
    assert np.array_equal(a, b)


def test_measure_frames_covers_plan(cfg, grid, grid_plan):
    readings = measure_frames(frames_for(UNIFORM6, grid, cfg), grid_plan)
    assert sorted((r.i, r.j) for r in readings if r.kind == "pair") == grid_plan.covered_pairs()
