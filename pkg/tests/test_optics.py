import math

import numpy as np
import pytest

from pathtomo.errors import AliasingError, FieldOfViewError, InvalidStateError
from pathtomo.geometry import PathGeometry, grid_2x3, plan_measurements
from pathtomo.optics import (
    CameraImage,
    NoiseModel,
    OpticalConfig,
    direct_image,
    momentum_envelope,
    oft_image,
    pixel_to_momentum,
    rotate_array,
    to_lab_frame,
)
from pathtomo.quantum import DensityMatrix, maximally_mixed, random_state

PAIR = PathGeometry([(0.0, 0.0), (0.0, 2.7)])


def central_column(img):
    return img.intensities[:, int(round(img.config.center[0]))]


def fit_fringe(img, spacing_obj_mm):
    """Least-squares fit of slice / envelope to a + b cos(kL) + c sin(kL) near k = 0.

    Returns (visibility, phase) of the fringe a (1 + V cos(kL + phase)).
    """
    cfg = img.config
    k = pixel_to_momentum(np.arange(cfg.n_y), img.axis_origin, cfg)
    w = cfg.magnification * PAIR.sigma
    env = momentum_envelope(k, w)
    keep = env > 0.05 * env.max()
    y = central_column(img)[keep] / env[keep]
    L = spacing_obj_mm * cfg.magnification
    A = np.column_stack([np.ones(keep.sum()), np.cos(k[keep] * L), np.sin(k[keep] * L)])
    a, b, c = np.linalg.lstsq(A, y, rcond=None)[0]
    return math.hypot(b, c) / a, math.atan2(-c, b)


# ------------------------------------------------------------- config / momentum


def test_pixel_to_momentum_origin_is_zero(cfg):
    assert pixel_to_momentum(17.0, 17.0, cfg) == 0.0


def test_pixel_to_momentum_one_pixel():
    cfg = OpticalConfig.full_resolution()
    expected = 2 * math.pi * 2.4e-3 / (250 * 8.08e-4)
    assert expected == pytest.approx(0.07466, abs=1e-5)
    assert pixel_to_momentum(1.0, 0.0, cfg) == pytest.approx(expected, rel=1e-12)
    assert pixel_to_momentum(-3.0, 0.0, cfg) == pytest.approx(-3 * expected)


def test_fringe_period_pixels():
    cfg = OpticalConfig.full_resolution()
    period_mm = 8.08e-4 * 250 / 1.08
    assert period_mm == pytest.approx(0.187, abs=5e-4)
    assert cfg.fringe_period_px(1.08) == pytest.approx(period_mm / 2.4e-3, rel=1e-12)
    assert cfg.fringe_period_px(1.08) == pytest.approx(77.9, abs=0.05)


def test_config_validation_and_json(cfg):
    with pytest.raises(ValueError):
        OpticalConfig(wavelength_nm=0)
    assert OpticalConfig.from_dict(cfg.to_dict()) == cfg
    assert set(cfg.to_dict()) >= {"wavelength_nm", "oft_focal_mm", "pixel_pitch_um",
                                  "resolution_px", "magnification"}


def test_noise_parse():
    n = NoiseModel.parse("poisson:1e4,read:2,bg:5")
    assert n.poisson and n.photon_budget == 1e4 and n.read_noise_sigma == 2 and n.background == 5
    assert not NoiseModel.parse("none").enabled
    with pytest.raises(ValueError):
        NoiseModel.parse("speckle:3")


# ------------------------------------------------------------- direct image


def test_direct_single_path_integrates_to_exposure(cfg):
    g = PathGeometry([(0.0, 0.0)])
    img = direct_image(DensityMatrix([[1.0]]), g, cfg)
    assert img.intensities.sum() == pytest.approx(cfg.exposure, rel=1e-3)
    assert img.theta is None


def test_direct_two_paths_equal(cfg):
    img = direct_image(maximally_mixed(2), PathGeometry([(0, 0), (2.7, 0)]), cfg)
    cu = int(round(cfg.center[0]))
    left, right = img.intensities[:, :cu + 1].sum(), img.intensities[:, cu:].sum()
    assert left == pytest.approx(right, rel=1e-9)


def test_direct_ignores_coherences(cfg, grid):
    a = random_state(6, seed=2).data.copy()
    b = np.diag(a.diagonal())
    i1 = direct_image(a, grid, cfg).intensities
    i2 = direct_image(b, grid, cfg).intensities
    assert np.array_equal(i1, i2)


def test_direct_field_of_view(cfg):
    with pytest.raises(FieldOfViewError):
        direct_image(maximally_mixed(2), PathGeometry([(0, 0), (20.0, 0)]), cfg)


def test_dimension_mismatch(cfg, grid):
    with pytest.raises(InvalidStateError):
        direct_image(maximally_mixed(3), grid, cfg)


# ------------------------------------------------------------- OFT image


def test_pure_pair_has_unit_visibility(cfg):
    img = oft_image(np.full((2, 2), 0.5), PAIR, 90.0, cfg)
    v, _ = fit_fringe(img, 2.7)
    assert v == pytest.approx(1.0, abs=1e-6)


def test_mixed_pair_has_no_fringes(cfg):
    img = oft_image(np.eye(2) / 2, PAIR, 90.0, cfg)
    v, _ = fit_fringe(img, 2.7)
    assert v < 1e-9


@pytest.mark.parametrize("mag", [0.0, 0.1, 0.25, 0.4])
def test_visibility_tracks_coherence(cfg, mag):
    rho = np.array([[0.5, mag * np.exp(0.7j)], [mag * np.exp(-0.7j), 0.5]])
    v, _ = fit_fringe(oft_image(rho, PAIR, 90.0, cfg), 2.7)
    assert v == pytest.approx(2 * mag, abs=1e-6)


def test_coherence_sign_shifts_fringes_by_half_period(cfg):
    plus = oft_image(np.full((2, 2), 0.5), PAIR, 90.0, cfg)
    minus = oft_image(np.array([[0.5, -0.5], [-0.5, 0.5]]), PAIR, 90.0, cfg)
    _, p1 = fit_fringe(plus, 2.7)
    _, p2 = fit_fringe(minus, 2.7)
    dphi = (p2 - p1) % (2 * math.pi)
    assert dphi == pytest.approx(math.pi, abs=1e-6)
    # Shifting the pattern by half a fringe period maps one onto the other.
    period = cfg.fringe_period_px(2.7 * cfg.magnification)
    env = central_column(plus) + central_column(minus)  # fringes cancel in the sum
    r1, r2 = central_column(plus) / env, central_column(minus) / env
    p = np.arange(cfg.n_y)
    shifted = np.interp(p + period / 2, p, r1)
    mid = slice(cfg.n_y // 2 - 40, cfg.n_y // 2 + 40)
    # Linear interpolation of a ~20 px period cosine is accurate to ~1%.
    assert np.max(np.abs(shifted[mid] - r2[mid])) < 0.02


def test_fringe_frequency_matches_spacing(cfg):
    img = oft_image(np.full((2, 2), 0.5), PAIR, 90.0, cfg)
    col = central_column(img)
    spec = np.abs(np.fft.rfft(col))
    spec[:10] = 0  # envelope lobe around zero frequency
    peak_bin = int(np.argmax(spec))
    expected_bin = cfg.n_y / cfg.fringe_period_px(2.7 * cfg.magnification)
    assert abs(peak_bin - expected_bin) <= 1


def test_oft_images_non_negative(cfg, grid, grid_plan):
    rho = random_state(6, seed=5)
    for th in grid_plan.thetas:
        img = oft_image(rho, grid, th, cfg)
        assert img.intensities.min() >= -1e-12 * img.intensities.max()


def test_total_intensity_independent_of_angle(cfg, grid, grid_plan):
    rho = random_state(6, rank=2, seed=8)
    totals = [oft_image(rho, grid, th, cfg).intensities.sum() for th in grid_plan.thetas]
    assert np.ptp(totals) / np.mean(totals) < 1e-3
    assert np.mean(totals) == pytest.approx(cfg.exposure, rel=1e-3)


def test_incoherent_marginal_matches_direct(cfg, grid):
    rho = np.diag(random_state(6, seed=3).data.diagonal().real)
    oft = oft_image(rho, grid, 90.0, cfg).intensities.sum(axis=0)
    direct = direct_image(rho, grid, cfg).intensities.sum(axis=0)
    assert np.max(np.abs(oft - direct)) < 5e-3 * direct.max()


def test_origin_offset_shifts_phase(cfg):
    rho = np.full((2, 2), 0.5)
    a = oft_image(rho, PAIR, 90.0, cfg)
    b = oft_image(rho, PAIR, 90.0, cfg, origin_offset=5.0)
    assert not np.allclose(a.intensities, b.intensities)
    assert b.origin_offset == 5.0


def test_aliasing_detected(cfg):
    # Camera-plane spacing 12 mm gives a fringe period of 1.75 px.
    g = PathGeometry([(0.0, 0.0), (0.0, 30.0)])
    assert cfg.fringe_period_px(12.0) < 2
    with pytest.raises(AliasingError, match="Nyquist"):
        oft_image(np.eye(2) / 2, g, 90.0, cfg)


def test_oft_field_of_view(cfg):
    g = PathGeometry([(0.0, 0.0), (30.0, 0.0)])
    with pytest.raises(FieldOfViewError):
        oft_image(np.eye(2) / 2, g, 90.0, cfg)


# ------------------------------------------------------------- noise


def test_poisson_noise_budget_and_determinism(cfg, grid):
    rho = random_state(6, seed=1)
    nm = NoiseModel(poisson=True, photon_budget=1e4)
    a = oft_image(rho, grid, 45.0, cfg, noise=nm, seed=3)
    b = oft_image(rho, grid, 45.0, cfg, noise=nm, seed=3)
    c = oft_image(rho, grid, 45.0, cfg, noise=nm, seed=4)
    assert np.array_equal(a.intensities, b.intensities)
    assert not np.array_equal(a.intensities, c.intensities)
    assert np.all(a.intensities == np.rint(a.intensities))
    assert abs(a.intensities.sum() - 1e4) < 5 * math.sqrt(1e4)


def test_background_and_read_noise(cfg, grid):
    rho = random_state(6, seed=1)
    img = direct_image(rho, grid, cfg, noise=NoiseModel(read_noise_sigma=2, background=10), seed=0)
    corner = img.intensities[:50, :50]
    assert corner.mean() == pytest.approx(10, abs=0.5)
    assert img.intensities.max() <= 65535 and img.intensities.min() >= 0


# ------------------------------------------------------------- rotation


def test_rotate_zero_is_identity():
    a = np.random.default_rng(0).random((30, 40))
    assert np.array_equal(rotate_array(a, 0.0), a)


def test_rotation_round_trip_on_smooth_image():
    y, x = np.mgrid[0:101, 0:101]
    a = np.exp(-((x - 50) ** 2 + (y - 50) ** 2) / 200.0)
    back = rotate_array(rotate_array(a, 90.0), -90.0)
    assert np.max(np.abs(back - a)) < 0.01 * a.max()


def test_lab_frame_metadata(cfg, grid):
    img = oft_image(random_state(6, seed=1), grid, 45.0, cfg)
    lab = to_lab_frame(img)
    assert lab.frame == "lab" and lab.rotation == pytest.approx(-45.0)
    with pytest.raises(ValueError):
        to_lab_frame(lab)


def test_camera_image_shape_checked(cfg):
    with pytest.raises(InvalidStateError):
        CameraImage(np.zeros((3, 3)), cfg)
