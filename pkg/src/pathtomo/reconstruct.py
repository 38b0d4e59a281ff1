"""Density-matrix reconstruction from direct and cylindrical-lens frames.

Each lens-angle frame is cut into one-pixel columns ("slices") through the
interference pattern of every group of paths sharing a line along the lens
axis. The complex value of the slice's Fourier transform at the pair's
spacing gives the coherence; zero-frequency values give diagonals and the
per-frame normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    CalibrationError,
    ConfigMismatchError,
    FieldOfViewError,
    GeometryError,
    IncompletePlanError,
)
from .geometry import MeasurementPlan, PathGeometry, _angle_close
from .optics import CameraImage, OpticalConfig, pixel_to_momentum, rotate_array
from .quantum import DensityMatrix, fidelity, hermitize, nearest_physical, psd_violation

MIN_REFERENCE_COHERENCE = 0.02
SIGNAL_TO_BACKGROUND_MIN = 5.0


def rotate_image(img: CameraImage, angle: float) -> CameraImage:
    """Rotate the frame content by ``angle`` degrees about its centre
    (bilinear; samples from outside the frame are zero)."""
    if angle == 0:
        return replace(img, intensities=img.intensities.copy())
    return replace(img, intensities=rotate_array(img.intensities, angle),
                   rotation=img.rotation + angle)


def slice_column(img: CameraImage, x_m: float) -> int:
    cfg = img.config
    col = cfg.center[0] + cfg.magnification * x_m / cfg.pixel_pitch_mm
    c = int(np.floor(col + 0.5))
    if c < 0 or c >= cfg.n_x:
        raise FieldOfViewError(f"slice at x_m={x_m} mm (column {col:.1f}) is outside the frame")
    return c


def _slice_columns(img: CameraImage, x_m: float, width: int) -> np.ndarray:
    c = slice_column(img, x_m)
    if width <= 1:
        return np.array([c])
    lo = c - (width - 1) // 2
    if lo < 0 or lo + width > img.config.n_x:
        raise FieldOfViewError(f"slice of width {width} at column {c} leaves the frame")
    return np.arange(lo, lo + width)


def profile_weight(img: CameraImage, x_m: float, width: int, sigma: float) -> float:
    """Mean relative transverse intensity exp(-2 d^2 / w^2) over the slice
    columns, d being each column's distance from the group centre. Dividing
    by it removes the sub-pixel placement error of the slice."""
    cfg = img.config
    w = cfg.magnification * sigma
    target = cfg.magnification * x_m
    d = (_slice_columns(img, x_m, width) - cfg.center[0]) * cfg.pixel_pitch_mm - target
    return float(np.mean(np.exp(-2 * d * d / (w * w))))


def extract_slice(img: CameraImage, x_m: float, width: int = 1) -> np.ndarray:
    """Column of pixels along the OFT axis through lens-frame coordinate ``x_m``
    (object-plane mm). ``width > 1`` averages neighbouring columns, which
    can lower the visibility if fringes are tilted."""
    cols = _slice_columns(img, x_m, width)
    if cols.size == 1:
        return img.intensities[:, cols[0]].copy()
    return img.intensities[:, cols].mean(axis=1)


def peak_at_frequency(slc: np.ndarray, length: float, axis_origin: float,
                      cfg: OpticalConfig) -> complex:
    """Exact-frequency projection ``sum_p slice[p] exp(-i k(p) L M)``.

    ``length`` is an object-plane spacing (mm); the magnification maps it to
    the camera. ``length = 0`` gives the total intensity of the slice.
    """
    slc = np.asarray(slc, dtype=float)
    if length == 0:
        return complex(slc.sum())
    k = pixel_to_momentum(np.arange(slc.size), axis_origin, cfg)
    return complex(np.dot(slc, np.exp(-1j * k * length * cfg.magnification)))


def fringe_visibility(slc: np.ndarray, length: float, axis_origin: float,
                      cfg: OpticalConfig) -> float:
    """Fringe contrast 2|S(L)| / S(0) of a slice."""
    dc = peak_at_frequency(slc, 0.0, axis_origin, cfg).real
    return 2 * abs(peak_at_frequency(slc, length, axis_origin, cfg)) / dc


def slice_spectrum(slc: np.ndarray, cfg: OpticalConfig):
    """FFT magnitude of a slice against object-plane spacing (mm); for plots."""
    n = len(slc)
    spec = np.abs(np.fft.rfft(slc))
    ybar = 2 * np.pi * np.fft.rfftfreq(n, d=cfg.k_step) / cfg.magnification
    return ybar, spec


def estimate_background(img: CameraImage) -> float:
    """Per-pixel background level, taken as the frame median."""
    return float(np.median(img.intensities))


@dataclass(frozen=True)
class PeakReading:
    """One Fourier readout.

    For ``kind == "pair"`` ``raw`` is the complex peak at the pair spacing,
    oriented so that it estimates rho[i, j] (before calibration); ``dc`` is
    the zero-frequency value of the same slice. For ``kind == "diag"`` (a
    lone path) and ``kind == "group"`` (several paths) ``raw`` equals ``dc``.
    ``norm`` is the frame normalization: the sum of every group's ``dc``.
    """

    kind: str
    i: int
    j: int
    theta: float
    x_m: float
    raw: complex
    dc: float
    norm: float
    snr: float
    flagged: bool = False
    members: tuple[int, ...] = ()

    @property
    def estimate(self) -> complex:
        return self.raw / self.norm


def _angle_key(theta: float) -> float:
    return round(float(theta), 6)


@dataclass
class FrameSet:
    """Frames of one state: an optional direct image and, per lens angle,
    one or more OFT frames (repeated frames are averaged)."""

    direct: CameraImage | None = None
    oft: dict[float, list[CameraImage]] = field(default_factory=dict)

    def add(self, img: CameraImage) -> None:
        if img.theta is None:
            self.direct = img
        else:
            self.oft.setdefault(_angle_key(img.theta), []).append(img)

    def frames_for(self, theta: float) -> list[CameraImage]:
        for key, imgs in self.oft.items():
            if _angle_close(key, theta, 1e-6):
                return imgs
        return []

    def all_frames(self) -> list[CameraImage]:
        out = [self.direct] if self.direct is not None else []
        for imgs in self.oft.values():
            out.extend(imgs)
        return out

    def scaled(self, factor: float) -> FrameSet:
        fs = FrameSet(self.direct.scaled(factor) if self.direct is not None else None)
        fs.oft = {k: [im.scaled(factor) for im in v] for k, v in self.oft.items()}
        return fs


def measure_angle(img: CameraImage, theta: float, plan: MeasurementPlan,
                  cfg: OpticalConfig | None = None, *, width: int = 1,
                  subtract_background: bool = True,
                  profile_correction: bool = True) -> list[PeakReading]:
    """Read every group of the plan at lens angle ``theta`` from one frame.

    With ``profile_correction`` each slice is divided by
    :func:`profile_weight`, so groups whose centres fall between pixel
    columns are not under-weighted in the frame normalization.
    """
    cfg = cfg or img.config
    ap = plan.angle(theta)
    if img.frame == "lab":
        img = rotate_image(img, 90.0 - ap.theta)
    bg = estimate_background(img) if subtract_background else 0.0
    origin = img.axis_origin
    raw_groups = []
    for grp in ap.groups:
        slc = extract_slice(img, grp.x_m, width) - bg
        if profile_correction:
            slc = slc / profile_weight(img, grp.x_m, width, plan.geometry.sigma)
        dc = peak_at_frequency(slc, 0.0, origin, cfg).real
        peaks = [peak_at_frequency(slc, p.length, origin, cfg) for p in grp.pairs]
        raw_groups.append((grp, dc, peaks))
    norm = sum(dc for _, dc, _ in raw_groups)
    floor = bg * cfg.n_y
    out = []
    for grp, dc, peaks in raw_groups:
        snr = dc / floor if floor > 0 else math.inf
        flagged = floor > 0 and dc < SIGNAL_TO_BACKGROUND_MIN * floor
        if grp.lone is not None:
            out.append(PeakReading("diag", grp.lone, grp.lone, ap.theta, grp.x_m, complex(dc),
                                   dc, norm, snr, flagged, grp.members))
        else:
            out.append(PeakReading("group", -1, -1, ap.theta, grp.x_m, complex(dc), dc, norm,
                                   snr, flagged, grp.members))
        for p, s in zip(grp.pairs, peaks):
            raw = s.conjugate() if p.conjugate else s
            out.append(PeakReading("pair", p.i, p.j, ap.theta, grp.x_m, raw, dc, norm, snr,
                                   flagged, grp.members))
    return out


@dataclass
class Calibration:
    """Per (lens angle, pair) phase corrections plus a global orientation.

    ``reference[key]`` is the unit phasor measured for the first reference
    state and ``known[key]`` the unit phasor it should have had. The
    correction in identity orientation is ``conj(reference) * known``
    (``factors``); with ``conjugate`` set the measured phase is mirrored
    before correcting.
    """

    reference: dict[tuple[float, int, int], complex] = field(default_factory=dict)
    known: dict[tuple[float, int, int], complex] = field(default_factory=dict)
    conjugate: bool = False
    reference_ids: tuple[str, str] = ("", "")

    @property
    def factors(self) -> dict[tuple[float, int, int], complex]:
        return {k: self.reference[k].conjugate() * self.known[k] for k in self.reference}

    @classmethod
    def identity(cls) -> Calibration:
        return cls()

    def correct(self, reading: PeakReading, conjugate: bool | None = None) -> complex:
        """Calibrated estimate of rho[i, j] from a pair reading."""
        conj = self.conjugate if conjugate is None else conjugate
        key = (_angle_key(reading.theta), reading.i, reading.j)
        o = reading.raw
        if key in self.reference:
            ref, known = self.reference[key], self.known[key]
            val = (o.conjugate() * ref * known) if conj else (o * ref.conjugate() * known)
        else:
            val = o.conjugate() if conj else o
        return val / reading.norm


def _check_configs(frames: FrameSet) -> OpticalConfig:
    imgs = frames.all_frames()
    if not imgs:
        raise IncompletePlanError("incomplete plan: no frames supplied")
    cfg = imgs[0].config
    for im in imgs[1:]:
        if im.config != cfg:
            raise ConfigMismatchError("config mismatch: frames were taken with different optics")
    return cfg


def measure_frames(frames: FrameSet, plan: MeasurementPlan, *, width: int = 1,
                   subtract_background: bool = True) -> list[PeakReading]:
    cfg = _check_configs(frames)
    missing = [(p.i, p.j) for a in plan.angles if not frames.frames_for(a.theta)
               for grp in a.groups for p in grp.pairs]
    if missing:
        raise IncompletePlanError(f"incomplete plan: no frames cover pairs {missing}")
    readings = []
    for a in plan.angles:
        for img in frames.frames_for(a.theta):
            readings.extend(measure_angle(img, a.theta, plan, cfg, width=width,
                                          subtract_background=subtract_background))
    return readings


def _direct_estimate(img: CameraImage, g: PathGeometry, subtract_background: bool = True):
    cfg = img.config
    radius = 3 * cfg.magnification * g.sigma
    pos = (g.points - g.centroid) * cfg.magnification
    for i in range(g.d):
        for j in range(i + 1, g.d):
            if np.hypot(*(pos[i] - pos[j])) <= 2 * radius:
                raise GeometryError(
                    f"integration disks of paths {i} and {j} overlap (radius {radius:.3f} mm)"
                )
    cu, cv = cfg.center
    gamma = cfg.pixel_pitch_mm
    u = (np.arange(cfg.n_x) - cu) * gamma
    v = (np.arange(cfg.n_y) - cv) * gamma
    data = img.intensities - (estimate_background(img) if subtract_background else 0.0)
    sums = np.empty(g.d)
    for i in range(g.d):
        cols = np.nonzero(np.abs(u - pos[i, 0]) <= radius)[0]
        rows = np.nonzero(np.abs(v - pos[i, 1]) <= radius)[0]
        if cols.size == 0 or rows.size == 0:
            raise FieldOfViewError(f"path {i} lies outside the direct image")
        uu, vv = np.meshgrid(u[cols], v[rows])
        mask = (uu - pos[i, 0]) ** 2 + (vv - pos[i, 1]) ** 2 <= radius * radius
        sums[i] = data[np.ix_(rows, cols)][mask].sum()
    return sums, float(sums.sum())


def diagonals_from_direct(img: CameraImage, g: PathGeometry, cfg: OpticalConfig | None = None,
                          *, subtract_background: bool = True) -> np.ndarray:
    """Path populations from a lens-free image: intensity inside a disk of
    radius 3 M sigma around each path, normalized to sum to one."""
    sums, total = _direct_estimate(img, g, subtract_background)
    if total <= 0:
        raise GeometryError("direct image contains no signal at the path positions")
    return sums / total


@dataclass
class ReconstructionResult:
    rho_raw: DensityMatrix
    rho_physical: DensityMatrix
    readings: list[PeakReading]
    diagnostics: dict

    def pair_table(self) -> list[dict]:
        r = np.asarray(self.rho_raw)
        rows = []
        for i in range(r.shape[0]):
            for j in range(i + 1, r.shape[0]):
                rows.append({"i": i, "j": j, "magnitude": float(abs(r[i, j])),
                             "phase_rad": float(np.angle(r[i, j]))})
        return rows


def assemble(readings: list[PeakReading], d: int, cal: Calibration | None = None, *,
             direct: np.ndarray | None = None, direct_weight: float = 0.0,
             conjugate: bool | None = None):
    """Combine readings into a raw matrix; returns (matrix, diagnostics)."""
    cal = cal or Calibration.identity()
    raw = np.zeros((d, d), dtype=complex)
    sums: dict[tuple[int, int], list[complex]] = {}
    for r in readings:
        if r.kind == "pair":
            sums.setdefault((r.i, r.j), []).append(cal.correct(r, conjugate))
    missing = [(i, j) for i in range(d) for j in range(i + 1, d) if (i, j) not in sums]
    if missing:
        raise IncompletePlanError(f"incomplete plan: uncovered pairs {missing}")
    spread = {}
    for (i, j), vals in sums.items():
        raw[i, j] = np.mean(vals)
        raw[j, i] = np.conj(raw[i, j])
        if len(vals) > 1:
            spread[(i, j)] = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
    # Zero-frequency diagonals weighted by collected intensity (Poisson variance ~ 1/N).
    num = np.zeros(d)
    wsum = np.zeros(d)
    for r in readings:
        if r.kind == "diag" and r.norm > 0:
            num[r.i] += r.dc
            wsum[r.i] += r.norm
    case2 = np.where(wsum > 0, num / np.where(wsum > 0, wsum, 1.0), np.nan)
    diag = np.zeros(d)
    for i in range(d):
        have_c2 = wsum[i] > 0
        have_direct = direct is not None
        if have_c2 and have_direct:
            diag[i] = (case2[i] * wsum[i] + direct[i] * direct_weight) / (wsum[i] + direct_weight)
        elif have_c2:
            diag[i] = case2[i]
        elif have_direct:
            diag[i] = direct[i]
        else:
            raise IncompletePlanError(
                f"incomplete plan: diagonal of path {i} needs the direct image"
            )
    raw[np.diag_indices(d)] = diag
    diags = {
        "diagonal_case2": [None if np.isnan(x) else float(x) for x in case2],
        "diagonal_direct": None if direct is None else [float(x) for x in direct],
        "pair_stderr": {f"{i},{j}": v for (i, j), v in spread.items()},
    }
    return raw, diags


def reconstruct_state(frames: FrameSet, plan: MeasurementPlan, cal: Calibration | None = None,
                      cfg: OpticalConfig | None = None, *, width: int = 1,
                      subtract_background: bool = True,
                      readings: list[PeakReading] | None = None) -> ReconstructionResult:
    """Linear reconstruction from per-angle frames plus the direct image.

    Off-diagonals are calibrated peak values over the frame normalization.
    Diagonals merge zero-frequency readings of lone paths with the direct
    image, weighting each source by its collected intensity. The matrix is
    Hermitized and trace-normalized (``rho_raw``) and then projected onto
    the physical states (``rho_physical``).
    """
    _check_configs(frames)
    if readings is None:
        readings = measure_frames(frames, plan, width=width,
                                  subtract_background=subtract_background)
    g = plan.geometry
    direct = None
    direct_weight = 0.0
    if frames.direct is not None:
        sums, total = _direct_estimate(frames.direct, g, subtract_background)
        if total > 0:
            direct, direct_weight = sums / total, total
    raw, diags = assemble(readings, g.d, cal, direct=direct, direct_weight=direct_weight)
    rho_raw = hermitize(raw)
    rho_phys = nearest_physical(rho_raw)
    diags.update(
        psd_violation=psd_violation(rho_raw),
        min_eigenvalue=float(rho_raw.eigenvalues()[0]),
        flagged_readings=sum(1 for r in readings if r.flagged),
        conjugate=bool(cal.conjugate) if cal is not None else False,
    )
    return ReconstructionResult(rho_raw, rho_phys, readings, diags)


def calibrate(ref1: FrameSet, rho1, ref2: FrameSet, rho2, plan: MeasurementPlan, *,
              width: int = 1, subtract_background: bool = True,
              ids: tuple[str, str] = ("ref1", "ref2")) -> Calibration:
    """Fix coherence phases from two known reference states.

    The first reference sets the phase offset of every (angle, pair) peak.
    The second decides the overall orientation: both choices are applied to
    its frames and the one reconstructing it with higher fidelity wins (ties
    keep the identity).
    """
    known1 = np.asarray(rho1, dtype=complex)
    cal = Calibration(reference_ids=ids)
    for r in measure_frames(ref1, plan, width=width, subtract_background=subtract_background):
        if r.kind != "pair":
            continue
        mag = abs(r.raw) / r.norm if r.norm > 0 else 0.0
        if mag < MIN_REFERENCE_COHERENCE or abs(known1[r.i, r.j]) < MIN_REFERENCE_COHERENCE:
            raise CalibrationError(
                f"unusable reference: coherence ({r.i},{r.j}) at theta={r.theta:.3f} "
                f"is {mag:.4f} (< {MIN_REFERENCE_COHERENCE})"
            )
        key = (_angle_key(r.theta), r.i, r.j)
        cal.reference[key] = r.raw / abs(r.raw)
        k = known1[r.i, r.j]
        cal.known[key] = k / abs(k)
    readings2 = measure_frames(ref2, plan, width=width, subtract_background=subtract_background)
    best = None
    for conj in (False, True):
        trial = replace(cal, conjugate=conj)
        res = reconstruct_state(ref2, plan, trial, width=width,
                                subtract_background=subtract_background, readings=readings2)
        f = fidelity(res.rho_physical, rho2)
        if best is None or f > best[0] + 1e-12:
            best = (f, conj)
    cal.conjugate = best[1]
    return cal
