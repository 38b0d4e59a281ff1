"""Camera-frame synthesis for direct images and cylindrical-lens (OFT) images.

Images are ``(N_y, N_x)`` arrays indexed ``[row, column]``. Columns run
along the untransformed camera axis ``u``; rows run along the OFT axis and
map to transverse momentum through :func:`pixel_to_momentum`.

Each path is a Gaussian with amplitude ``exp(-r^2 / w^2)``, ``w`` being the
path width scaled to the camera by the relay magnification.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import AliasingError, FieldOfViewError, InvalidStateError
from .geometry import PathGeometry, nyquist_limit

MAXVAL_16BIT = 65535


@dataclass(frozen=True)
class OpticalConfig:
    """Imaging and OFT parameters.

    The defaults are the experiment's values at "desk" resolution: the
    3088 x 2076 sensor binned by four, with the pixel pitch scaled to keep
    the physical sensor size.
    """

    wavelength_nm: float = 808.0
    oft_focal_mm: float = 250.0
    pixel_pitch_um: float = 9.6
    resolution: tuple[int, int] = (772, 519)  # (N_x, N_y)
    magnification: float = 0.4
    lens_aperture_mm: float = 25.4
    exposure: float = 1e6

    def __post_init__(self):
        object.__setattr__(self, "resolution", tuple(int(n) for n in self.resolution))
        for name in ("wavelength_nm", "oft_focal_mm", "pixel_pitch_um", "magnification",
                     "lens_aperture_mm", "exposure"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if len(self.resolution) != 2 or min(self.resolution) < 2:
            raise ValueError(f"bad resolution {self.resolution}")

    @classmethod
    def full_resolution(cls) -> OpticalConfig:
        """Full-resolution sensor of the experiment."""
        return cls(pixel_pitch_um=2.40, resolution=(3088, 2076))

    @property
    def wavelength_mm(self) -> float:
        return self.wavelength_nm * 1e-6

    @property
    def pixel_pitch_mm(self) -> float:
        return self.pixel_pitch_um * 1e-3

    @property
    def n_x(self) -> int:
        return self.resolution[0]

    @property
    def n_y(self) -> int:
        return self.resolution[1]

    @property
    def k_step(self) -> float:
        """Momentum increment per pixel along the OFT axis, rad/mm."""
        return 2 * math.pi * self.pixel_pitch_mm / (self.oft_focal_mm * self.wavelength_mm)

    @property
    def center(self) -> tuple[float, float]:
        """(column, row) of the optical axis."""
        return (self.n_x - 1) / 2.0, (self.n_y - 1) / 2.0

    def fringe_period_px(self, spacing_camera_mm: float) -> float:
        return self.wavelength_mm * self.oft_focal_mm / (spacing_camera_mm * self.pixel_pitch_mm)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["resolution_px"] = list(d.pop("resolution"))
        d["exposure_counts"] = d.pop("exposure")
        return d

    @classmethod
    def from_dict(cls, obj: dict) -> OpticalConfig:
        obj = dict(obj)
        if "resolution_px" in obj:
            obj["resolution"] = tuple(obj.pop("resolution_px"))
        if "exposure_counts" in obj:
            obj["exposure"] = obj.pop("exposure_counts")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown optical config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class NoiseModel:
    """Detector noise. Applied as Poisson shot noise (scaled so the frame
    holds ``photon_budget`` expected counts), then Gaussian read noise, then
    a constant background; the result is clamped at zero and rounded to
    16-bit counts. With everything disabled frames stay noiseless floats."""

    poisson: bool = False
    photon_budget: float = 1e4
    read_noise_sigma: float = 0.0
    background: float = 0.0

    def __post_init__(self):
        if self.photon_budget < 0 or self.read_noise_sigma < 0 or self.background < 0:
            raise ValueError("noise parameters must be non-negative")

    @property
    def enabled(self) -> bool:
        return self.poisson or self.read_noise_sigma > 0 or self.background > 0

    @classmethod
    def parse(cls, text: str | None) -> NoiseModel:
        """Parse ``none``, ``poisson:1e4`` or comma-joined terms such as
        ``poisson:1e4,read:2,bg:5``."""
        if not text or text == "none":
            return cls()
        kw: dict = {}
        for term in text.split(","):
            key, _, val = term.partition(":")
            key = key.strip()
            if key == "poisson":
                kw["poisson"] = True
                if val:
                    kw["photon_budget"] = float(val)
            elif key == "read":
                kw["read_noise_sigma"] = float(val)
            elif key in ("bg", "background"):
                kw["background"] = float(val)
            else:
                raise ValueError(f"unknown noise term {key!r}")
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CameraImage:
    """A recorded or simulated frame.

    ``origin_offset`` and ``mirrored`` describe the true k-axis origin
    shift (pixels) and orientation; they are simulator ground truth and are
    never read by the reconstruction.
    """

    intensities: np.ndarray
    config: OpticalConfig
    theta: float | None = None
    frame: str = "lens"  # "lens": OFT axis along rows; "lab": rotated with the lens
    seed: int | None = None
    noise: NoiseModel = field(default_factory=NoiseModel)
    origin_offset: float = 0.0
    mirrored: bool = False
    rotation: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.intensities, dtype=float)
        if a.shape != (self.config.n_y, self.config.n_x):
            raise InvalidStateError(
                f"image shape {a.shape} does not match resolution {self.config.resolution}"
            )
        self.intensities = a

    @property
    def axis_origin(self) -> float:
        """Nominal row of k = 0 (the true origin is unknown to the analysis)."""
        return self.config.center[1]

    def scaled(self, factor: float) -> CameraImage:
        return replace(self, intensities=self.intensities * factor)


def pixel_to_momentum(p, axis_origin: float, cfg: OpticalConfig):
    """Transverse momentum (rad/mm) at OFT-axis pixel ``p``:
    ``k = 2 pi gamma (p - origin) / (f lambda)``."""
    return cfg.k_step * (np.asarray(p, dtype=float) - axis_origin)


def gaussian_amplitude(x, w: float):
    """Unit-norm 1-D amplitude ``exp(-x^2/w^2)`` (its square integrates to 1)."""
    return (2.0 / (math.pi * w * w)) ** 0.25 * np.exp(-(np.asarray(x) ** 2) / (w * w))


def momentum_envelope(k, w: float):
    """Normalized momentum density of one path, ``|psi~(k)|^2``."""
    return w / math.sqrt(2 * math.pi) * np.exp(-0.5 * (np.asarray(k) * w) ** 2)


def _check_rho(rho, g: PathGeometry) -> np.ndarray:
    a = np.asarray(rho, dtype=complex)
    if a.shape != (g.d, g.d):
        raise InvalidStateError(f"state dimension {a.shape} does not match {g.d} paths")
    return a


def apply_noise(intensity: np.ndarray, noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    if not noise.enabled:
        return intensity
    x = intensity
    if noise.poisson:
        total = x.sum()
        scale = noise.photon_budget / total if total > 0 else 0.0
        x = rng.poisson(x * scale).astype(float)
    if noise.read_noise_sigma > 0:
        x = x + rng.normal(0.0, noise.read_noise_sigma, size=x.shape)
    if noise.background > 0:
        x = x + noise.background
    return np.clip(np.rint(x), 0, MAXVAL_16BIT)


def direct_image(rho, g: PathGeometry, cfg: OpticalConfig, noise: NoiseModel | None = None,
                 seed=None) -> CameraImage:
    """Image of the path plane without the cylindrical lens.

    Each path contributes ``rho_ii`` times a unit-integral Gaussian spot of
    intensity radius ``w = M sigma``; coherences do not enter.
    """
    noise = noise or NoiseModel()
    a = _check_rho(rho, g)
    w = cfg.magnification * g.sigma
    gamma = cfg.pixel_pitch_mm
    cu, cv = cfg.center
    pos = (g.points - g.centroid) * cfg.magnification
    half_u, half_v = cu * gamma, cv * gamma
    if np.any(np.abs(pos[:, 0]) + 3 * w > half_u) or np.any(np.abs(pos[:, 1]) + 3 * w > half_v):
        raise FieldOfViewError("field of view: path spots extend past the sensor edge")
    u = (np.arange(cfg.n_x) - cu) * gamma
    v = (np.arange(cfg.n_y) - cv) * gamma
    img = np.zeros((cfg.n_y, cfg.n_x))
    for i in range(g.d):
        pu = gaussian_amplitude(u - pos[i, 0], w) ** 2
        pv = gaussian_amplitude(v - pos[i, 1], w) ** 2
        img += a[i, i].real * np.outer(pv, pu)
    img *= cfg.exposure * gamma * gamma
    img = np.clip(img, 0.0, None)
    rng = np.random.default_rng(seed)
    return CameraImage(apply_noise(img, noise, rng), cfg, None, "lens", seed, noise)


def oft_image(rho, g: PathGeometry, theta: float, cfg: OpticalConfig,
              noise: NoiseModel | None = None, origin_offset: float = 0.0, seed=None,
              mirrored: bool = False) -> CameraImage:
    """Frame behind a cylindrical lens whose OFT axis is at ``theta`` degrees.

    The frame is synthesized in the lens frame (OFT axis along rows), which
    is equivalent to rotating the lens. With camera-plane lens-frame
    positions ``(u_i, v_i)``::

        I(u, k) = E |psi~(k)|^2 sum_ij rho_ij g(u - u_i) g(u - u_j) exp(i (v_i - v_j) k)

    ``origin_offset`` moves the true k = 0 row away from the sensor centre
    and ``mirrored`` flips the k axis; both are hidden from the analysis.
    """
    noise = noise or NoiseModel()
    a = _check_rho(rho, g)
    w = cfg.magnification * g.sigma
    gamma = cfg.pixel_pitch_mm
    cu, cv = cfg.center
    uv = g.lens_frame(theta) * cfg.magnification
    if mirrored:
        uv[:, 1] = -uv[:, 1]
    if np.any(np.abs(uv[:, 0]) + 3 * w > cu * gamma):
        raise FieldOfViewError("field of view: rotated geometry wider than the sensor")
    if (cv - abs(origin_offset)) * cfg.k_step < 4.0 / w:
        raise FieldOfViewError("field of view: momentum envelope truncated by the sensor")
    for i in range(g.d):
        for j in range(i + 1, g.d):
            if abs(uv[i, 0] - uv[j, 0]) < 3 * w:
                dv = abs(uv[i, 1] - uv[j, 1])
                if dv > 0 and cfg.fringe_period_px(dv) < 2.0:
                    raise AliasingError(
                        f"aliasing: paths {i},{j} give a fringe period of "
                        f"{cfg.fringe_period_px(dv):.2f} px at theta={theta}; camera-plane "
                        f"spacing must stay below the Nyquist limit "
                        f"{nyquist_limit(cfg):.3f} mm (see resource_report)"
                    )
    u = (np.arange(cfg.n_x) - cu) * gamma
    k = pixel_to_momentum(np.arange(cfg.n_y), cv + origin_offset, cfg)
    amp = gaussian_amplitude(u[None, :] - uv[:, :1], w)  # (d, N_x)
    ph = np.exp(1j * np.outer(uv[:, 1], k))  # (d, N_y)
    b = ph[:, :, None] * amp[:, None, :]  # (d, N_y, N_x)
    mixed = np.tensordot(a.T, b, axes=1)
    img = np.einsum("iyx,iyx->yx", b.conj(), mixed).real
    img *= momentum_envelope(k, w)[:, None]
    img *= cfg.exposure * gamma * cfg.k_step
    img = np.clip(img, 0.0, None)
    rng = np.random.default_rng(seed)
    return CameraImage(apply_noise(img, noise, rng), cfg, float(theta), "lens", seed, noise,
                       float(origin_offset), bool(mirrored))


def rotate_array(arr: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate image content counter-clockwise by ``angle_deg`` in (column, row)
    coordinates about the array centre, bilinear, zero outside the frame."""
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    mat = np.array([[c, -s], [s, c]])  # output (row, col) -> input (row, col)
    center = (np.array(arr.shape, dtype=float) - 1) / 2.0
    offset = center - mat @ center
    return ndimage.affine_transform(arr, mat, offset=offset, order=1, mode="constant", cval=0.0)


def to_lab_frame(img: CameraImage) -> CameraImage:
    """Express a lens-frame OFT image as the lab camera would record it with
    the lens physically rotated to ``img.theta``."""
    if img.theta is None or img.frame != "lens":
        raise ValueError("to_lab_frame expects a lens-frame OFT image")
    angle = img.theta - 90.0
    return replace(img, intensities=rotate_array(img.intensities, angle), frame="lab",
                   rotation=img.rotation + angle)
