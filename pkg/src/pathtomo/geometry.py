"""Path geometries: segment tables, lens angles, validity checks, Golomb
rulers, measurement planning and resource accounting.

Coordinates are millimetres in the object (path) plane; angles are degrees
measured from the +x axis and reduced to [0, 180).

For a lens angle ``theta`` the Fourier-transform axis points along
``a = (cos theta, sin theta)``. Positions are expressed in the lens frame
``u = P.b`` (untransformed camera axis) and ``v = P.a`` (transformed axis)
with ``b = (sin theta, -cos theta)``, both relative to the geometry
centroid. At ``theta = 90`` the lens frame coincides with the lab frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConstructionUndefinedError, GeometryError

if TYPE_CHECKING:
    from .optics import OpticalConfig

LENGTH_TOL_MM = 1e-3
ANGLE_TOL_DEG = 1e-9
BEAM_WAIST_MM = 0.34


@dataclass(frozen=True)
class PathGeometry:
    """Centres of ``d`` identical Gaussian paths plus their common width."""

    points: np.ndarray
    sigma: float = BEAM_WAIST_MM
    label: str = ""

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        if len(pts) < 1:
            raise GeometryError("geometry needs at least one path")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("path positions must be finite")
        if not self.sigma > 0:
            raise GeometryError(f"sigma must be positive, got {self.sigma}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if math.hypot(*(pts[j] - pts[i])) <= LENGTH_TOL_MM:
                    raise GeometryError(f"paths {i} and {j} coincide")

    def overlapping_pairs(self, factor: float = 4.0) -> list[tuple[int, int]]:
        """Pairs closer than ``factor * sigma`` (not well separated)."""
        out = []
        for i in range(self.d):
            for j in range(i + 1, self.d):
                if math.hypot(*(self.points[j] - self.points[i])) <= factor * self.sigma:
                    out.append((i, j))
        return out

    @property
    def d(self) -> int:
        return len(self.points)

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def rotated(self, angle_deg: float, about=None) -> PathGeometry:
        """Rigidly rotate the geometry counter-clockwise about ``about``
        (default: the centroid)."""
        c = self.centroid if about is None else np.asarray(about, dtype=float)
        t = math.radians(angle_deg)
        r = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
        return PathGeometry((self.points - c) @ r.T + c, self.sigma, self.label)

    def lens_frame(self, theta_deg: float) -> np.ndarray:
        """(d, 2) array of centroid-relative (u, v) positions for lens angle theta."""
        t = math.radians(theta_deg)
        a = np.array([math.cos(t), math.sin(t)])
        b = np.array([math.sin(t), -math.cos(t)])
        rel = self.points - self.centroid
        return np.column_stack([rel @ b, rel @ a])

    def to_dict(self) -> dict:
        return {
            "points_mm": [[float(x), float(y)] for x, y in self.points],
            "sigma_mm": float(self.sigma),
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> PathGeometry:
        try:
            return cls(obj["points_mm"], float(obj["sigma_mm"]), str(obj.get("label", "")))
        except KeyError as exc:
            raise GeometryError(f"geometry JSON missing key {exc}") from None


def grid_geometry(xs, ys, sigma: float = BEAM_WAIST_MM, label: str = "") -> PathGeometry:
    """Rectangular grid, ordered row by row (y, then x)."""
    pts = [(x, y) for y in ys for x in xs]
    return PathGeometry(pts, sigma, label)


def grid_2x3(sigma: float = BEAM_WAIST_MM) -> PathGeometry:
    """The six-path 2x3 grid left after blocking the x = 4 mm column."""
    return grid_geometry([0.0, 2.7, 6.7], [0.0, 2.7], sigma, "grid2x3")


def eight_path_geometry(sigma: float = BEAM_WAIST_MM) -> PathGeometry:
    """All eight paths produced by the three displacers (invalid for tomography)."""
    return grid_geometry([0.0, 2.7, 4.0, 6.7], [0.0, 2.7], sigma, "eight_path")


def square_geometry(side: float = 2.7, sigma: float = BEAM_WAIST_MM) -> PathGeometry:
    return grid_geometry([0.0, side], [0.0, side], sigma, "square")


def ruler_geometry(positions, axis: str = "y", sigma: float = BEAM_WAIST_MM) -> PathGeometry:
    pos = np.asarray(positions, dtype=float)
    zeros = np.zeros_like(pos)
    pts = np.column_stack([zeros, pos] if axis == "y" else [pos, zeros])
    return PathGeometry(pts, sigma, f"ruler_{axis}")


# --------------------------------------------------------------------------- segments


@dataclass(frozen=True)
class Segment:
    i: int
    j: int
    dx: float  # x_j - x_i
    dy: float  # y_j - y_i
    length: float
    angle: float  # degrees in [0, 180)
    offset: float  # signed distance of the supporting line from the origin

    @property
    def line_id(self) -> str:
        return f"{self.angle:.9f}deg@{self.offset:+.6f}mm"


def _reduce_angle(deg: float) -> float:
    a = math.fmod(deg, 180.0)
    if a < 0:
        a += 180.0
    if 180.0 - a < ANGLE_TOL_DEG:
        a = 0.0
    return a


def _angle_close(a: float, b: float, tol: float = ANGLE_TOL_DEG) -> bool:
    diff = abs(a - b) % 180.0
    return min(diff, 180.0 - diff) <= tol


def segment_table(g: PathGeometry) -> list[Segment]:
    """All d(d-1)/2 segments, ordered by i then j."""
    segs = []
    p = g.points
    for i in range(g.d):
        for j in range(i + 1, g.d):
            dx, dy = p[j] - p[i]
            ang = _reduce_angle(math.degrees(math.atan2(dy, dx)))
            t = math.radians(ang)
            offset = -math.sin(t) * p[i, 0] + math.cos(t) * p[i, 1]
            segs.append(Segment(i, j, float(dx), float(dy), math.hypot(dx, dy), ang, offset))
    return segs


def angle_set(g: PathGeometry) -> list[float]:
    """Distinct segment angles (degrees, sorted) merged within 1e-9 deg."""
    out: list[float] = []
    for a in sorted(s.angle for s in segment_table(g)):
        if not any(_angle_close(a, b) for b in out):
            out.append(a)
    return out


def _lens_groups(g: PathGeometry, theta: float) -> list[list[int]]:
    """Paths joined by segments at angle theta, ordered by lens-frame u.

    Membership follows the segment angles (1e-9 deg) rather than u-proximity
    so that two nearly parallel segments are never both read at one angle.
    """
    parent = list(range(g.d))

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for s in segment_table(g):
        if _angle_close(s.angle, theta):
            parent[root(s.i)] = root(s.j)
    groups: dict[int, list[int]] = {}
    for i in range(g.d):
        groups.setdefault(root(i), []).append(i)
    u = g.lens_frame(theta)[:, 0]
    return sorted(groups.values(), key=lambda m: (float(np.mean(u[m])), m[0]))


# --------------------------------------------------------------------------- validity


@dataclass
class ValidityReport:
    valid: bool
    collisions: list[tuple[Segment, Segment]]
    lone_angles: dict[int, list[float]]
    overlaps: list[tuple[int, int]] = field(default_factory=list)

    @property
    def diagonals_need_direct(self) -> bool:
        return any(not v for v in self.lone_angles.values())

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "collisions": [
                {
                    "first": [a.i, a.j],
                    "second": [b.i, b.j],
                    "line_id": a.line_id,
                    "length_mm": a.length,
                }
                for a, b in self.collisions
            ],
            "lone_angles_deg": {str(k): v for k, v in self.lone_angles.items()},
            "direct_image_required_for_diagonals": self.diagonals_need_direct,
            "overlapping_pairs": [list(p) for p in self.overlaps],
        }

    def to_text(self) -> str:
        lines = [f"geometry: {'PASS' if self.valid else 'FAIL'}"]
        for a, b in self.collisions:
            lines.append(
                f"  collision: segment ({a.i},{a.j}) and ({b.i},{b.j}) share line "
                f"{a.line_id} with length {a.length:.4f} mm"
            )
        for i, j in self.overlaps:
            lines.append(f"  warning: paths {i} and {j} are closer than 4 sigma")
        missing = [k for k, v in self.lone_angles.items() if not v]
        if missing:
            lines.append(
                "  paths never alone on a lens line (direct image mandatory): "
                + ", ".join(map(str, missing))
            )
        else:
            lines.append("  every path is alone on its line at some lens angle")
        return "\n".join(lines)


def validate_geometry(g: PathGeometry) -> ValidityReport:
    """Check that no two segments lie on the same line with the same length.

    Also records, for every path, the lens angles at which it is the only
    path on its line (so its diagonal element reads out at zero frequency).
    """
    segs = segment_table(g)
    collisions = []
    for a_idx, a in enumerate(segs):
        for b in segs[a_idx + 1 :]:
            if (
                _angle_close(a.angle, b.angle)
                and abs(a.offset - b.offset) <= LENGTH_TOL_MM
                and abs(a.length - b.length) <= LENGTH_TOL_MM
            ):
                collisions.append((a, b))
    lone: dict[int, list[float]] = {i: [] for i in range(g.d)}
    if g.d > 1:
        for theta in angle_set(g):
            for grp in _lens_groups(g, theta):
                if len(grp) == 1:
                    lone[grp[0]].append(theta)
    return ValidityReport(not collisions, collisions, lone, g.overlapping_pairs())


# --------------------------------------------------------------------------- rulers


def _is_odd_prime(n: int) -> bool:
    if n < 3 or n % 2 == 0:
        return False
    return all(n % k for k in range(3, int(math.isqrt(n)) + 1, 2))


def golomb_ruler(d: int, l_min: float = 1.0) -> np.ndarray:
    """Erdos-Turan ruler x_(i+1) = l_min (2 d i + (i^2 mod d)), i = 0..d-1.

    All pairwise differences are distinct and the span is
    ``l_min * (2 d (d - 1) + 1)``. Only defined for odd primes ``d``.
    """
    if int(d) != d or not _is_odd_prime(int(d)):
        raise ConstructionUndefinedError(f"construction undefined: d={d} is not an odd prime")
    d = int(d)
    i = np.arange(d)
    return l_min * (2 * d * i + (i * i) % d).astype(float)


def is_nonredundant_rectangle(g: PathGeometry) -> bool:
    """True if every segment vector (up to sign) is unique within 1 um."""
    vecs = []
    for s in segment_table(g):
        v = np.array([s.dx, s.dy])
        if v[0] < -LENGTH_TOL_MM or (abs(v[0]) <= LENGTH_TOL_MM and v[1] < 0):
            v = -v
        vecs.append(v)
    for a in range(len(vecs)):
        for b in range(a + 1, len(vecs)):
            if np.all(np.abs(vecs[a] - vecs[b]) <= LENGTH_TOL_MM):
                return False
    return True


# --------------------------------------------------------------------------- planning


@dataclass(frozen=True)
class PairEntry:
    """Off-diagonal readout: the peak at spacing ``length`` (object-plane mm)
    carries rho[i, j] (or its conjugate when ``conjugate`` is set)."""

    i: int
    j: int
    length: float
    conjugate: bool


@dataclass(frozen=True)
class Group:
    x_m: float  # lens-frame u coordinate, object-plane mm
    members: tuple[int, ...]
    pairs: tuple[PairEntry, ...]

    @property
    def lone(self) -> int | None:
        return self.members[0] if len(self.members) == 1 else None


@dataclass(frozen=True)
class AnglePlan:
    theta: float
    groups: tuple[Group, ...]


@dataclass
class MeasurementPlan:
    geometry: PathGeometry
    angles: list[AnglePlan]
    direct: tuple[int, ...] = field(default_factory=tuple)

    @property
    def thetas(self) -> list[float]:
        return [a.theta for a in self.angles]

    def angle(self, theta: float) -> AnglePlan:
        for a in self.angles:
            if _angle_close(a.theta, theta, 1e-6):
                return a
        raise KeyError(f"no plan entry for theta={theta}")

    @property
    def pair_count(self) -> int:
        return sum(len(grp.pairs) for a in self.angles for grp in a.groups)

    def covered_pairs(self) -> list[tuple[int, int]]:
        return sorted((p.i, p.j) for a in self.angles for grp in a.groups for p in grp.pairs)

    def to_dict(self) -> dict:
        return {
            "geometry": self.geometry.to_dict(),
            "direct_image_paths": list(self.direct),
            "angles": [
                {
                    "theta_deg": a.theta,
                    "groups": [
                        {
                            "x_m_mm": grp.x_m,
                            "members": list(grp.members),
                            "pairs": [
                                {"i": p.i, "j": p.j, "length_mm": p.length, "conjugate": p.conjugate}
                                for p in grp.pairs
                            ],
                        }
                        for grp in a.groups
                    ],
                }
                for a in self.angles
            ],
        }


def plan_measurements(g: PathGeometry) -> MeasurementPlan:
    """Per lens angle, group paths sharing a lens-frame u coordinate.

    Groups with several members yield off-diagonal (Case 1) readouts for
    each member pair; singleton groups yield a diagonal (Case 2) readout.
    Every unordered pair appears exactly once, at its own segment angle.
    """
    report = validate_geometry(g)
    if not report.valid:
        a, b = report.collisions[0]
        raise GeometryError(
            f"invalid geometry: segments ({a.i},{a.j}) and ({b.i},{b.j}) are collinear "
            f"with equal length ({len(report.collisions)} collision(s) total)"
        )
    angles = []
    for theta in angle_set(g) if g.d > 1 else []:
        uv = g.lens_frame(theta)
        groups = []
        for members in _lens_groups(g, theta):
            members = sorted(members)
            pairs = []
            for ai, i in enumerate(members):
                for j in members[ai + 1 :]:
                    dv = uv[i, 1] - uv[j, 1]
                    pairs.append(PairEntry(i, j, float(abs(dv)), bool(dv < 0)))
            lengths = sorted(p.length for p in pairs)
            if any(b - a <= LENGTH_TOL_MM for a, b in zip(lengths, lengths[1:])):
                raise GeometryError(f"repeated spacing in one lens line at theta={theta}")
            x_m = float(np.mean(uv[members, 0]))
            groups.append(Group(x_m, tuple(members), tuple(pairs)))
        angles.append(AnglePlan(theta, tuple(groups)))
    return MeasurementPlan(g, angles, tuple(range(g.d)))


# --------------------------------------------------------------------------- resources


@dataclass
class ResourceReport:
    d: int
    eta: int
    eta_max: int
    l_min: float  # camera plane, mm
    l_max: float  # camera plane, mm
    nyquist_limit: float  # mm
    nyquist_ok: bool
    required_pixels: float
    pixels_available: int
    pixels_ok: bool
    aperture_ok: bool
    d_max: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def to_text(self) -> str:
        return "\n".join(
            [
                f"paths d               : {self.d}",
                f"lens settings eta     : {self.eta} (bound d(d-1)/2 = {self.eta_max})",
                f"L_min at camera       : {self.l_min:.4f} mm",
                f"L_max at camera       : {self.l_max:.4f} mm",
                f"Nyquist limit         : {self.nyquist_limit:.4f} mm "
                f"({'ok' if self.nyquist_ok else 'VIOLATED'})",
                f"pixels needed N       : > {self.required_pixels:.2f} "
                f"(have {self.pixels_available}, {'ok' if self.pixels_ok else 'too few'})",
                f"aperture              : {'ok' if self.aperture_ok else 'L_max exceeds lens aperture'}",
                f"d_max estimate        : {self.d_max:.1f}",
            ]
        )


def nyquist_limit(cfg: OpticalConfig) -> float:
    """Largest camera-plane spacing lambda f / (pi gamma), in mm."""
    return cfg.wavelength_mm * cfg.oft_focal_mm / (math.pi * cfg.pixel_pitch_mm)


def resource_report(g: PathGeometry, cfg: OpticalConfig) -> ResourceReport:
    segs = segment_table(g)
    if not segs:
        raise GeometryError("resource report needs at least two paths")
    lengths = np.array([s.length for s in segs]) * cfg.magnification
    l_min, l_max = float(lengths.min()), float(lengths.max())
    limit = nyquist_limit(cfg)
    required = l_max / l_min
    available = int(max(cfg.resolution))
    return ResourceReport(
        d=g.d,
        eta=len(angle_set(g)),
        eta_max=g.d * (g.d - 1) // 2,
        l_min=l_min,
        l_max=l_max,
        nyquist_limit=limit,
        nyquist_ok=l_max < limit,
        required_pixels=required,
        pixels_available=available,
        pixels_ok=available > required,
        aperture_ok=l_max < cfg.lens_aperture_mm,
        d_max=limit / l_min,
    )
