"""Polarization optics that prepare path states: waveplates, calcite beam
displacers, path blocking and the spinning half-waveplate mixer.

The photon lives in (path slot) x (polarization) space and is carried as a
density matrix there, with joint index ``2 * slot + pol`` (H = 0, V = 1).
Jones matrices use H = (1, 0), V = (0, 1) and

    HWP(t) = [[cos 2t, sin 2t], [sin 2t, -cos 2t]]
    QWP(t) = [[cos^2 t + i sin^2 t, (1 - i) sin t cos t],
              [(1 - i) sin t cos t, sin^2 t + i cos^2 t]]
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyStateError, PathMergeError
from .geometry import LENGTH_TOL_MM, BEAM_WAIST_MM, PathGeometry
from .quantum import DensityMatrix

H, V = 0, 1
_POL = {"H": H, "V": V, H: H, V: V}

SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)


def hwp(angle_deg: float) -> np.ndarray:
    t = 2 * math.radians(angle_deg)
    return np.array([[math.cos(t), math.sin(t)], [math.sin(t), -math.cos(t)]], dtype=complex)


def qwp(angle_deg: float) -> np.ndarray:
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    off = (1 - 1j) * s * c
    return np.array([[c * c + 1j * s * s, off], [off, s * s + 1j * c * c]])


def jones(kind: str, angle_deg: float) -> np.ndarray:
    if kind in ("half", "hwp"):
        return hwp(angle_deg)
    if kind in ("quarter", "qwp"):
        return qwp(angle_deg)
    raise ValueError(f"unknown waveplate kind {kind!r}")


@dataclass(frozen=True)
class PolPathState:
    """Joint path-polarization density matrix.

    ``positions`` holds one (x, y) mm entry per path slot. ``lost`` is the
    total probability removed by blocking and polarizers so far.
    """

    positions: np.ndarray
    rho: np.ndarray
    lost: float = 0.0

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 2)
        r = np.array(self.rho, dtype=complex)
        if r.shape != (2 * len(pos), 2 * len(pos)):
            raise ValueError(f"joint matrix {r.shape} does not match {len(pos)} slots")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "rho", 0.5 * (r + r.conj().T))

    @property
    def n_paths(self) -> int:
        return len(self.positions)

    @property
    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    def path_weights(self) -> np.ndarray:
        return np.einsum("papa->p", self.rho.reshape(self.n_paths, 2, self.n_paths, 2)).real

    def polarization_state(self) -> np.ndarray:
        """2x2 reduced polarization density matrix."""
        return np.einsum("papb->ab", self._blocks())

    def _blocks(self) -> np.ndarray:
        return self.rho.reshape(self.n_paths, 2, self.n_paths, 2)

    def populated(self, tol: float = 1e-12) -> list[int]:
        return [i for i, w in enumerate(self.path_weights()) if w > tol]


def initial_state(polarization="H", position=(0.0, 0.0)) -> PolPathState:
    if isinstance(polarization, str) or isinstance(polarization, int):
        vec = np.zeros(2, dtype=complex)
        vec[_POL[polarization]] = 1.0
    else:
        vec = np.asarray(polarization, dtype=complex)
        vec = vec / np.linalg.norm(vec)
    return PolPathState([position], np.outer(vec, vec.conj()))


def _on_polarization(state: PolPathState, op: np.ndarray) -> np.ndarray:
    return np.kron(np.eye(state.n_paths), op)


def apply_waveplate(state: PolPathState, kind: str, angle: float) -> PolPathState:
    """Apply a half or quarter waveplate to every path."""
    u = _on_polarization(state, jones(kind, angle))
    return replace(state, rho=u @ state.rho @ u.conj().T)


def apply_displacer(state: PolPathState, shift_polarization, shift_vector) -> PolPathState:
    """Calcite displacer: the chosen polarization of every slot moves by
    ``shift_vector`` (mm) into a new slot; the other stays put.

    New slots are created even when they carry no amplitude, so the path
    layout depends only on the optics and not on the waveplate angles.
    """
    pol = _POL[shift_polarization]
    n = state.n_paths
    shifted = state.positions + np.asarray(shift_vector, dtype=float)
    new_pos = np.vstack([state.positions, shifted])
    for a in range(2 * n):
        for b in range(a + 1, 2 * n):
            if np.hypot(*(new_pos[a] - new_pos[b])) <= LENGTH_TOL_MM:
                raise PathMergeError(
                    f"path merge unsupported: displacer moves a path onto {new_pos[b].tolist()}"
                )
    iso = np.zeros((4 * n, 2 * n))
    for s in range(n):
        for p in (H, V):
            dst = n + s if p == pol else s
            iso[2 * dst + p, 2 * s + p] = 1.0
    return PolPathState(new_pos, iso @ state.rho @ iso.T, state.lost)


def block_paths(state: PolPathState, indices) -> PolPathState:
    """Remove slots, renormalize, and add the removed probability to ``lost``."""
    idx = sorted(set(int(i) for i in indices))
    if any(i < 0 or i >= state.n_paths for i in idx):
        raise IndexError(f"blocked indices {idx} out of range for {state.n_paths} paths")
    keep = [i for i in range(state.n_paths) if i not in idx]
    if not keep:
        raise EmptyStateError("empty state: every path is blocked")
    sel = np.array([2 * i + p for i in keep for p in (H, V)])
    sub = state.rho[np.ix_(sel, sel)]
    tr = np.trace(sub).real
    if tr <= 1e-15:
        raise EmptyStateError("empty state: no probability left after blocking")
    lost = 1.0 - (1.0 - state.lost) * tr / state.trace
    return PolPathState(state.positions[keep], sub / tr, lost)


def spin_hwp(state: PolPathState) -> PolPathState:
    """Average over a half-waveplate spinning through all angles.

    HWP(t) = cos 2t Z + sin 2t X, so the uniform average of the conjugation
    is (Z rho Z + X rho X) / 2: the linear Stokes components vanish and the
    circular one changes sign.
    """
    z = _on_polarization(state, SIGMA_Z)
    x = _on_polarization(state, SIGMA_X)
    return replace(state, rho=0.5 * (z @ state.rho @ z + x @ state.rho @ x))


def mix_spinning_hwp(state: PolPathState, tau: float, qwp_angle: float = 45.0) -> PolPathState:
    """HWP(tau), QWP(q), spinning HWP, QWP(q + 90).

    tau = 0 keeps a horizontally polarized input pure; tau = 22.5 leaves the
    polarization maximally mixed.
    """
    s = apply_waveplate(state, "half", tau)
    s = apply_waveplate(s, "quarter", qwp_angle)
    s = spin_hwp(s)
    return apply_waveplate(s, "quarter", qwp_angle + 90.0)


def analyze_polarization(state: PolPathState, angle: float = 45.0) -> PolPathState:
    """Pass every path through a linear polarizer at ``angle`` degrees."""
    t = math.radians(angle)
    e = np.array([math.cos(t), math.sin(t)], dtype=complex)
    proj = _on_polarization(state, np.outer(e, e))
    r = proj @ state.rho @ proj
    tr = np.trace(r).real
    if tr <= 1e-15:
        raise EmptyStateError("empty state: the polarizer blocks all light")
    lost = 1.0 - (1.0 - state.lost) * tr / state.trace
    return PolPathState(state.positions, r / tr, lost)


def trace_polarization(state: PolPathState) -> np.ndarray:
    """Path density matrix: rho_path[i, j] = sum_p rho[(i, p), (j, p)]."""
    return np.einsum("iaja->ij", state._blocks())


# --------------------------------------------------------------------------- presets


@dataclass
class PrepSettings:
    """Waveplate angles (degrees) and displacer shifts (mm).

    ``blocked`` indexes the eight displacer outputs ordered by (y, x); the
    default blocks the x = 4 mm column. ``tau`` inserts the spinning-plate
    mixer at the laser output when not None. ``decoherence`` optionally
    multiplies each coherence rho_ij by a factor in [0, 1].
    """

    phi: float = 22.5
    zeta: float = 45.0
    omega: float = 22.5
    tau: float | None = None
    blocked: tuple[int, ...] | None = None
    dx: float = 2.7
    dy: float = 2.7
    dX: float = 4.0
    zeta_plate: str = "quarter"
    analyzer: float = 45.0
    sigma: float = BEAM_WAIST_MM
    decoherence: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "phi_deg": self.phi,
            "zeta_deg": self.zeta,
            "omega_deg": self.omega,
            "tau_deg": self.tau,
            "blocked": None if self.blocked is None else list(self.blocked),
            "dx_mm": self.dx,
            "dy_mm": self.dy,
            "dX_mm": self.dX,
            "zeta_plate": self.zeta_plate,
            "analyzer_deg": self.analyzer,
            "sigma_mm": self.sigma,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> PrepSettings:
        keys = {
            "phi_deg": "phi", "zeta_deg": "zeta", "omega_deg": "omega", "tau_deg": "tau",
            "blocked": "blocked", "dx_mm": "dx", "dy_mm": "dy", "dX_mm": "dX",
            "zeta_plate": "zeta_plate", "analyzer_deg": "analyzer", "sigma_mm": "sigma",
        }
        unknown = set(obj) - set(keys)
        if unknown:
            raise ValueError(f"unknown prep settings keys: {sorted(unknown)}")
        kw = {keys[k]: v for k, v in obj.items()}
        if kw.get("blocked") is not None:
            kw["blocked"] = tuple(int(i) for i in kw["blocked"])
        return cls(**kw)


def _finish(state: PolPathState, analyzer: float, sigma: float, decoherence, label: str):
    state = analyze_polarization(state, analyzer)
    order = np.lexsort((state.positions[:, 0], state.positions[:, 1]))
    rho = trace_polarization(state)[np.ix_(order, order)]
    if decoherence is not None:
        rho = rho * np.asarray(decoherence, dtype=float)
    geom = PathGeometry(np.round(state.positions[order], 9), sigma, label)
    return DensityMatrix(rho, normalize=True), geom


def _sorted_slots(state: PolPathState) -> PolPathState:
    order = np.lexsort((state.positions[:, 0], state.positions[:, 1]))
    sel = np.array([2 * i + p for i in order for p in (H, V)])
    return PolPathState(state.positions[order], state.rho[np.ix_(sel, sel)], state.lost)


def prepare_paper_state(settings: PrepSettings | None = None):
    """Six-path state from the three-displacer setup.

    Returns ``(DensityMatrix, PathGeometry)`` with paths ordered by (y, x).
    """
    s_ = settings or PrepSettings()
    state = initial_state("H")
    if s_.tau is not None:
        state = mix_spinning_hwp(state, s_.tau)
    state = apply_waveplate(state, "half", s_.phi)
    state = apply_displacer(state, "H", (s_.dx, 0.0))
    state = apply_waveplate(state, s_.zeta_plate, s_.zeta)
    state = apply_displacer(state, "V", (0.0, s_.dy))
    state = apply_waveplate(state, "half", s_.omega)
    state = apply_displacer(state, "H", (s_.dX, 0.0))
    state = _sorted_slots(state)
    blocked = s_.blocked
    if blocked is None:
        blocked = [i for i, (x, _) in enumerate(state.positions) if abs(x - s_.dX) <= LENGTH_TOL_MM]
    state = block_paths(state, blocked)
    label = "grid2x3" if s_.blocked is None else "blocked"
    return _finish(state, s_.analyzer, s_.sigma, s_.decoherence, label)


def prepare_square_state(side: float = 2.7, tau: float | None = 22.5, *,
                         sigma: float = BEAM_WAIST_MM, decoherence=None, analyzer: float = 45.0):
    """Four paths on a square from two displacers, every HWP at 22.5 deg.

    At tau = 22.5 every element magnitude is 0.25 or 0.
    """
    if not side > 0:
        raise ValueError("side must be positive")
    state = initial_state("H")
    if tau is not None:
        state = mix_spinning_hwp(state, tau)
    state = apply_waveplate(state, "half", 22.5)
    state = apply_displacer(state, "H", (side, 0.0))
    state = apply_waveplate(state, "half", 22.5)
    state = apply_displacer(state, "V", (0.0, side))
    return _finish(state, analyzer, sigma, decoherence, "square")


def theory_purity(tau: float) -> float:
    """Purity of the six-path mixed state versus mixer angle: (5 + 4 cos^2 4 tau) / 9."""
    return (5.0 + 4.0 * math.cos(math.radians(4 * tau)) ** 2) / 9.0
