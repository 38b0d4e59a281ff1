"""Density-matrix algebra: purity, fidelity, Hermitization and projection
onto the physical (positive semidefinite) cone."""

from __future__ import annotations

import numpy as np

from .errors import (
    DegenerateStateError,
    InvalidStateError,
    NumericalError,
    UnphysicalStateError,
)

HERMITIAN_ATOL = 1e-9
TRACE_ATOL = 1e-9
PHYSICAL_ATOL = 1e-9


class DensityMatrix:
    """A d x d complex Hermitian matrix with unit trace.

    Positivity is deliberately not enforced: linear reconstructions may
    produce slightly negative eigenvalues. Use :func:`nearest_physical`
    when a physical state is required.

    Construction checks Hermiticity and trace to ``1e-9`` and then makes
    both exact (the matrix is symmetrized and divided by its trace).
    The object behaves like an ndarray through ``__array__``.
    """

    __slots__ = ("_data",)

    def __init__(self, data, *, normalize: bool = False):
        a = np.array(data, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidStateError(f"density matrix must be square, got shape {a.shape}")
        if a.shape[0] < 1:
            raise InvalidStateError("density matrix must have dimension >= 1")
        dev = np.abs(a - a.conj().T)
        if dev.max() > HERMITIAN_ATOL:
            i, j = np.unravel_index(np.argmax(dev), dev.shape)
            raise InvalidStateError(
                f"not Hermitian: rho[{i},{j}]={a[i, j]:.6g} but rho[{j},{i}]={a[j, i]:.6g}"
            )
        a = 0.5 * (a + a.conj().T)
        tr = np.trace(a).real
        if normalize:
            if abs(tr) < 1e-12:
                raise DegenerateStateError("trace is zero; cannot normalize")
        elif abs(tr - 1.0) > TRACE_ATOL:
            raise InvalidStateError(f"trace is {tr:.12g}, expected 1")
        a = a / tr
        a[np.diag_indices_from(a)] = a.diagonal().real
        a.setflags(write=False)
        self._data = a

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def dim(self) -> int:
        return self._data.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._data
        return self._data.astype(dtype)

    def __getitem__(self, idx):
        return self._data[idx]

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim})"

    def magnitude(self) -> np.ndarray:
        return np.abs(self._data)

    def phase(self) -> np.ndarray:
        return np.angle(self._data)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self._data)

    def is_physical(self, atol: float = PHYSICAL_ATOL) -> bool:
        return bool(self.eigenvalues()[0] >= -atol)


def _as_array(rho) -> np.ndarray:
    return np.asarray(rho, dtype=complex)


def purity(rho) -> float:
    """Tr(rho^2), computed as the sum of squared element magnitudes."""
    a = _as_array(rho)
    return float(np.sum(np.abs(a) ** 2))


def _cut(w: np.ndarray, scale: float = 0.0) -> np.ndarray:
    # Eigenvalues below the numerical-rank threshold are round-off; their
    # square roots (~1e-8) would otherwise pollute the fidelity. ``scale``
    # bounds the norm of the factors a product was formed from, which sets
    # the size of its round-off.
    ref = max(np.abs(w).max(initial=0.0), scale, 1e-300)
    tol = 10 * w.size * np.finfo(float).eps * ref
    return np.where(w > tol, w, 0.0)


def _psd_sqrt(a: np.ndarray, name: str) -> np.ndarray:
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition of {name} did not converge") from exc
    if w[0] < -PHYSICAL_ATOL:
        raise UnphysicalStateError(
            f"{name} has eigenvalue {w[0]:.3e} < -{PHYSICAL_ATOL:g}"
        )
    return (v * np.sqrt(_cut(w))) @ v.conj().T


def fidelity(rho, sigma, *, project: bool = False) -> float:
    """Root fidelity Tr sqrt(sqrt(rho) sigma sqrt(rho)).

    Both inputs must be physical. Eigenvalues down to ``-1e-9`` are
    tolerated and clipped; anything more negative raises
    :class:`UnphysicalStateError` unless ``project`` is set, in which case
    the offending input is first replaced by :func:`nearest_physical`.
    """
    a, b = _as_array(rho), _as_array(sigma)
    if a.shape != b.shape:
        raise InvalidStateError(f"shape mismatch {a.shape} vs {b.shape}")
    if project:
        a = np.asarray(nearest_physical(DensityMatrix(a, normalize=True)))
        b = np.asarray(nearest_physical(DensityMatrix(b, normalize=True)))
    ra = _psd_sqrt(0.5 * (a + a.conj().T), "rho")
    _psd_sqrt(0.5 * (b + b.conj().T), "sigma")  # validates sigma
    m = ra @ b @ ra
    m = 0.5 * (m + m.conj().T)
    try:
        w = np.linalg.eigvalsh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("eigendecomposition did not converge") from exc
    scale = np.linalg.norm(a, 2) * np.linalg.norm(b, 2)
    return float(np.sum(np.sqrt(_cut(w, scale))))


def nearest_physical(rho) -> DensityMatrix:
    """Clip negative eigenvalues to zero and renormalize the trace.

    A single pass, so the result is idempotent. Already-physical inputs
    are returned unchanged.
    """
    a = _as_array(rho)
    a = 0.5 * (a + a.conj().T)
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("eigendecomposition did not converge") from exc
    if w[0] >= 0.0:
        return DensityMatrix(a, normalize=True)
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0.0:
        raise DegenerateStateError("spectrum has no positive eigenvalue")
    return DensityMatrix((v * w) @ v.conj().T, normalize=True)


def hermitize(raw) -> DensityMatrix:
    """Return (raw + raw^dagger)/2 scaled to unit trace."""
    a = _as_array(raw)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidStateError(f"expected a square matrix, got shape {a.shape}")
    h = 0.5 * (a + a.conj().T)
    tr = np.trace(h).real
    if abs(tr) < 1e-12:
        raise DegenerateStateError("trace magnitude below 1e-12; unnormalizable")
    return DensityMatrix(h / tr)


def random_state(dim: int, rank: int | None = None, seed=None) -> DensityMatrix:
    """Random density matrix G G^dagger / Tr(G G^dagger) with G a complex
    Gaussian dim x rank matrix drawn from ``numpy.random.default_rng(seed)``."""
    if rank is None:
        rank = dim
    if not 1 <= rank <= dim:
        raise ValueError(f"rank must be in [1, {dim}], got {rank}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    m = g @ g.conj().T
    return DensityMatrix(m, normalize=True)


def pure_state(amplitudes) -> DensityMatrix:
    psi = np.asarray(amplitudes, dtype=complex)
    n = np.vdot(psi, psi).real
    if n <= 0:
        raise DegenerateStateError("zero state vector")
    return DensityMatrix(np.outer(psi, psi.conj()) / n)


def maximally_mixed(dim: int) -> DensityMatrix:
    return DensityMatrix(np.eye(dim) / dim)


def psd_violation(rho) -> float:
    """Largest excess of |rho_ij| over sqrt(rho_ii rho_jj), zero if none."""
    a = _as_array(rho)
    diag = np.clip(a.diagonal().real, 0.0, None)
    bound = np.sqrt(np.outer(diag, diag))
    excess = np.abs(a) - bound
    np.fill_diagonal(excess, 0.0)
    return float(max(excess.max(initial=0.0), 0.0))
