"""Dense matrix helpers and symmetric eigendecomposition.

Everything is computed in float64. The eigen-solver is LAPACK's ``syevd``
through :func:`numpy.linalg.eigh`; this module adds the ordering, validation
and error contracts the rest of the package relies on.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DimMismatch, NonFinite, NonSquare, NotConverged, NotPSD, NotSymmetric

SYMMETRY_TOL = 1e-6
PSD_TOL = 1e-8


class SymmetricEig(NamedTuple):
    """Eigenvalues in descending order and the matching eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def as_matrix(a, name: str = "matrix", check_finite: bool = True) -> np.ndarray:
    """Return ``a`` as a C-contiguous 2-D float64 array."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise DimMismatch(f"{name}: expected a 2-D matrix, got shape {m.shape}")
    if check_finite and not np.isfinite(m).all():
        raise NonFinite(f"{name}: contains NaN or Inf")
    return m


def _check_square(a: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {a.shape}")


def symmetric_eig(a) -> SymmetricEig:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    The input is symmetrized as ``(A + A^T) / 2`` first. Asymmetry larger than
    ``1e-6 * max(1, max|A|)`` is rejected. Ties keep the solver's order.
    """
    a = np.asarray(a, dtype=np.float64)
    _check_square(a)
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    asym = float(np.abs(a - a.T).max(initial=0.0))
    if asym > SYMMETRY_TOL * scale:
        raise NotSymmetric(f"matrix asymmetry {asym:.3e} exceeds tolerance")
    sym = 0.5 * (a + a.T)
    try:
        w, v = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise NotConverged(str(exc)) from exc
    order = np.argsort(-w, kind="stable")
    return SymmetricEig(w[order], np.ascontiguousarray(v[:, order]))


def _psd_eig(a) -> SymmetricEig:
    eig = symmetric_eig(a)
    lam = eig.eigenvalues
    lam_max = float(lam[0]) if lam.size else 0.0
    floor = -PSD_TOL * max(lam_max, 0.0)
    if lam.size and lam[-1] < floor:
        raise NotPSD(f"smallest eigenvalue {lam[-1]:.3e} below {floor:.3e}")
    return eig


def _support(eig: SymmetricEig, rel_tol: float) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    lam = eig.eigenvalues
    if lam.size == 0 or lam[0] <= 0.0:
        return lam[:0], eig.eigenvectors[:, :0]
    keep = lam > rel_tol * lam[0]
    return lam[keep], eig.eigenvectors[:, keep]


def pinv_sqrt(a, rel_tol: float = 1e-10) -> np.ndarray:
    """``V_r diag(lam_r^-1/2) V_r^T`` over eigenvalues above ``rel_tol * lam_max``."""
    lam, v = _support(_psd_eig(a), rel_tol)
    return (v / np.sqrt(lam)) @ v.T


def pinv_psd(a, rel_tol: float = 1e-10) -> np.ndarray:
    """Moore-Penrose inverse of a PSD matrix on its retained eigenspace."""
    lam, v = _support(_psd_eig(a), rel_tol)
    return (v / lam) @ v.T


def sqrt_psd(a, rel_tol: float = 1e-10) -> np.ndarray:
    lam, v = _support(_psd_eig(a), rel_tol)
    return (v * np.sqrt(lam)) @ v.T


def support_projector(a, rel_tol: float = 1e-10) -> np.ndarray:
    _, v = _support(_psd_eig(a), rel_tol)
    return v @ v.T


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def mat_vec(a, x) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or x.ndim != 1 or a.shape[1] != x.shape[0]:
        raise DimMismatch(f"cannot multiply {a.shape} by vector {x.shape}")
    return a @ x


def transpose(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimMismatch(f"expected a 2-D matrix, got shape {a.shape}")
    return np.ascontiguousarray(a.T)


def frobenius_norm(a) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64)))
