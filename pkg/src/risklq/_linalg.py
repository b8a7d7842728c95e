"""Small linear-algebra helpers used throughout the solvers."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh

from .errors import NotSolvable, SingularInnovation

# Relative eigenvalue tolerances for definiteness tests.
PSD_TOL = 1e-9
PD_TOL = 1e-9


def sym(M: np.ndarray) -> np.ndarray:
    """Symmetrize, killing round-off drift from products."""
    return (M + M.T) / 2.0


def is_psd(M: np.ndarray) -> tuple[bool, float]:
    """Test positive semi-definiteness. Returns (verdict, smallest eigenvalue)."""
    w = np.linalg.eigvalsh(sym(M))
    lo, hi = float(w[0]), float(w[-1])
    return lo >= -PSD_TOL * (1.0 + max(hi, 0.0)), lo


def is_pd(M: np.ndarray) -> tuple[bool, float]:
    """Test strict positive definiteness. Returns (verdict, smallest eigenvalue)."""
    w = np.linalg.eigvalsh(sym(M))
    lo, hi = float(w[0]), float(w[-1])
    return lo > PD_TOL * (1.0 + max(hi, 0.0)), lo


def spd_solve(M: np.ndarray, rhs: np.ndarray, k: int, name: str) -> np.ndarray:
    """Solve M @ x = rhs for symmetric positive definite M.

    Cholesky failure means the matrix is not PD, i.e. the solvability
    condition fails and no unique optimal policy exists; there is
    deliberately no pseudo-inverse fallback here.
    """
    try:
        c = cho_factor(sym(M), lower=True)
    except np.linalg.LinAlgError:
        raise NotSolvable(k, name) from None
    return cho_solve(c, rhs)


def psd_pinv(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Pseudo-inverse of a symmetric PSD matrix via its eigendecomposition.

    Zero eigenvalues (within tolerance) are treated as exactly-degenerate
    directions and inverted to zero. An indefinite or non-finite input is an
    error because it cannot be a covariance.
    """
    M = sym(M)
    if not np.all(np.isfinite(M)):
        raise SingularInnovation(f"{name} contains non-finite entries")
    w, V = eigh(M)
    hi = max(float(w[-1]), 0.0)
    cut = PSD_TOL * (1.0 + hi)
    if w[0] < -cut:
        raise SingularInnovation(f"{name} is indefinite (min eigenvalue {w[0]:.3e})")
    inv_w = np.where(w > cut, 1.0 / np.where(w > cut, w, 1.0), 0.0)
    return (V * inv_w) @ V.T


def psd_factor(M: np.ndarray, name: str = "covariance") -> np.ndarray:
    """Symmetric PSD square root, used to color unit-variance noise draws."""
    M = sym(M)
    w, V = eigh(M)
    hi = max(float(w[-1]), 0.0)
    if w[0] < -PSD_TOL * (1.0 + hi):
        raise SingularInnovation(f"{name} is indefinite (min eigenvalue {w[0]:.3e})")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def spectral_radius(M: np.ndarray) -> float:
    """Largest eigenvalue magnitude (complex spectrum allowed)."""
    return float(np.max(np.abs(np.linalg.eigvals(M))))
