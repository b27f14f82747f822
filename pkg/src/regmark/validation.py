"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np

SYMMETRY_TOL = 1e-12

# Variance floor (pixels) applied to every covariance entering the GP.
SIGMA_MIN = 0.25


class ValidationError(ValueError):
    """Raised when an input fails a structural precondition."""


def as_point(x, dim: int | None = None) -> np.ndarray:
    """Coerce to a 1-D float point, optionally checking its dimension."""
    p = np.asarray(x, dtype=float)
    if p.ndim != 1:
        raise ValidationError(f"expected a 1-D point, got shape {p.shape}")
    if dim is not None and p.shape[0] != dim:
        raise ValidationError(f"point has dimension {p.shape[0]}, expected {dim}")
    return p


def as_points(X, dim: int | None = None) -> np.ndarray:
    """Coerce to an (N, d) float array of points."""
    P = np.asarray(X, dtype=float)
    if P.ndim == 1:
        P = P[None, :]
    if P.ndim != 2:
        raise ValidationError(f"expected an (N, d) array of points, got shape {P.shape}")
    if dim is not None and P.shape[1] != dim:
        raise ValidationError(f"points have dimension {P.shape[1]}, expected {dim}")
    return P


def check_covariance(sigma, dim: int | None = None, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Validate a symmetric PSD covariance matrix and return it as float array."""
    S = np.asarray(sigma, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError(f"covariance must be square, got shape {S.shape}")
    if dim is not None and S.shape[0] != dim:
        raise ValidationError(f"covariance has dimension {S.shape[0]}, expected {dim}")
    scale = max(1.0, float(np.abs(S).max()))
    if np.abs(S - S.T).max() > tol * scale:
        raise ValidationError("covariance is not symmetric")
    eigvals = np.linalg.eigvalsh(0.5 * (S + S.T))
    if eigvals.min() < -tol * max(1.0, abs(eigvals.max())):
        raise ValidationError("covariance is not positive semidefinite")
    return 0.5 * (S + S.T)


def floor_covariance(sigma: np.ndarray, sigma_min: float = SIGMA_MIN) -> np.ndarray:
    """Clip every eigenvalue of a symmetric covariance to at least sigma_min**2."""
    S = 0.5 * (np.asarray(sigma, dtype=float) + np.asarray(sigma, dtype=float).T)
    w, V = np.linalg.eigh(S)
    w = np.maximum(w, sigma_min**2)
    return (V * w) @ V.T
