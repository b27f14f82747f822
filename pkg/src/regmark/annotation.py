"""Annotation triplets: ellipse-to-covariance conversion and multi-rater fusion."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.special

from .validation import SIGMA_MIN, ValidationError, as_point, check_covariance, floor_covariance

DEFAULT_ALPHA = 0.01

_ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True)
class Annotation:
    """A queried location x, its annotated correspondence y and the annotation covariance."""

    x: np.ndarray
    y: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        x = as_point(self.x)
        y = as_point(self.y, dim=x.shape[0])
        sigma = check_covariance(self.sigma, dim=x.shape[0])
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dimension(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class Ellipse:
    """Confidence ellipse: the true correspondence lies inside with probability 1 - alpha."""

    center: np.ndarray
    axes: np.ndarray  # d orthonormal direction vectors, one per row
    radii: np.ndarray  # semi-axis lengths, pixels
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        center = as_point(self.center)
        d = center.shape[0]
        axes = np.asarray(self.axes, dtype=float)
        radii = np.asarray(self.radii, dtype=float)
        if axes.shape != (d, d):
            raise ValidationError(f"expected {d} axis vectors of dimension {d}")
        if np.abs(axes @ axes.T - np.eye(d)).max() > _ORTHONORMAL_TOL:
            raise ValidationError("ellipse axes must be orthonormal")
        if radii.shape != (d,) or np.any(radii <= 0):
            raise ValidationError("radii must be strictly positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must lie in (0, 1)")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "radii", radii)

    @property
    def dimension(self) -> int:
        return self.center.shape[0]


def gamma_from_alpha(alpha: float, d: int) -> float:
    """Solve F(gamma^2, d) = 1 - alpha where F is the chi-squared(d) CDF.

    Solved by bisection on the regularized lower incomplete gamma function,
    absolute tolerance 1e-10.
    """
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    target = 1.0 - alpha

    def cdf(g2):
        return scipy.special.gammainc(d / 2.0, g2 / 2.0)

    lo, hi = 0.0, 1.0
    while cdf(hi) < target:
        hi *= 2.0
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if cdf(mid) < target:
            lo = mid
        else:
            hi = mid
    return float(np.sqrt(0.5 * (lo + hi)))


def covariance_from_ellipse(e: Ellipse) -> np.ndarray:
    """Covariance V diag((r_i / gamma)^2) V^T of the Gaussian whose (1-alpha) contour is e."""
    gamma = gamma_from_alpha(e.alpha, e.dimension)
    V = e.axes.T  # columns are the axis directions
    diag = (e.radii / gamma) ** 2
    return (V * diag) @ V.T


def ellipse_from_covariance(sigma, center, alpha: float = DEFAULT_ALPHA) -> Ellipse:
    """Inverse of covariance_from_ellipse; axes are eigenvectors, radii gamma * sqrt(eigenvalues)."""
    center = as_point(center)
    S = check_covariance(sigma, dim=center.shape[0])
    gamma = gamma_from_alpha(alpha, center.shape[0])
    w, V = np.linalg.eigh(S)
    w = np.maximum(w, 0.0)
    # descending eigenvalue order so the major axis comes first
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    return Ellipse(center=center, axes=V.T, radii=gamma * np.sqrt(w), alpha=alpha)


def fuse_pointwise(points, sigma_min: float = SIGMA_MIN) -> tuple[np.ndarray, np.ndarray]:
    """Fuse multiple raters' pointwise annotations into (mean, covariance).

    The covariance is the unbiased sample covariance, with every eigenvalue
    floored at sigma_min**2 so degenerate inputs stay usable by the GP.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim != 2 or P.shape[0] < 1:
        raise ValidationError("expected an (M, d) array with M >= 1")
    mean = P.mean(axis=0)
    if P.shape[0] >= 2:
        cov = np.cov(P, rowvar=False, ddof=1)
        cov = np.atleast_2d(cov)
    else:
        cov = np.zeros((P.shape[1], P.shape[1]))
    return mean, floor_covariance(cov, sigma_min)


# --- serialization ---------------------------------------------------------


def _triu_indices(d: int):
    return [(i, j) for i in range(d) for j in range(i, d)]


def _csv_header(d: int) -> list[str]:
    cols = [f"x{i}" for i in range(d)] + [f"y{i}" for i in range(d)]
    cols += [f"sigma{i}{j}" for i, j in _triu_indices(d)]
    return cols


def annotations_to_csv(annotations) -> str:
    """Serialize annotations to CSV; floats use repr so finite doubles round-trip exactly."""
    if not annotations:
        raise ValidationError("cannot serialize an empty annotation list")
    d = annotations[0].dimension
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_csv_header(d))
    for a in annotations:
        row = [repr(float(v)) for v in a.x] + [repr(float(v)) for v in a.y]
        row += [repr(float(a.sigma[i, j])) for i, j in _triu_indices(d)]
        writer.writerow(row)
    return buf.getvalue()


def annotations_from_csv(text: str) -> list[Annotation]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    n_x = sum(1 for c in header if c.startswith("x"))
    d = n_x
    out = []
    for row in reader:
        if not row:
            continue
        vals = [float(v) for v in row]
        x = np.array(vals[:d])
        y = np.array(vals[d : 2 * d])
        sigma = np.zeros((d, d))
        for (i, j), v in zip(_triu_indices(d), vals[2 * d :]):
            sigma[i, j] = sigma[j, i] = v
        out.append(Annotation(x=x, y=y, sigma=sigma))
    return out


def annotations_to_json(annotations) -> str:
    docs = [
        {
            "x": [repr(float(v)) for v in a.x],
            "y": [repr(float(v)) for v in a.y],
            "sigma": [[repr(float(v)) for v in row] for row in a.sigma],
        }
        for a in annotations
    ]
    return json.dumps(docs)


def annotations_from_json(text: str) -> list[Annotation]:
    docs = json.loads(text)
    return [
        Annotation(
            x=np.array([float(v) for v in doc["x"]]),
            y=np.array([float(v) for v in doc["y"]]),
            sigma=np.array([[float(v) for v in row] for row in doc["sigma"]]),
        )
        for doc in docs
    ]
