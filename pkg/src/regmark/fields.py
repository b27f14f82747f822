"""Dense transformations sampled on a grid, with multilinear interpolation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage

from .validation import ValidationError, as_points


@dataclass(frozen=True)
class GridGeometry:
    """Axis-aligned sampling grid: world point = origin + index * spacing."""

    shape: tuple[int, ...]
    spacing: tuple[float, ...] = None
    origin: tuple[float, ...] = None

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        d = len(shape)
        spacing = tuple(float(s) for s in (self.spacing if self.spacing is not None else (1.0,) * d))
        origin = tuple(float(o) for o in (self.origin if self.origin is not None else (0.0,) * d))
        if len(spacing) != d or len(origin) != d:
            raise ValidationError("shape, spacing and origin must share dimension")
        if any(s <= 0 for s in spacing) or any(n < 2 for n in shape):
            raise ValidationError("spacing must be positive and shape at least 2 per axis")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dimension(self) -> int:
        return len(self.shape)

    def node_points(self) -> np.ndarray:
        """All grid node coordinates, shape (prod(shape), d)."""
        axes = [self.origin[i] + self.spacing[i] * np.arange(self.shape[i]) for i in range(self.dimension)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def to_index(self, points: np.ndarray) -> np.ndarray:
        """Continuous grid indices of world points."""
        P = as_points(points, self.dimension)
        return (P - np.array(self.origin)) / np.array(self.spacing)

    def strided(self, stride: int) -> "GridGeometry":
        """Coarser grid visiting every stride-th node along each axis."""
        shape = tuple(max(2, (n + stride - 1) // stride) for n in self.shape)
        spacing = tuple(s * stride for s in self.spacing)
        return GridGeometry(shape=shape, spacing=spacing, origin=self.origin)

    def to_dict(self) -> dict:
        return {"shape": list(self.shape), "spacing": list(self.spacing), "origin": list(self.origin)}

    @classmethod
    def from_dict(cls, doc: dict) -> "GridGeometry":
        return cls(shape=tuple(doc["shape"]), spacing=tuple(doc["spacing"]), origin=tuple(doc["origin"]))


class TransformField:
    """Candidate transformation phi(x) = x + displacement(x) on a sampling grid.

    The displacement is stored per grid node (trailing axis of length d) and
    evaluated anywhere via multilinear interpolation with edge clamping.
    """

    def __init__(self, geometry: GridGeometry, displacement: np.ndarray):
        displacement = np.asarray(displacement, dtype=float)
        expected = geometry.shape + (geometry.dimension,)
        if displacement.shape != expected:
            raise ValidationError(f"displacement must have shape {expected}, got {displacement.shape}")
        if not np.all(np.isfinite(displacement)):
            raise ValidationError("displacement contains non-finite values")
        self.geometry = geometry
        self.displacement = displacement

    @classmethod
    def identity(cls, geometry: GridGeometry) -> "TransformField":
        return cls(geometry, np.zeros(geometry.shape + (geometry.dimension,)))

    @property
    def dimension(self) -> int:
        return self.geometry.dimension

    def displacement_at(self, points) -> np.ndarray:
        """Interpolated displacement at arbitrary points, shape (M, d)."""
        idx = self.geometry.to_index(points).T  # (d, M)
        out = np.stack(
            [
                scipy.ndimage.map_coordinates(self.displacement[..., c], idx, order=1, mode="nearest")
                for c in range(self.dimension)
            ],
            axis=1,
        )
        return out

    def __call__(self, points) -> np.ndarray:
        P = as_points(points, self.dimension)
        return P + self.displacement_at(P)

    def compose(self, inner: "TransformField") -> "TransformField":
        """self o inner, resampled on self's grid: x -> self(inner(x))."""
        nodes = self.geometry.node_points()
        warped = self(inner(nodes))
        disp = (warped - nodes).reshape(self.geometry.shape + (self.dimension,))
        return TransformField(self.geometry, disp)

    def jacobian_determinants(self) -> np.ndarray:
        """Central-difference Jacobian determinant of phi at every grid node."""
        d = self.dimension
        grads = np.empty(self.geometry.shape + (d, d))
        for c in range(d):
            g = np.gradient(self.displacement[..., c], *self.geometry.spacing)
            for ax in range(d):
                grads[..., c, ax] = g[ax] if d > 1 else g
            grads[..., c, c] += 1.0
        return np.linalg.det(grads)

    # --- persistence: raw little-endian float32 + JSON header -----------------

    def save(self, path_base: str) -> None:
        """Write <base>.raw (little-endian float32) and <base>.json header."""
        header = {
            **self.geometry.to_dict(),
            "dtype": "<f4",
            "components": self.dimension,
        }
        self.displacement.astype("<f4").tofile(path_base + ".raw")
        with open(path_base + ".json", "w") as f:
            json.dump(header, f)

    @classmethod
    def load(cls, path_base: str) -> "TransformField":
        with open(path_base + ".json") as f:
            header = json.load(f)
        geometry = GridGeometry.from_dict(header)
        data = np.fromfile(path_base + ".raw", dtype=header["dtype"]).astype(float)
        disp = data.reshape(geometry.shape + (geometry.dimension,))
        return cls(geometry, disp)
