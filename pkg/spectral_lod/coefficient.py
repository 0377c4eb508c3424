"""Piecewise-constant diffusion coefficients and source terms on the fine mesh."""
from __future__ import annotations
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from spectral_lod.mesh import MeshHierarchy
from spectral_lod.utils import raster

__all__ = [
    "CoefficientField",
    "constant_field",
    "four_channels",
    "from_raster",
    "irregular_channels",
    "write_raster",
    "right_half_source",
    "constant_source",
    "source_from_raster",
]

CHANNEL_GRID = 32


@dataclass(frozen=True)
class CoefficientField:
    """Positive coefficient value per fine element, row-major (bottom row first)."""

    values: np.ndarray
    fine_divisions: int

    def __post_init__(self) -> None:
        """Validate shape and positivity."""
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.shape != (self.fine_divisions**2,):
            raise ValueError(
                f"Expected {self.fine_divisions ** 2} coefficient values, got shape {values.shape}"
            )
        if not np.all(values > 0):
            raise ValueError("Coefficient values must be strictly positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def beta(self) -> float:
        """Largest coefficient value."""
        return float(self.values.max())

    @property
    def kappa_min(self) -> float:
        """Smallest coefficient value."""
        return float(self.values.min())

    @property
    def grid(self) -> np.ndarray:
        """Values as an (N, N) array indexed [row from bottom, column]."""
        return self.values.reshape(self.fine_divisions, self.fine_divisions)

    def scaled(self, factor: float) -> "CoefficientField":
        """Return a copy with every value multiplied by `factor`."""
        return CoefficientField(self.values * factor, self.fine_divisions)

    def check_mesh(self, hierarchy: MeshHierarchy) -> None:
        """Raise ValueError unless the field lives on the hierarchy's fine mesh."""
        if self.fine_divisions != hierarchy.fine_divisions:
            raise ValueError(
                f"Coefficient has {self.fine_divisions} cells per side, "
                f"mesh has {hierarchy.fine_divisions}"
            )

    @classmethod
    def from_raster(
        cls, hierarchy: MeshHierarchy, path: Union[str, Path], beta: float
    ) -> "CoefficientField":
        """Instantiate from a 0/1 mask: beta where set, 1 elsewhere."""
        return from_raster(hierarchy, path, beta)


def constant_field(hierarchy: MeshHierarchy, value: float) -> CoefficientField:
    """Coefficient equal to `value` on every fine element."""
    if value <= 0:
        raise ValueError(f"Constant coefficient must be positive, got {value}")
    values = np.full(hierarchy.n_fine_elements, float(value))
    return CoefficientField(values, hierarchy.fine_divisions)


def _channel_profile(x1: np.ndarray, x2: np.ndarray, beta: float) -> np.ndarray:
    grid = CHANNEL_GRID
    in_x = ((x1 >= 8 / grid) & (x1 <= 9 / grid)) | ((x1 >= 10 / grid) & (x1 <= 11 / grid))
    in_y = (x2 >= 1 / grid) & (x2 <= 31 / grid)
    return np.where(in_x & in_y, beta / 2.0, 1.0)


def four_channels(hierarchy: MeshHierarchy, beta: float) -> CoefficientField:
    """Two horizontal and two vertical channels: kappa = A(x1, x2) + A(x2, x1)."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if hierarchy.fine_divisions % CHANNEL_GRID:
        raise ValueError(
            f"Fine mesh with {hierarchy.fine_divisions} cells per side does not resolve "
            f"the 1/{CHANNEL_GRID} channel breakpoints"
        )
    x1, x2 = hierarchy.fine_element_centers()
    values = _channel_profile(x1, x2, beta) + _channel_profile(x2, x1, beta)
    return CoefficientField(values, hierarchy.fine_divisions)


def _field_from_mask(
    hierarchy: MeshHierarchy, mask: np.ndarray, high: float, low: float = 1.0
) -> np.ndarray:
    size = hierarchy.fine_divisions
    if mask.shape != (size, size):
        raise ValueError(f"Raster has shape {mask.shape}, fine element grid is {(size, size)}")
    # raster row 0 is the top of the domain
    return np.where(np.flipud(mask).ravel(), float(high), float(low))


def from_raster(hierarchy: MeshHierarchy, path: Union[str, Path], beta: float) -> CoefficientField:
    """Coefficient equal to beta where the mask is set and 1 elsewhere."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    mask = raster.read_mask(path)
    return CoefficientField(_field_from_mask(hierarchy, mask, beta), hierarchy.fine_divisions)


def write_raster(field: CoefficientField, path: Union[str, Path]) -> Path:
    """Write the set {kappa != 1} of a two-valued field as a mask (inverse of from_raster)."""
    levels = np.unique(field.values)
    if levels.size > 2 or (levels.size == 2 and 1.0 not in levels):
        raise ValueError("Only fields with values in {1, beta} can be written as a mask")
    mask = np.flipud(field.grid != 1.0)
    return raster.write_mask(mask, path)


def irregular_channels(
    hierarchy: MeshHierarchy,
    beta: float,
    seed: int = 0,
    n_channels: int = 6,
    n_inclusions: int = 12,
) -> CoefficientField:
    """Procedurally generated mask of meandering channels and small inclusions."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    size = hierarchy.fine_divisions
    rng = np.random.default_rng(seed)
    mask = np.zeros((size, size), dtype=bool)
    margin = max(1, size // 32)
    for _ in range(n_channels):
        horizontal = bool(rng.integers(2))
        row = int(rng.integers(margin, size - margin))
        for col in range(margin, size - margin):
            row = int(np.clip(row + rng.integers(-1, 2), margin, size - margin - 1))
            if horizontal:
                mask[row, col] = True
            else:
                mask[col, row] = True
    for _ in range(n_inclusions):
        width, height = rng.integers(1, max(2, size // 16), size=2)
        row, col = rng.integers(margin, size - margin - max(width, height), size=2)
        mask[row : row + height, col : col + width] = True
    return CoefficientField(_field_from_mask(hierarchy, mask, beta), size)


def right_half_source(hierarchy: MeshHierarchy) -> np.ndarray:
    """Source 0 for x1 < 1/2 and 1 otherwise, per fine element."""
    x1, _ = hierarchy.fine_element_centers()
    return np.where(x1 < 0.5, 0.0, 1.0)


def constant_source(hierarchy: MeshHierarchy, value: float = 1.0) -> np.ndarray:
    """Constant source per fine element."""
    return np.full(hierarchy.n_fine_elements, float(value))


def source_from_raster(
    hierarchy: MeshHierarchy, path: Union[str, Path], value: float = 1.0
) -> np.ndarray:
    """Source equal to `value` where the mask is set and 0 elsewhere."""
    mask = raster.read_mask(path)
    return _field_from_mask(hierarchy, mask, value, low=0.0)
