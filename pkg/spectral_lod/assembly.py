"""Q1 finite element assembly on the fine mesh."""
from __future__ import annotations
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from spectral_lod.coefficient import CoefficientField
from spectral_lod.mesh import MeshHierarchy

__all__ = [
    "LocalForms",
    "NormOperators",
    "q1_element_matrices",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_load",
    "assemble_local_forms",
    "norms",
    "source_norm",
    "weighted_source_norm",
]

# corner order SW, SE, NE, NW
_STIFFNESS = (
    np.array(
        [
            [4.0, -1.0, -2.0, -1.0],
            [-1.0, 4.0, -1.0, -2.0],
            [-2.0, -1.0, 4.0, -1.0],
            [-1.0, -2.0, -1.0, 4.0],
        ]
    )
    / 6.0
)
_MASS = np.array(
    [[4.0, 2.0, 1.0, 2.0], [2.0, 4.0, 2.0, 1.0], [1.0, 2.0, 4.0, 2.0], [2.0, 1.0, 2.0, 4.0]]
) / 36.0


@dataclass(frozen=True)
class LocalForms:
    """Dense local matrices of one coarse element over its V_h(K_i) index list."""

    element_id: int
    nodes: np.ndarray
    stiffness: np.ndarray
    weighted_mass: np.ndarray
    mass: np.ndarray


def q1_element_matrices(h: float, kappa_e: float) -> Tuple[np.ndarray, np.ndarray]:
    """Closed-form bilinear stiffness and kappa-weighted mass of a square fine element."""
    if h <= 0:
        raise ValueError(f"Mesh size must be positive, got {h}")
    if kappa_e <= 0:
        raise ValueError(f"Coefficient must be positive, got {kappa_e}")
    return kappa_e * _STIFFNESS, kappa_e * h**2 * _MASS


def _corner_ids(hierarchy: MeshHierarchy) -> np.ndarray:
    ids = hierarchy.grid_ids()
    size = hierarchy.fine_divisions
    ey, ex = np.divmod(np.arange(size * size), size)
    return np.stack(
        [ids[ey, ex], ids[ey, ex + 1], ids[ey + 1, ex + 1], ids[ey + 1, ex]], axis=1
    )


def _assemble(
    hierarchy: MeshHierarchy, weights: np.ndarray, reference: np.ndarray
) -> sp.csr_matrix:
    corners = _corner_ids(hierarchy)
    rows = np.repeat(corners, 4, axis=1)
    cols = np.tile(corners, (1, 4))
    vals = weights[:, None] * reference.ravel()[None, :]
    keep = (rows >= 0) & (cols >= 0)
    matrix = sp.coo_matrix(
        (vals[keep], (rows[keep], cols[keep])), shape=(hierarchy.n, hierarchy.n)
    ).tocsr()
    # exact symmetry regardless of summation order
    return ((matrix + matrix.T) * 0.5).tocsr()


def assemble_stiffness(hierarchy: MeshHierarchy, kappa: CoefficientField) -> sp.csr_matrix:
    """Global stiffness matrix over the interior fine nodes."""
    kappa.check_mesh(hierarchy)
    return _assemble(hierarchy, kappa.values, _STIFFNESS)


def assemble_mass(
    hierarchy: MeshHierarchy, kappa: Optional[CoefficientField] = None
) -> sp.csr_matrix:
    """Global mass matrix, kappa-weighted when a coefficient is given."""
    if kappa is None:
        weights = np.ones(hierarchy.n_fine_elements)
    else:
        kappa.check_mesh(hierarchy)
        weights = kappa.values
    return _assemble(hierarchy, weights * hierarchy.h**2, _MASS)


def assemble_load(hierarchy: MeshHierarchy, f_field: np.ndarray) -> np.ndarray:
    """Load vector of a piecewise-constant source (exact integration)."""
    f_field = np.asarray(f_field, dtype=float)
    if f_field.shape != (hierarchy.n_fine_elements,):
        raise ValueError(
            f"Source must have {hierarchy.n_fine_elements} values, got shape {f_field.shape}"
        )
    corners = _corner_ids(hierarchy)
    contrib = np.repeat(f_field * hierarchy.h**2 / 4.0, 4).reshape(-1, 4)
    keep = corners >= 0
    return np.bincount(corners[keep], weights=contrib[keep], minlength=hierarchy.n)


def assemble_local_forms(
    hierarchy: MeshHierarchy, kappa: CoefficientField, element_id: int
) -> LocalForms:
    """Local stiffness, H^-2 scaled weighted mass and plain mass on V_h(K_i)."""
    kappa.check_mesh(hierarchy)
    r = hierarchy.refine_ratio
    side = r + 1
    cx, cy = hierarchy.element_coords(element_id)
    ly, lx = np.divmod(np.arange(r * r), r)
    corners = np.stack(
        [ly * side + lx, ly * side + lx + 1, (ly + 1) * side + lx + 1, (ly + 1) * side + lx],
        axis=1,
    )
    weights = kappa.values[hierarchy.fine_elements_of(element_id)]
    rows = np.repeat(corners, 4, axis=1).ravel()
    cols = np.tile(corners, (1, 4)).ravel()

    def _dense(scale: np.ndarray, reference: np.ndarray) -> np.ndarray:
        out = np.zeros((side * side, side * side))
        np.add.at(out, (rows, cols), (scale[:, None] * reference.ravel()[None, :]).ravel())
        return out

    gj, gi = np.divmod(np.arange(side * side), side)
    gi, gj = gi + cx * r, gj + cy * r
    size = hierarchy.fine_divisions
    keep = (gi > 0) & (gi < size) & (gj > 0) & (gj < size)
    h2 = hierarchy.h**2
    stiffness = _dense(weights, _STIFFNESS)[np.ix_(keep, keep)]
    weighted = _dense(weights * h2, _MASS)[np.ix_(keep, keep)] / hierarchy.H**2
    mass = _dense(np.full(r * r, h2), _MASS)[np.ix_(keep, keep)]
    nodes = hierarchy.element_membership[element_id]
    assert nodes.size == int(keep.sum())
    return LocalForms(element_id, nodes, stiffness, weighted, mass)


def norms(
    A: sp.spmatrix, mass: sp.spmatrix, weighted_mass: sp.spmatrix, v: np.ndarray
) -> Tuple[float, float, float]:
    """Energy, L2 and kappa-weighted L2 norms of a fine-grid vector."""
    # pylint: disable=invalid-name
    def _norm(matrix: sp.spmatrix) -> float:
        return float(np.sqrt(max(float(v @ (matrix @ v)), 0.0)))

    return _norm(A), _norm(mass), _norm(weighted_mass)


def source_norm(hierarchy: MeshHierarchy, f_field: np.ndarray) -> float:
    """L2 norm of a piecewise-constant source."""
    return float(np.sqrt(np.sum(np.asarray(f_field) ** 2) * hierarchy.h**2))


def weighted_source_norm(
    hierarchy: MeshHierarchy, kappa: CoefficientField, f_field: np.ndarray
) -> float:
    """L2 norm of kappa^(-1/2) f."""
    return float(np.sqrt(np.sum(np.asarray(f_field) ** 2 / kappa.values) * hierarchy.h**2))


@dataclass(frozen=True)
class NormOperators:
    """Matrices of the energy, L2 and kappa-weighted L2 inner products."""

    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    weighted_mass: sp.csr_matrix

    @classmethod
    def from_problem(cls, hierarchy: MeshHierarchy, kappa: CoefficientField) -> "NormOperators":
        """Assemble all three operators."""
        return cls(
            assemble_stiffness(hierarchy, kappa),
            assemble_mass(hierarchy),
            assemble_mass(hierarchy, kappa),
        )

    def __call__(self, v: np.ndarray) -> Tuple[float, float, float]:
        """Energy, L2 and weighted L2 norms of v."""
        return norms(self.stiffness, self.mass, self.weighted_mass, v)
