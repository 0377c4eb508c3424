"""Local spectral problems, the auxiliary space V_aux and the projection onto it."""
from __future__ import annotations
from dataclasses import dataclass
import logging
from typing import Dict, List, Optional

import numpy as np
import scipy.sparse as sp

from spectral_lod.assembly import LocalForms, assemble_local_forms
from spectral_lod.coefficient import CoefficientField, constant_field
from spectral_lod.dense import sym_generalized_eig
from spectral_lod.mesh import BoundaryClass, MeshHierarchy, NodeClassification, classify_nodes
from spectral_lod.utils.parallel import parallel_map

__all__ = [
    "AuxSpace",
    "LocalEigenBasis",
    "mu_lower_bound",
    "c_star",
    "build_local_basis",
    "build_aux_space",
    "pi_aux_coeffs",
    "pi_aux_apply",
    "coefficient_matrix",
    "first_nonzero_eigenvalues",
]

logger = logging.getLogger(__name__)

_MU_HAT = {
    BoundaryClass.INTERIOR: np.pi**2,
    BoundaryClass.ONE_EDGE: np.pi**2 / 4.0,
    BoundaryClass.TWO_EDGES: np.pi**2 / 2.0,
}


def mu_lower_bound(boundary_class: BoundaryClass) -> float:
    """Lower bound for the first nonzero kappa=1 eigenvalue of an element class."""
    return float(_MU_HAT[BoundaryClass(boundary_class)])


def c_star() -> float:
    """Interpolation constant (2 max 1/mu)^(1/2) = 2^(3/2) / pi."""
    return float(2.0**1.5 / np.pi)


@dataclass(frozen=True)
class LocalEigenBasis:
    """Selected low eigenmodes of one coarse element.

    `eigenvalues` keeps the selected head plus the first rejected value;
    `weighted` caches S_i psi_j so that s_i(v, psi_j) = weighted[:, j] @ v_i.
    """

    element_id: int
    nodes: np.ndarray
    eigenvalues: np.ndarray
    count: int
    vectors: np.ndarray
    weighted: np.ndarray
    mu_hat: float
    boundary_class: BoundaryClass

    @property
    def next_eigenvalue(self) -> float:
        """First eigenvalue above the selection threshold (inf if the spectrum is exhausted)."""
        if self.eigenvalues.size > self.count:
            return float(self.eigenvalues[self.count])
        return float("inf")


@dataclass(frozen=True)
class AuxSpace:
    """Per-element eigen bases of all coarse elements."""

    bases: List[LocalEigenBasis]
    n: int

    @property
    def counts(self) -> np.ndarray:
        """L_i for every element."""
        return np.array([basis.count for basis in self.bases], dtype=int)

    @property
    def L(self) -> int:  # pylint: disable=invalid-name
        """Dimension of V_aux."""
        return int(self.counts.sum())

    @property
    def offsets(self) -> np.ndarray:
        """Index of the first auxiliary function of every element in the global ordering."""
        return np.concatenate([[0], np.cumsum(self.counts)[:-1]]).astype(int)

    @property
    def c_star(self) -> float:
        """Interpolation constant."""
        return c_star()


def build_local_basis(local_forms: LocalForms, boundary_class: BoundaryClass) -> LocalEigenBasis:
    """Solve the local eigenproblem and keep every mode with lambda <= mu_hat / 2."""
    decomposition = sym_generalized_eig(local_forms.stiffness, local_forms.weighted_mass)
    mu_hat = mu_lower_bound(boundary_class)
    count = int(np.sum(decomposition.eigenvalues <= mu_hat / 2.0))
    vectors = decomposition.eigenvectors[:, :count].copy()
    return LocalEigenBasis(
        element_id=local_forms.element_id,
        nodes=local_forms.nodes,
        eigenvalues=decomposition.eigenvalues[: count + 1].copy(),
        count=count,
        vectors=vectors,
        weighted=local_forms.weighted_mass @ vectors,
        mu_hat=mu_hat,
        boundary_class=BoundaryClass(boundary_class),
    )


def build_aux_space(
    hierarchy: MeshHierarchy,
    kappa: CoefficientField,
    classification: Optional[NodeClassification] = None,
    threads: int = 1,
) -> AuxSpace:
    """Build the local eigen bases of every coarse element."""
    if classification is None:
        classification = classify_nodes(hierarchy)

    def _element(element_id: int) -> LocalEigenBasis:
        forms = assemble_local_forms(hierarchy, kappa, element_id)
        return build_local_basis(forms, BoundaryClass(classification.boundary_class[element_id]))

    aux = AuxSpace(parallel_map(_element, range(hierarchy.m), threads), hierarchy.n)
    logger.info(
        "auxiliary space: L=%d over %d elements (max L_i=%d)", aux.L, hierarchy.m, aux.counts.max()
    )
    return aux


def pi_aux_coeffs(aux: AuxSpace, v: np.ndarray) -> List[np.ndarray]:
    """Coefficients s_i(v|K_i, psi_j) of the projection onto V_aux, per element."""
    return [basis.weighted.T @ v[basis.nodes] for basis in aux.bases]


def pi_aux_apply(aux: AuxSpace, v: np.ndarray) -> List[np.ndarray]:
    """Projection onto V_aux as a broken function: one local vector per element."""
    return [
        basis.vectors @ coeffs for basis, coeffs in zip(aux.bases, pi_aux_coeffs(aux, v))
    ]


def coefficient_matrix(aux: AuxSpace) -> sp.csr_matrix:
    """Sparse L x n matrix mapping a fine vector to all projection coefficients."""
    rows, cols, vals = [], [], []
    for offset, basis in zip(aux.offsets, aux.bases):
        if basis.count == 0:
            continue
        local_rows = offset + np.arange(basis.count)
        rows.append(np.repeat(local_rows, basis.nodes.size))
        cols.append(np.tile(basis.nodes, basis.count))
        vals.append(basis.weighted.T.ravel())
    if not rows:
        return sp.csr_matrix((0, aux.n))
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(aux.L, aux.n)
    ).tocsr()


def first_nonzero_eigenvalues(
    hierarchy: MeshHierarchy, tol: float = 1e-8
) -> Dict[BoundaryClass, float]:
    """Smallest nonzero kappa=1 eigenvalue of one representative element per boundary class."""
    classification = classify_nodes(hierarchy)
    unit = constant_field(hierarchy, 1.0)
    found: Dict[BoundaryClass, float] = {}
    for element_id in range(hierarchy.m):
        boundary_class = BoundaryClass(classification.boundary_class[element_id])
        if boundary_class in found:
            continue
        forms = assemble_local_forms(hierarchy, unit, element_id)
        values = sym_generalized_eig(forms.stiffness, forms.weighted_mass).eigenvalues
        found[boundary_class] = float(values[values > tol][0])
    return found
