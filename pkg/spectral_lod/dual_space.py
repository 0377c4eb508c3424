"""Random separated dual nodes and the dual functions they induce."""
from __future__ import annotations
from dataclasses import dataclass
import logging
from typing import List, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from spectral_lod.aux_space import AuxSpace, LocalEigenBasis
from spectral_lod.dense import FactorizationError, two_norm
from spectral_lod.mesh import MeshHierarchy
from spectral_lod.utils.parallel import parallel_map

__all__ = [
    "DualNodeSelectionError",
    "ElementDualNodes",
    "DualNodeSet",
    "DualFunctions",
    "select_dual_nodes",
    "build_dual_functions",
    "project_onto_dual",
    "dual_hat_matrix",
]

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 100
CONDITION_FLOOR = 1e-8


class DualNodeSelectionError(RuntimeError):
    """No admissible dual-node set with a well conditioned S_i was found."""


@dataclass(frozen=True)
class ElementDualNodes:
    """Dual nodes of one coarse element and the matrix S_i(j, k) = s_i(phi_hat_j, psi_k)."""

    element_id: int
    nodes: np.ndarray
    local: np.ndarray
    scale: np.ndarray
    S: np.ndarray  # pylint: disable=invalid-name
    attempts: int

    @property
    def condition(self) -> float:
        """Reciprocal condition sigma_min / sigma_max of S_i (1 for an empty set)."""
        if self.S.size == 0:
            return 1.0
        values = sla.svdvals(self.S)
        return float(values.min() / values.max())


@dataclass(frozen=True)
class DualNodeSet:
    """Dual nodes of all coarse elements."""

    elements: List[ElementDualNodes]
    seed: int

    @property
    def nodes(self) -> np.ndarray:
        """All dual node ids, element by element."""
        if not self.elements:
            return np.empty(0, dtype=np.int64)
        return np.concatenate([entry.nodes for entry in self.elements]).astype(np.int64)

    @property
    def scales(self) -> np.ndarray:
        """Hat normalization 1/sqrt(A_pp) of every dual node, same order as `nodes`."""
        if not self.elements:
            return np.empty(0)
        return np.concatenate([entry.scale for entry in self.elements])

    def owners(self) -> np.ndarray:
        """Owning element of every dual node, same order as `nodes`."""
        return np.concatenate(
            [np.full(entry.nodes.size, entry.element_id, dtype=np.int64) for entry in self.elements]
        )


@dataclass(frozen=True)
class DualFunctions:
    """tau_i = S_i^-1, the energy Gram matrices G_i of the dual functions, M_i = ||G_i||_2."""

    nodes: DualNodeSet
    tau: List[np.ndarray]
    gram: List[np.ndarray]
    norms: np.ndarray

    @property
    def M(self) -> float:  # pylint: disable=invalid-name
        """Largest M_i."""
        return float(self.norms.max(initial=0.0))


def _candidates(hierarchy: MeshHierarchy, element_id: int) -> np.ndarray:
    """Grid coordinates (i, j) of the nodes strictly inside a coarse element."""
    cx, cy = hierarchy.element_coords(element_id)
    r = hierarchy.refine_ratio
    lj, li = np.divmod(np.arange((r - 1) ** 2), r - 1)
    return np.stack([cx * r + 1 + li, cy * r + 1 + lj], axis=1)


def _separated_draw(
    rng: np.random.Generator, coords: np.ndarray, count: int
) -> Optional[np.ndarray]:
    chosen: List[int] = []
    for idx in rng.permutation(coords.shape[0]):
        if all(np.max(np.abs(coords[idx] - coords[other])) >= 2 for other in chosen):
            chosen.append(int(idx))
            if len(chosen) == count:
                return np.sort(np.array(chosen))
    return None


def _select_element(
    hierarchy: MeshHierarchy, basis: LocalEigenBasis, diagonal: np.ndarray, seed: int
) -> ElementDualNodes:
    element_id = basis.element_id
    if basis.count == 0:
        empty = np.empty(0, dtype=np.int64)
        return ElementDualNodes(element_id, empty, empty, np.empty(0), np.zeros((0, 0)), 0)
    capacity = int(np.ceil((hierarchy.refine_ratio - 1) / 2.0)) ** 2
    if basis.count > capacity:
        raise ValueError(
            f"Element {element_id} needs {basis.count} separated dual nodes but a refine ratio of "
            f"{hierarchy.refine_ratio} admits at most {capacity}"
        )
    coords = _candidates(hierarchy, element_id)
    for attempt in range(MAX_ATTEMPTS):
        key = np.random.SeedSequence([seed, element_id, attempt])
        rng = np.random.Generator(np.random.Philox(key))
        picked = _separated_draw(rng, coords, basis.count)
        if picked is None:
            continue
        nodes = np.array([hierarchy.node_id(int(i), int(j)) for i, j in coords[picked]])
        local = np.searchsorted(basis.nodes, nodes)
        scale = 1.0 / np.sqrt(diagonal[nodes])
        s_matrix = scale[:, None] * basis.weighted[local, :]
        values = sla.svdvals(s_matrix)
        if values.min() >= CONDITION_FLOOR * values.max():
            if attempt:
                logger.warning(
                    "element %d: dual nodes accepted after %d attempts", element_id, attempt + 1
                )
            return ElementDualNodes(element_id, nodes, local, scale, s_matrix, attempt + 1)
        ratio = values.min() / values.max()
        logger.debug("element %d attempt %d: S_i condition %.2e", element_id, attempt, ratio)
    raise DualNodeSelectionError(
        f"Element {element_id}: S_i stayed singular after {MAX_ATTEMPTS} dual-node draws"
    )


def select_dual_nodes(
    hierarchy: MeshHierarchy,
    aux: AuxSpace,
    stiffness: sp.spmatrix,
    rng_seed: int = 0,
    threads: int = 1,
) -> DualNodeSet:
    """Draw L_i separated interior dual nodes per element with S_i nonsingular."""
    diagonal = np.asarray(stiffness.diagonal(), dtype=float)
    elements = parallel_map(
        lambda basis: _select_element(hierarchy, basis, diagonal, rng_seed), aux.bases, threads
    )
    dual = DualNodeSet(elements, rng_seed)
    coords = np.array([hierarchy.node_coords(int(p)) for p in dual.nodes]).reshape(-1, 2)
    for first in range(coords.shape[0]):
        gaps = np.max(np.abs(coords[first + 1 :] - coords[first]), axis=1)
        assert np.all(gaps >= 2), "dual nodes share a fine element"
    logger.info("selected %d dual nodes (seed %d)", coords.shape[0], rng_seed)
    return dual


def build_dual_functions(
    dual_nodes: DualNodeSet, aux: AuxSpace, stiffness: Optional[sp.spmatrix] = None
) -> DualFunctions:
    """Invert every S_i and compute the energy Gram matrix and 2-norm M_i per element.

    Without a stiffness matrix the hat Gram matrix is taken as the identity, which is
    exact for separated dual nodes.
    """
    taus, grams, norms = [], [], []
    for entry, basis in zip(dual_nodes.elements, aux.bases):
        assert entry.nodes.size == basis.count
        if basis.count == 0:
            taus.append(np.zeros((0, 0)))
            grams.append(np.zeros((0, 0)))
            norms.append(0.0)
            continue
        try:
            tau = sla.inv(entry.S)
        except sla.LinAlgError as err:
            raise FactorizationError(f"S_{entry.element_id} is singular: {err}") from err
        if stiffness is None:
            hat_gram = np.eye(basis.count)
        else:
            block = stiffness[entry.nodes, :][:, entry.nodes].toarray()
            hat_gram = entry.scale[:, None] * block * entry.scale[None, :]
        gram = tau @ hat_gram @ tau.T
        taus.append(tau)
        grams.append(0.5 * (gram + gram.T))
        norms.append(two_norm(gram))
    functions = DualFunctions(dual_nodes, taus, grams, np.array(norms))
    logger.info("dual functions: M=%.4g", functions.M)
    return functions


def project_onto_dual(v: np.ndarray, dual: DualFunctions, aux: AuxSpace) -> np.ndarray:
    """Sum over elements of s_i(v, psi_j) times the dual function phi_tilde_j."""
    out = np.zeros(aux.n)
    for entry, basis, tau in zip(dual.nodes.elements, aux.bases, dual.tau):
        if basis.count == 0:
            continue
        coeffs = basis.weighted.T @ v[basis.nodes]
        out[entry.nodes] += entry.scale * (tau.T @ coeffs)
    return out


def dual_hat_matrix(dual_nodes: DualNodeSet, n: int) -> sp.csc_matrix:
    """Sparse n x L matrix whose columns are the normalized dual hat vectors."""
    nodes = dual_nodes.nodes
    return sp.csc_matrix(
        (dual_nodes.scales, (nodes, np.arange(nodes.size))), shape=(n, nodes.size)
    )
