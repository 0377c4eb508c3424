"""Energy-orthonormal basis of Ker Pi_aux, built per element, then per edge, then per vertex."""
from __future__ import annotations
from dataclasses import dataclass, field
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from spectral_lod.aux_space import AuxSpace
from spectral_lod.dense import mgs_orthonormalize, project_out
from spectral_lod.dual_space import DualFunctions
from spectral_lod.mesh import EntityKind, MeshHierarchy, NodeClassification, classify_nodes
from spectral_lod.utils.parallel import parallel_map

__all__ = [
    "KernelBlock",
    "BlockKernelBasis",
    "StructureReport",
    "raw_kernel_vector",
    "substructure_orthonormalize",
    "verify_ktak_structure",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KernelBlock:
    """Dense columns of K owned by one coarse entity, restricted to their support."""

    kind: EntityKind
    entity: int
    elements: Tuple[int, ...]
    nodes: np.ndarray
    columns: np.ndarray

    @property
    def width(self) -> int:
        """Number of columns."""
        return int(self.columns.shape[1])

    @property
    def label(self) -> str:
        """Readable name of the owning entity."""
        return f"{self.kind.name.lower()} {self.entity}"


@dataclass
class BlockKernelBasis:
    """The matrix K as element, edge and vertex blocks (in that order)."""

    n: int
    blocks: List[KernelBlock]
    _matrix: Optional[sp.csc_matrix] = field(default=None, init=False, repr=False)

    @property
    def ell(self) -> int:
        """Total number of columns."""
        return int(sum(block.width for block in self.blocks))

    @property
    def offsets(self) -> np.ndarray:
        """First column of every block."""
        widths = [block.width for block in self.blocks]
        return np.concatenate([[0], np.cumsum(widths)[:-1]]).astype(int)

    def blocks_of(self, kind: EntityKind) -> List[KernelBlock]:
        """Blocks owned by one kind of coarse entity."""
        return [block for block in self.blocks if block.kind == kind]

    def as_matrix(self) -> sp.csc_matrix:
        """Sparse n x ell copy of K used for fast products (built once)."""
        if self._matrix is None:
            rows, cols, vals = [], [], []
            for offset, block in zip(self.offsets, self.blocks):
                rows.append(np.repeat(block.nodes, block.width))
                cols.append(np.tile(offset + np.arange(block.width), block.nodes.size))
                vals.append(block.columns.ravel())
            matrix = sp.coo_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(self.n, self.ell),
            ).tocsc()
            matrix.eliminate_zeros()
            self._matrix = matrix
        return self._matrix

    def apply(self, x: np.ndarray) -> np.ndarray:
        """K x."""
        return self.as_matrix() @ x

    def apply_transpose(self, y: np.ndarray) -> np.ndarray:
        """K^T y."""
        return self.as_matrix().T @ y

    def column(self, index: int) -> np.ndarray:
        """Column `index` of K as a dense fine-grid vector."""
        out = np.zeros(self.n)
        offsets = self.offsets
        block_id = int(np.searchsorted(offsets, index, side="right") - 1)
        block = self.blocks[block_id]
        out[block.nodes] = block.columns[:, index - offsets[block_id]]
        return out

    def block_of_columns(self) -> np.ndarray:
        """Owning block index of every column."""
        return np.repeat(np.arange(len(self.blocks)), [block.width for block in self.blocks])


@dataclass
class StructureReport:
    """Entries of K^T A K = I + B grouped by how the owning entities relate."""

    max_diag_deviation: float
    max_within_block: float
    max_measure_zero: float
    max_asymmetry: float
    class_max: Dict[str, float]
    tolerance: float = 1e-8

    @property
    def nonzero_classes(self) -> List[str]:
        """Relations with entries above the tolerance."""
        return sorted(name for name, value in self.class_max.items() if value > self.tolerance)

    def as_dict(self) -> Dict[str, float]:
        """Flat mapping for reports."""
        out = {
            "max_diag_deviation": self.max_diag_deviation,
            "max_within_block": self.max_within_block,
            "max_measure_zero": self.max_measure_zero,
            "max_asymmetry": self.max_asymmetry,
        }
        out.update({f"class[{name}]": value for name, value in sorted(self.class_max.items())})
        return out


class _Context:
    """Shared read-only data for building kernel vectors."""

    # pylint: disable=too-few-public-methods,too-many-instance-attributes
    def __init__(
        self,
        hierarchy: MeshHierarchy,
        classification: NodeClassification,
        aux: AuxSpace,
        dual: DualFunctions,
        stiffness: sp.csr_matrix,
    ) -> None:
        self.hierarchy = hierarchy
        self.classification = classification
        self.aux = aux
        self.dual = dual
        self.stiffness = sp.csr_matrix(stiffness)
        self.scale = 1.0 / np.sqrt(np.asarray(self.stiffness.diagonal(), dtype=float))
        self.is_dual = np.zeros(hierarchy.n, dtype=bool)
        self.is_dual[dual.nodes.nodes] = True

    def support(self, elements: Sequence[int]) -> np.ndarray:
        members = [self.hierarchy.element_membership[e] for e in elements]
        return np.unique(np.concatenate(members))

    def local_stiffness(self, nodes: np.ndarray) -> sp.csr_matrix:
        return self.stiffness[nodes, :][:, nodes]

    def raw(self, points: np.ndarray, support: np.ndarray, elements: Sequence[int]) -> np.ndarray:
        """Columns phi_p - phi_tilde_p restricted to `support`."""
        out = np.zeros((support.size, points.size))
        out[np.searchsorted(support, points), np.arange(points.size)] = self.scale[points]
        for element in elements:
            basis = self.aux.bases[element]
            if basis.count == 0:
                continue
            pos = np.minimum(np.searchsorted(basis.nodes, points), basis.nodes.size - 1)
            inside = np.flatnonzero(basis.nodes[pos] == points)
            if inside.size == 0:
                continue
            coeffs = basis.weighted[pos[inside], :] * self.scale[points[inside], None]
            entry = self.dual.nodes.elements[element]
            values = (coeffs @ self.dual.tau[element]) * entry.scale[None, :]
            rows = np.searchsorted(support, entry.nodes)
            out[np.ix_(rows, inside)] -= values.T
        return out


def _elements_containing(classification: NodeClassification, node: int) -> Tuple[int, ...]:
    kind = EntityKind(classification.kind[node])
    owner = int(classification.owner[node])
    if kind == EntityKind.ELEMENT:
        return (owner,)
    if kind == EntityKind.EDGE:
        return tuple(int(e) for e in classification.edge_elements[owner])
    return tuple(int(e) for e in classification.vertex_elements[owner])


def raw_kernel_vector(
    p: int,
    dual: DualFunctions,
    aux: AuxSpace,
    hierarchy: MeshHierarchy,
    stiffness: sp.spmatrix,
    classification: Optional[NodeClassification] = None,
) -> np.ndarray:
    """The kernel vector phi_p - phi_tilde_p with phi_p of unit energy, as a fine-grid vector."""
    if classification is None:
        classification = classify_nodes(hierarchy)
    ctx = _Context(hierarchy, classification, aux, dual, stiffness)
    if ctx.is_dual[p]:
        raise ValueError(f"Node {p} is a dual node and has no kernel vector")
    elements = _elements_containing(classification, p)
    support = ctx.support(elements)
    out = np.zeros(hierarchy.n)
    out[support] = ctx.raw(np.array([p]), support, elements)[:, 0]
    return out


def _embed(blocks: Sequence[KernelBlock], support: np.ndarray) -> np.ndarray:
    width = sum(block.width for block in blocks)
    out = np.zeros((support.size, width))
    col = 0
    for block in blocks:
        out[np.searchsorted(support, block.nodes), col : col + block.width] = block.columns
        col += block.width
    return out


def _element_block(ctx: _Context, element: int) -> KernelBlock:
    support = ctx.hierarchy.element_membership[element]
    points = ctx.classification.nodes_of(EntityKind.ELEMENT, element)
    points = points[~ctx.is_dual[points]]
    raw = ctx.raw(points, support, (element,))
    columns, _ = mgs_orthonormalize(raw, ctx.local_stiffness(support), label=f"element {element}")
    return KernelBlock(EntityKind.ELEMENT, element, (element,), support, columns)


def _edge_block(ctx: _Context, edge: int, element_blocks: List[KernelBlock]) -> KernelBlock:
    elements = tuple(int(e) for e in ctx.classification.edge_elements[edge])
    support = ctx.support(elements)
    local = ctx.local_stiffness(support)
    points = ctx.classification.nodes_of(EntityKind.EDGE, edge)
    raw = ctx.raw(points, support, elements)
    raw = project_out(raw, _embed([element_blocks[e] for e in elements], support), local)
    columns, _ = mgs_orthonormalize(raw, local, label=f"edge {edge}")
    return KernelBlock(EntityKind.EDGE, edge, elements, support, columns)


def _vertex_block(
    ctx: _Context, vertex: int, element_blocks: List[KernelBlock], edge_blocks: List[KernelBlock]
) -> KernelBlock:
    elements = tuple(int(e) for e in ctx.classification.vertex_elements[vertex])
    support = ctx.support(elements)
    local = ctx.local_stiffness(support)
    points = ctx.classification.nodes_of(EntityKind.VERTEX, vertex)
    raw = ctx.raw(points, support, elements)
    raw = project_out(raw, _embed([element_blocks[e] for e in elements], support), local)
    touching = [edge_blocks[int(e)] for e in ctx.classification.vertex_edges[vertex]]
    # edge blocks of different edges are not mutually orthogonal
    label = f"edges at vertex {vertex}"
    edges, _ = mgs_orthonormalize(_embed(touching, support), local, label=label)
    raw = project_out(raw, edges, local)
    columns, _ = mgs_orthonormalize(raw, local, label=f"vertex {vertex}")
    return KernelBlock(EntityKind.VERTEX, vertex, elements, support, columns)


def substructure_orthonormalize(
    hierarchy: MeshHierarchy,
    aux: AuxSpace,
    dual: DualFunctions,
    stiffness: sp.spmatrix,
    classification: Optional[NodeClassification] = None,
    threads: int = 1,
) -> BlockKernelBasis:
    """Build K in three stages: elements, then edges, then interior vertices."""
    if classification is None:
        classification = classify_nodes(hierarchy)
    ctx = _Context(hierarchy, classification, aux, dual, stiffness)
    element_blocks = parallel_map(
        lambda element: _element_block(ctx, element), range(hierarchy.m), threads
    )
    edge_blocks = parallel_map(
        lambda edge: _edge_block(ctx, edge, element_blocks), range(classification.n_edges), threads
    )
    vertex_blocks = parallel_map(
        lambda vertex: _vertex_block(ctx, vertex, element_blocks, edge_blocks),
        range(classification.n_vertices),
        threads,
    )
    kernel = BlockKernelBasis(hierarchy.n, element_blocks + edge_blocks + vertex_blocks)
    assert kernel.ell == hierarchy.n - aux.L, "kernel dimension must be n - L"
    logger.info("kernel basis: ell=%d in %d blocks", kernel.ell, len(kernel.blocks))
    return kernel


def _relation(
    first: KernelBlock, second: KernelBlock, classification: NodeClassification
) -> str:
    kinds = sorted([first, second], key=lambda block: int(block.kind))
    low, high = kinds
    names = f"{low.kind.name.lower()}-{high.kind.name.lower()}"
    shared = len(set(low.elements) & set(high.elements))
    if low.kind == EntityKind.EDGE and high.kind == EntityKind.EDGE:
        return "edge-edge (same element)"
    if low.kind == EntityKind.EDGE and high.kind == EntityKind.VERTEX:
        touching = low.entity in set(int(e) for e in classification.vertex_edges[high.entity])
        return "edge-vertex (touching)" if touching else "edge-vertex (non-touching)"
    if low.kind == EntityKind.VERTEX and high.kind == EntityKind.VERTEX:
        return "vertex-vertex (adjacent)" if shared == 2 else "vertex-vertex (diagonal)"
    return names


def verify_ktak_structure(
    K_blocks: BlockKernelBasis,
    A: sp.spmatrix,
    classification: NodeClassification,
    tolerance: float = 1e-8,
) -> StructureReport:
    """Inspect K^T A K: unit diagonal, and which block relations carry off-diagonal entries."""
    # pylint: disable=invalid-name
    matrix = K_blocks.as_matrix()
    product = sp.csr_matrix(matrix.T @ (A @ matrix))
    asymmetry = abs(product - product.T)
    max_asymmetry = float(asymmetry.max()) if asymmetry.nnz else 0.0
    coo = product.tocoo()
    owner = K_blocks.block_of_columns()
    diag_dev = float(np.max(np.abs(product.diagonal() - 1.0), initial=0.0))

    off = coo.row != coo.col
    rows, cols, vals = coo.row[off], coo.col[off], np.abs(coo.data[off])
    block_rows, block_cols = owner[rows], owner[cols]
    same = block_rows == block_cols
    within = float(vals[same].max(initial=0.0))

    pairs = np.stack([block_rows[~same], block_cols[~same]], axis=1)
    pair_vals = vals[~same]
    max_measure_zero = 0.0
    class_max: Dict[str, float] = {}
    if pairs.size:
        unique, inverse = np.unique(pairs, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).ravel()
        peak = np.zeros(unique.shape[0])
        np.maximum.at(peak, inverse, pair_vals)
        for (first, second), value in zip(unique, peak):
            block_a, block_b = K_blocks.blocks[first], K_blocks.blocks[second]
            if not set(block_a.elements) & set(block_b.elements):
                max_measure_zero = max(max_measure_zero, float(value))
                continue
            name = _relation(block_a, block_b, classification)
            class_max[name] = max(class_max.get(name, 0.0), float(value))
    report = StructureReport(
        diag_dev, within, max_measure_zero, max_asymmetry, class_max, tolerance
    )
    logger.info("K^T A K structure: %s", report.as_dict())
    return report
