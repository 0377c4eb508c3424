"""Nested uniform quadrilateral meshes of the unit square."""
from __future__ import annotations
from dataclasses import dataclass, field
from enum import IntEnum
from typing import List, Tuple

import numpy as np

__all__ = [
    "BoundaryClass",
    "EntityKind",
    "MeshHierarchy",
    "NodeClassification",
    "build_hierarchy",
    "classify_nodes",
]


class EntityKind(IntEnum):
    """Coarse entity owning a fine interior node."""

    ELEMENT = 0
    EDGE = 1
    VERTEX = 2


class BoundaryClass(IntEnum):
    """How many edges of a coarse element lie on the domain boundary."""

    INTERIOR = 0
    ONE_EDGE = 1
    TWO_EDGES = 2


@dataclass(frozen=True)
class MeshHierarchy:
    """Coarse mesh T_H with N_H x N_H squares, refined r times per side into T_h.

    Fine grid coordinates (i, j) run over 0..N with N = N_H * r; i is the x index.
    Only interior nodes 1..N-1 carry degrees of freedom, numbered row-major
    (j outer). Fine elements and coarse elements are numbered row-major too.
    """

    coarse_divisions: int
    refine_ratio: int
    element_membership: List[np.ndarray] = field(repr=False, compare=False)

    @property
    def fine_divisions(self) -> int:
        """Fine cells per side."""
        return self.coarse_divisions * self.refine_ratio

    @property
    def H(self) -> float:  # pylint: disable=invalid-name
        """Coarse mesh size."""
        return 1.0 / self.coarse_divisions

    @property
    def h(self) -> float:
        """Fine mesh size."""
        return 1.0 / self.fine_divisions

    @property
    def m(self) -> int:
        """Number of coarse elements."""
        return self.coarse_divisions**2

    @property
    def n(self) -> int:
        """Number of interior fine nodes (dimension of V_h)."""
        return (self.fine_divisions - 1) ** 2

    @property
    def n_fine_elements(self) -> int:
        """Number of fine elements."""
        return self.fine_divisions**2

    def node_id(self, i: int, j: int) -> int:
        """Global id of the interior node at grid coordinates (i, j)."""
        side = self.fine_divisions - 1
        if not (0 < i < self.fine_divisions and 0 < j < self.fine_divisions):
            raise ValueError(f"({i}, {j}) is not an interior grid node")
        return (j - 1) * side + (i - 1)

    def node_coords(self, node: int) -> Tuple[int, int]:
        """Grid coordinates (i, j) of an interior node id."""
        side = self.fine_divisions - 1
        if not 0 <= node < self.n:
            raise ValueError(f"Node id {node} out of range")
        j, i = divmod(node, side)
        return i + 1, j + 1

    def grid_ids(self) -> np.ndarray:
        """Array of shape (N+1, N+1) indexed [j, i] holding node ids, -1 on the boundary."""
        size = self.fine_divisions + 1
        ids = -np.ones((size, size), dtype=np.int64)
        side = self.fine_divisions - 1
        ids[1:-1, 1:-1] = np.arange(self.n, dtype=np.int64).reshape(side, side)
        return ids

    def element_coords(self, element_id: int) -> Tuple[int, int]:
        """Coarse element (cx, cy) of a coarse element id."""
        if not 0 <= element_id < self.m:
            raise ValueError(f"Coarse element id {element_id} out of range")
        cy, cx = divmod(element_id, self.coarse_divisions)
        return cx, cy

    def element_id(self, cx: int, cy: int) -> int:
        """Coarse element id of (cx, cy)."""
        return cy * self.coarse_divisions + cx

    def fine_element_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Centre coordinates (x1, x2) of every fine element, row-major."""
        centers = (np.arange(self.fine_divisions) + 0.5) * self.h
        x2, x1 = np.meshgrid(centers, centers, indexing="ij")
        return x1.ravel(), x2.ravel()

    def fine_elements_of(self, element_id: int) -> np.ndarray:
        """Row-major ids of the r x r fine elements inside a coarse element."""
        cx, cy = self.element_coords(element_id)
        r = self.refine_ratio
        ex = cx * r + np.arange(r)
        ey = cy * r + np.arange(r)
        return (ey[:, None] * self.fine_divisions + ex[None, :]).ravel()

    def coarse_distance(self, first: int, second: int) -> int:
        """Chebyshev distance between two coarse elements, in elements."""
        ax, ay = self.element_coords(first)
        bx, by = self.element_coords(second)
        return max(abs(ax - bx), abs(ay - by))


@dataclass(frozen=True)
class NodeClassification:
    """Partition of the interior fine nodes by owning coarse entity.

    `kind[p]` is an `EntityKind` code and `owner[p]` the id of the element, edge or
    vertex. Vertical interior edges come first (row cy, line a -> cy*(N_H-1) + a-1),
    then horizontal ones; vertices are row-major over interior coarse vertices.
    """

    kind: np.ndarray
    owner: np.ndarray
    boundary_class: np.ndarray
    edge_elements: np.ndarray
    vertex_elements: np.ndarray
    vertex_edges: np.ndarray
    element_edges: List[List[int]] = field(repr=False, compare=False)
    element_vertices: List[List[int]] = field(repr=False, compare=False)

    @property
    def n_edges(self) -> int:
        """Number of interior coarse edges."""
        return int(self.edge_elements.shape[0])

    @property
    def n_vertices(self) -> int:
        """Number of interior coarse vertices."""
        return int(self.vertex_elements.shape[0])

    def nodes_of(self, kind: EntityKind, owner: int) -> np.ndarray:
        """Ascending ids of the nodes owned by a coarse entity."""
        return np.flatnonzero((self.kind == kind) & (self.owner == owner))

    def counts(self) -> Tuple[int, int, int]:
        """Number of element-interior, edge-interior and vertex nodes."""
        return (
            int(np.sum(self.kind == EntityKind.ELEMENT)),
            int(np.sum(self.kind == EntityKind.EDGE)),
            int(np.sum(self.kind == EntityKind.VERTEX)),
        )


def _membership(coarse_divisions: int, refine_ratio: int) -> List[np.ndarray]:
    n_fine = coarse_divisions * refine_ratio
    side = n_fine - 1
    members = []
    for cy in range(coarse_divisions):
        for cx in range(coarse_divisions):
            i = np.arange(cx * refine_ratio, (cx + 1) * refine_ratio + 1)
            j = np.arange(cy * refine_ratio, (cy + 1) * refine_ratio + 1)
            i = i[(i > 0) & (i < n_fine)]
            j = j[(j > 0) & (j < n_fine)]
            ids = ((j[:, None] - 1) * side + (i[None, :] - 1)).ravel()
            members.append(ids.astype(np.int64))
    return members


def build_hierarchy(coarse_divisions: int, refine_ratio: int) -> MeshHierarchy:
    """Build the coarse/fine mesh pair with all index maps populated."""
    if coarse_divisions < 2:
        raise ValueError(
            "coarse_divisions must be >= 2 to have an interior coarse vertex, "
            f"got {coarse_divisions}"
        )
    if refine_ratio < 2:
        raise ValueError(
            f"refine_ratio must be >= 2 to have element-interior fine nodes, got {refine_ratio}"
        )
    return MeshHierarchy(
        coarse_divisions=coarse_divisions,
        refine_ratio=refine_ratio,
        element_membership=_membership(coarse_divisions, refine_ratio),
    )


def classify_nodes(hierarchy: MeshHierarchy) -> NodeClassification:
    """Classify every interior fine node as element-interior, edge-interior or coarse vertex."""
    n_h = hierarchy.coarse_divisions
    r = hierarchy.refine_ratio
    side = hierarchy.fine_divisions - 1
    j, i = np.divmod(np.arange(hierarchy.n), side)
    i, j = i + 1, j + 1
    on_x, on_y = i % r == 0, j % r == 0

    kind = np.full(hierarchy.n, EntityKind.ELEMENT, dtype=np.int8)
    owner = np.empty(hierarchy.n, dtype=np.int64)
    n_vertical = (n_h - 1) * n_h

    inner = ~on_x & ~on_y
    owner[inner] = (j[inner] // r) * n_h + i[inner] // r

    vertical = on_x & ~on_y
    kind[vertical] = EntityKind.EDGE
    owner[vertical] = (j[vertical] // r) * (n_h - 1) + i[vertical] // r - 1

    horizontal = ~on_x & on_y
    kind[horizontal] = EntityKind.EDGE
    owner[horizontal] = n_vertical + (j[horizontal] // r - 1) * n_h + i[horizontal] // r

    vertex = on_x & on_y
    kind[vertex] = EntityKind.VERTEX
    owner[vertex] = (j[vertex] // r - 1) * (n_h - 1) + i[vertex] // r - 1

    edge_elements = np.empty((2 * n_vertical, 2), dtype=np.int64)
    for cy in range(n_h):
        for line in range(1, n_h):
            edge_elements[cy * (n_h - 1) + line - 1] = (cy * n_h + line - 1, cy * n_h + line)
    for line in range(1, n_h):
        for cx in range(n_h):
            edge_elements[n_vertical + (line - 1) * n_h + cx] = (
                (line - 1) * n_h + cx,
                line * n_h + cx,
            )

    vertex_elements = np.empty(((n_h - 1) ** 2, 4), dtype=np.int64)
    vertex_edges = np.empty(((n_h - 1) ** 2, 4), dtype=np.int64)
    for b in range(1, n_h):
        for a in range(1, n_h):
            vtx = (b - 1) * (n_h - 1) + a - 1
            vertex_elements[vtx] = (
                (b - 1) * n_h + a - 1,
                (b - 1) * n_h + a,
                b * n_h + a - 1,
                b * n_h + a,
            )
            # below, above, left, right
            vertex_edges[vtx] = (
                (b - 1) * (n_h - 1) + a - 1,
                b * (n_h - 1) + a - 1,
                n_vertical + (b - 1) * n_h + a - 1,
                n_vertical + (b - 1) * n_h + a,
            )

    element_edges: List[List[int]] = [[] for _ in range(hierarchy.m)]
    for edge, pair in enumerate(edge_elements):
        for element in pair:
            element_edges[element].append(edge)
    element_vertices: List[List[int]] = [[] for _ in range(hierarchy.m)]
    for vtx, quad in enumerate(vertex_elements):
        for element in quad:
            element_vertices[element].append(vtx)

    boundary_class = np.empty(hierarchy.m, dtype=np.int8)
    for element in range(hierarchy.m):
        cx, cy = hierarchy.element_coords(element)
        touching = int(cx in (0, n_h - 1)) + int(cy in (0, n_h - 1))
        boundary_class[element] = BoundaryClass(touching)

    return NodeClassification(
        kind=kind,
        owner=owner,
        boundary_class=boundary_class,
        edge_elements=edge_elements,
        vertex_elements=vertex_elements,
        vertex_edges=vertex_edges,
        element_edges=element_edges,
        element_vertices=element_vertices,
    )
