import numpy as np
import pytest

from spectral_lod.assembly import NormOperators
from spectral_lod.aux_space import c_star, coefficient_matrix
from spectral_lod.experiment import OfflineStage
from spectral_lod.kernel_basis import raw_kernel_vector, verify_ktak_structure
from spectral_lod.mesh import EntityKind

_RELATIONS = {
    "element-edge",
    "element-vertex",
    "edge-edge (same element)",
    "edge-vertex (touching)",
    "edge-vertex (non-touching)",
    "vertex-vertex (adjacent)",
    "vertex-vertex (diagonal)",
}


def test_kernel_dimension(toy_offline: OfflineStage) -> None:
    kernel = toy_offline.kernel
    assert kernel.ell == toy_offline.hierarchy.n - toy_offline.aux.L
    assert kernel.as_matrix().shape == (toy_offline.hierarchy.n, kernel.ell)
    classification = toy_offline.classification
    assert len(kernel.blocks_of(EntityKind.ELEMENT)) == toy_offline.hierarchy.m
    assert len(kernel.blocks_of(EntityKind.EDGE)) == classification.n_edges
    assert len(kernel.blocks_of(EntityKind.VERTEX)) == classification.n_vertices


def test_block_widths(toy_offline: OfflineStage) -> None:
    r = toy_offline.hierarchy.refine_ratio
    for block in toy_offline.kernel.blocks_of(EntityKind.ELEMENT):
        assert block.width == (r - 1) ** 2 - toy_offline.aux.bases[block.entity].count
    assert all(b.width == r - 1 for b in toy_offline.kernel.blocks_of(EntityKind.EDGE))
    assert all(b.width == 1 for b in toy_offline.kernel.blocks_of(EntityKind.VERTEX))


def test_columns_in_kernel(toy_offline: OfflineStage) -> None:
    C = coefficient_matrix(toy_offline.aux)
    K = toy_offline.kernel.as_matrix()
    assert abs(C @ K).max() <= 1e-8


def test_blocks_are_supported_on_their_elements(toy_offline: OfflineStage) -> None:
    mesh = toy_offline.hierarchy
    for block in toy_offline.kernel.blocks:
        allowed = np.unique(np.concatenate([mesh.element_membership[e] for e in block.elements]))
        assert np.all(np.isin(block.nodes, allowed))
        assert block.label.startswith(block.kind.name.lower())


def test_ktak_structure(toy_offline: OfflineStage) -> None:
    report = verify_ktak_structure(
        toy_offline.kernel, toy_offline.stiffness, toy_offline.classification
    )
    assert report.max_diag_deviation <= 1e-8
    assert report.max_within_block <= 1e-8
    assert report.max_measure_zero <= 1e-8
    assert report.max_asymmetry <= 1e-10
    assert set(report.nonzero_classes) <= _RELATIONS
    assert "max_diag_deviation" in report.as_dict()


def test_kernel_basis_full_rank(toy_offline: OfflineStage) -> None:
    K = toy_offline.kernel.as_matrix()
    gram = (K.T @ toy_offline.stiffness @ K).toarray()
    spectrum = np.linalg.eigvalsh(0.5 * (gram + gram.T))
    assert spectrum.min() > 1e-6
    true_condition = spectrum.max() / spectrum.min()
    assert 1.0 <= toy_offline.plan.condition <= true_condition * (1 + 1e-6)


def test_column_accessors(toy_offline: OfflineStage) -> None:
    kernel = toy_offline.kernel
    K = kernel.as_matrix()
    for index in (0, kernel.ell // 2, kernel.ell - 1):
        assert np.allclose(kernel.column(index), K[:, index].toarray().ravel())
    x = np.random.default_rng(0).standard_normal(kernel.ell)
    y = np.random.default_rng(1).standard_normal(kernel.n)
    assert np.allclose(kernel.apply(x), K @ x)
    assert np.allclose(kernel.apply_transpose(y), K.T @ y)
    owners = kernel.block_of_columns()
    assert owners.size == kernel.ell
    assert list(kernel.offsets) == [int(np.argmax(owners == b)) for b in range(len(kernel.blocks))]


def test_raw_kernel_vector(toy_offline: OfflineStage) -> None:
    C = coefficient_matrix(toy_offline.aux)
    dual_nodes = set(int(p) for p in toy_offline.dual.nodes.nodes)
    free = next(p for p in range(toy_offline.hierarchy.n) if p not in dual_nodes)
    args = (toy_offline.dual, toy_offline.aux, toy_offline.hierarchy, toy_offline.stiffness)
    v = raw_kernel_vector(free, *args, classification=toy_offline.classification)
    assert np.allclose(C @ v, 0.0, atol=1e-8)
    assert v[free] == pytest.approx(toy_offline.stiffness[free, free] ** -0.5)
    with pytest.raises(ValueError):
        raw_kernel_vector(min(dual_nodes), *args)


def test_kernel_functions_are_small_in_l2(
    toy_offline: OfflineStage, toy_norms: NormOperators
) -> None:
    kernel = toy_offline.kernel
    H = toy_offline.hierarchy.H
    rng = np.random.default_rng(4)
    for _ in range(20):
        v = kernel.apply(rng.standard_normal(kernel.ell))
        energy, _, l2k = toy_norms(v)
        assert l2k <= c_star() * H * energy * (1 + 1e-8)


def test_adjacent_blocks_are_orthogonal(toy_offline: OfflineStage) -> None:
    report = verify_ktak_structure(
        toy_offline.kernel, toy_offline.stiffness, toy_offline.classification
    )
    for relation in ("element-edge", "element-vertex", "edge-vertex (touching)"):
        assert report.class_max.get(relation, 0.0) <= 1e-8
    kernel, A = toy_offline.kernel, toy_offline.stiffness
    element_blocks = kernel.blocks_of(EntityKind.ELEMENT)
    for edge in kernel.blocks_of(EntityKind.EDGE):
        edge_columns = np.zeros((kernel.n, edge.width))
        edge_columns[edge.nodes] = edge.columns
        for element in edge.elements:
            block = element_blocks[element]
            inner = block.columns.T @ (A @ edge_columns)[block.nodes]
            assert np.max(np.abs(inner), initial=0.0) <= 1e-8
