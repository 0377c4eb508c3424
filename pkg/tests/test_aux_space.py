import numpy as np
import pytest

from spectral_lod.assembly import LocalForms, assemble_local_forms, assemble_stiffness
from spectral_lod.aux_space import (
    build_aux_space,
    build_local_basis,
    c_star,
    coefficient_matrix,
    first_nonzero_eigenvalues,
    mu_lower_bound,
    pi_aux_apply,
    pi_aux_coeffs,
)
from spectral_lod.coefficient import CoefficientField, constant_field
from spectral_lod.mesh import BoundaryClass, MeshHierarchy, build_hierarchy, classify_nodes


def test_constants() -> None:
    assert np.isclose(mu_lower_bound(BoundaryClass.INTERIOR), np.pi**2)
    assert np.isclose(mu_lower_bound(BoundaryClass.ONE_EDGE), np.pi**2 / 4)
    assert np.isclose(mu_lower_bound(BoundaryClass.TWO_EDGES), np.pi**2 / 2)
    assert np.isclose(c_star(), 0.9003163161571061)
    assert np.isclose(c_star() ** 2, 2.0 / mu_lower_bound(BoundaryClass.ONE_EDGE))


def test_unit_coefficient_counts(toy_mesh: MeshHierarchy) -> None:
    aux = build_aux_space(toy_mesh, constant_field(toy_mesh, 1.0))
    classes = classify_nodes(toy_mesh).boundary_class
    for basis, boundary_class in zip(aux.bases, classes):
        if boundary_class == BoundaryClass.INTERIOR:
            assert basis.count == 1
            assert abs(basis.eigenvalues[0]) <= 1e-8
            assert basis.next_eigenvalue >= np.pi**2 * (1 - 1e-8)
        else:
            assert basis.count == 0
            assert basis.next_eigenvalue > basis.mu_hat / 2
    assert aux.L == 4
    assert list(aux.offsets) == list(np.concatenate([[0], np.cumsum(aux.counts)[:-1]]))


def test_first_nonzero_eigenvalues(coarse_ratio_mesh: MeshHierarchy) -> None:
    found = first_nonzero_eigenvalues(coarse_ratio_mesh)
    assert set(found) == set(BoundaryClass)
    for boundary_class, value in found.items():
        assert value >= mu_lower_bound(boundary_class) * (1 - 1e-8)


def test_refinement_lowers_discrete_eigenvalues() -> None:
    coarse = first_nonzero_eigenvalues(build_hierarchy(4, 4))
    fine = first_nonzero_eigenvalues(build_hierarchy(4, 8))
    for boundary_class in BoundaryClass:
        assert fine[boundary_class] <= coarse[boundary_class]


def test_basis_is_weighted_orthonormal(
    toy_mesh: MeshHierarchy, channel_kappa: CoefficientField
) -> None:
    aux = build_aux_space(toy_mesh, channel_kappa)
    for basis in aux.bases:
        gram = basis.vectors.T @ basis.weighted
        assert np.allclose(gram, np.eye(basis.count), atol=1e-9)
        assert np.all(basis.eigenvalues[: basis.count] <= basis.mu_hat / 2)


def test_channels_add_modes(toy_mesh: MeshHierarchy, channel_kappa: CoefficientField) -> None:
    unit = build_aux_space(toy_mesh, constant_field(toy_mesh, 1.0))
    channels = build_aux_space(toy_mesh, channel_kappa)
    assert np.all(channels.counts >= unit.counts)


def test_threads_match_serial(toy_mesh: MeshHierarchy, channel_kappa: CoefficientField) -> None:
    serial = build_aux_space(toy_mesh, channel_kappa)
    threaded = build_aux_space(toy_mesh, channel_kappa, threads=3)
    assert list(serial.counts) == list(threaded.counts)
    for first, second in zip(serial.bases, threaded.bases):
        assert np.array_equal(first.vectors, second.vectors)


def test_projection_error_bound(
    toy_mesh: MeshHierarchy, channel_kappa: CoefficientField
) -> None:
    aux = build_aux_space(toy_mesh, channel_kappa)
    forms = [assemble_local_forms(toy_mesh, channel_kappa, e) for e in range(toy_mesh.m)]
    A = assemble_stiffness(toy_mesh, channel_kappa)
    rng = np.random.default_rng(0)
    for _ in range(200):
        v = rng.standard_normal(toy_mesh.n)
        total, broken = 0.0, 0.0
        for basis, local, projected in zip(aux.bases, forms, pi_aux_apply(aux, v)):
            rest = v[basis.nodes] - projected
            weighted = rest @ local.weighted_mass @ rest
            energy = v[basis.nodes] @ local.stiffness @ v[basis.nodes]
            assert weighted <= energy / basis.next_eigenvalue * (1 + 1e-8) + 1e-12
            assert projected @ local.stiffness @ projected <= energy * (1 + 1e-10) + 1e-12
            total += toy_mesh.H**2 * weighted
            broken += projected @ local.stiffness @ projected
        energy_norm = np.sqrt(v @ (A @ v))
        assert np.sqrt(broken) <= energy_norm * (1 + 1e-10)
        assert np.sqrt(total) <= c_star() * toy_mesh.H * energy_norm * (1 + 1e-8)


def test_projection_reproduces_modes(
    toy_mesh: MeshHierarchy, channel_kappa: CoefficientField
) -> None:
    aux = build_aux_space(toy_mesh, channel_kappa)
    basis = max(aux.bases, key=lambda b: b.count)
    v = np.zeros(toy_mesh.n)
    v[basis.nodes] = basis.vectors[:, -1]
    coeffs = pi_aux_coeffs(aux, v)[basis.element_id]
    expected = np.zeros(basis.count)
    expected[-1] = 1.0
    assert np.allclose(coeffs, expected, atol=1e-9)


def test_coefficient_matrix(toy_mesh: MeshHierarchy, channel_kappa: CoefficientField) -> None:
    aux = build_aux_space(toy_mesh, channel_kappa)
    matrix = coefficient_matrix(aux)
    assert matrix.shape == (aux.L, toy_mesh.n)
    v = np.random.default_rng(1).standard_normal(toy_mesh.n)
    assert np.allclose(matrix @ v, np.concatenate(pi_aux_coeffs(aux, v)))


def test_coefficient_matrix_empty() -> None:
    # every element of a 2 x 2 coarse mesh touches the boundary
    mesh = build_hierarchy(2, 2)
    aux = build_aux_space(mesh, constant_field(mesh, 1.0))
    assert aux.L == 0
    assert coefficient_matrix(aux).shape == (0, mesh.n)


def test_local_basis_two_level_element() -> None:
    mesh = build_hierarchy(3, 4)
    values = np.ones(mesh.n_fine_elements)
    values[mesh.fine_elements_of(mesh.element_id(1, 1))[:4]] = 1e6
    kappa = CoefficientField(values, 12)
    forms: LocalForms = assemble_local_forms(mesh, kappa, mesh.element_id(1, 1))
    basis = build_local_basis(forms, BoundaryClass.INTERIOR)
    assert basis.count >= 1
    assert basis.weighted.shape == basis.vectors.shape
    with pytest.raises(ValueError):
        build_local_basis(forms, 7)  # type: ignore[arg-type]
