import numpy as np
import pytest

from spectral_lod.assembly import NormOperators, assemble_load, source_norm, weighted_source_norm
from spectral_lod.aux_space import coefficient_matrix, pi_aux_coeffs
from spectral_lod.coefficient import right_half_source
from spectral_lod.corrector import build_ideal_space, ideal_corrector
from spectral_lod.experiment import OfflineStage
from spectral_lod.solver import compute_errors, dual_interpolant, solve_fine, solve_galerkin


def _load(offline: OfflineStage) -> np.ndarray:
    return assemble_load(offline.hierarchy, right_half_source(offline.hierarchy))


def test_fine_solvers_agree(toy_offline: OfflineStage) -> None:
    A, load = toy_offline.stiffness, _load(toy_offline)
    direct = solve_fine(A, load)
    iterative = solve_fine(A, load, method="cg")
    assert np.allclose(A @ direct.vector, load)
    assert np.allclose(direct.vector, iterative.vector, atol=1e-9)
    assert iterative.iterations > 0
    assert direct.seconds >= 0.0


def test_fine_zero_load(toy_offline: OfflineStage) -> None:
    result = solve_fine(toy_offline.stiffness, np.zeros(toy_offline.hierarchy.n))
    assert np.array_equal(result.vector, np.zeros(toy_offline.hierarchy.n))


def test_fine_unknown_method(toy_offline: OfflineStage) -> None:
    with pytest.raises(ValueError):
        solve_fine(toy_offline.stiffness, _load(toy_offline), method="lu")


def test_galerkin_orthogonality(toy_offline: OfflineStage) -> None:
    A, load = toy_offline.stiffness, _load(toy_offline)
    u_h = solve_fine(A, load).vector
    result = solve_galerkin(toy_offline.space, A, load)
    assert result.coefficients.size == toy_offline.space.dim
    residual = toy_offline.space.basis.T @ (A @ (u_h - result.vector))
    assert np.max(np.abs(residual)) <= 1e-10


def test_galerkin_zero_load(toy_offline: OfflineStage) -> None:
    zero = np.zeros(toy_offline.hierarchy.n)
    result = solve_galerkin(toy_offline.space, toy_offline.stiffness, zero)
    assert np.allclose(result.vector, 0.0)


def test_localized_errors_within_estimate(
    toy_offline: OfflineStage, toy_norms: NormOperators
) -> None:
    mesh, A, load = toy_offline.hierarchy, toy_offline.stiffness, _load(toy_offline)
    f = right_half_source(mesh)
    u_h = solve_fine(A, load).vector
    u_ms = solve_galerkin(toy_offline.space, A, load).vector
    report = compute_errors(
        u_h,
        u_ms,
        toy_norms,
        toy_offline.space.certificate,
        source_norm=source_norm(mesh, f),
        weighted_source_norm=weighted_source_norm(mesh, toy_offline.kappa, f),
    )
    assert report.energy_abs <= report.energy_estimate_true
    assert report.estimate_satisfied
    assert report.source_norm == pytest.approx(2**-0.5)
    assert report.energy_estimate == pytest.approx(toy_offline.space.certificate.energy_estimate)
    assert 0.0 < report.energy_rel < 1.0
    row = report.as_dict()
    assert row["pass"] == 1.0
    assert row["e_energy_abs"] == report.energy_abs


def test_ideal_space_identity(toy_offline: OfflineStage, toy_norms: NormOperators) -> None:
    mesh, A, load = toy_offline.hierarchy, toy_offline.stiffness, _load(toy_offline)
    f = right_half_source(mesh)
    ideal = build_ideal_space(toy_offline.dual, toy_offline.plan, mesh.h)
    u_h = solve_fine(A, load).vector
    u_ideal = solve_galerkin(ideal, A, load).vector
    expected = u_h - ideal_corrector(toy_offline.kernel, A, u_h)
    assert np.allclose(u_ideal, expected, atol=1e-9 * np.abs(u_h).max())
    C = coefficient_matrix(toy_offline.aux)
    assert np.allclose(C @ (u_h - u_ideal), 0.0, atol=1e-8)
    report = compute_errors(
        u_h,
        u_ideal,
        toy_norms,
        ideal.certificate,
        weighted_source_norm=weighted_source_norm(mesh, toy_offline.kappa, f),
    )
    assert report.energy_abs <= report.ideal_weighted_bound * (1 + 1e-8)
    assert report.l2k_abs <= ideal.certificate.C_star * mesh.H * report.energy_abs * (1 + 1e-6)


def test_compute_errors_exact_match(toy_offline: OfflineStage, toy_norms: NormOperators) -> None:
    u_h = solve_fine(toy_offline.stiffness, _load(toy_offline)).vector
    report = compute_errors(u_h, u_h, toy_norms, toy_offline.space.certificate)
    assert report.energy_abs == 0.0 and report.energy_rel == 0.0
    assert report.source_norm == toy_offline.space.certificate.source_norm
    assert report.weighted_source_norm == 0.0
    zero = compute_errors(np.zeros_like(u_h), u_h, toy_norms, toy_offline.space.certificate)
    assert zero.energy_rel == float("inf")


def test_dual_interpolant(toy_offline: OfflineStage) -> None:
    aux = toy_offline.aux
    u_h = solve_fine(toy_offline.stiffness, _load(toy_offline)).vector
    interpolant = dual_interpolant(u_h, toy_offline.dual, aux)
    for first, second in zip(pi_aux_coeffs(aux, interpolant), pi_aux_coeffs(aux, u_h)):
        assert np.allclose(first, second, atol=1e-10)
    assert np.all(interpolant[np.setdiff1d(np.arange(aux.n), toy_offline.dual.nodes.nodes)] == 0)


def test_dual_interpolant_remainder_is_in_kernel(toy_offline: OfflineStage) -> None:
    A = toy_offline.stiffness
    u_h = solve_fine(A, _load(toy_offline)).vector
    rest = u_h - dual_interpolant(u_h, toy_offline.dual, toy_offline.aux)
    corrected = ideal_corrector(toy_offline.kernel, A, rest)
    assert np.allclose(corrected, rest, atol=1e-9 * np.abs(rest).max())
