import numpy as np
import pytest

from spectral_lod.dense import (
    FactorizationError,
    GramSchmidtBreakdown,
    dense_spd_solve,
    mgs_orthonormalize,
    min_singular,
    project_out,
    sym_generalized_eig,
    two_norm,
)


def _spd(rng: np.random.Generator, size: int, shift: float = 1.0) -> np.ndarray:
    base = rng.standard_normal((size, size))
    return base @ base.T + shift * np.eye(size)


def test_eig_diagonal() -> None:
    result = sym_generalized_eig(np.diag([0.0, 2.0]), np.eye(2))
    assert np.allclose(result.eigenvalues, [0.0, 2.0])
    assert np.allclose(np.abs(result.eigenvectors), np.eye(2))


def test_eig_two_by_two() -> None:
    A = np.array([[2.0, -1.0], [-1.0, 2.0]])
    result = sym_generalized_eig(A, 2.0 * np.eye(2))
    assert np.allclose(result.eigenvalues, [0.5, 1.5])


@pytest.mark.parametrize("size", [2, 5, 8])
def test_eig_against_reference(size: int) -> None:
    rng = np.random.default_rng(size)
    for _ in range(5):
        A = _spd(rng, size, 0.0)
        S = _spd(rng, size, float(size))
        result = sym_generalized_eig(A, S)
        # independent reference: symmetric reduction with S^(-1/2)
        w, v = np.linalg.eigh(S)
        root_inv = v @ np.diag(w**-0.5) @ v.T
        expected = np.linalg.eigvalsh(root_inv @ A @ root_inv)
        assert np.allclose(result.eigenvalues, expected, rtol=1e-10, atol=1e-10)
        vectors = result.eigenvectors
        assert np.allclose(vectors.T @ S @ vectors, np.eye(size), atol=1e-10)
        assert np.allclose(A @ vectors, S @ vectors * result.eigenvalues, atol=1e-9)
        trace = np.trace(np.linalg.solve(S, A))
        assert np.isclose(result.eigenvalues.sum(), trace, rtol=1e-8)


def test_eig_input_errors() -> None:
    with pytest.raises(ValueError):
        sym_generalized_eig(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(2))
    with pytest.raises(ValueError):
        sym_generalized_eig(np.eye(2), np.eye(3))
    with pytest.raises(FactorizationError):
        sym_generalized_eig(np.eye(2), np.diag([1.0, -1.0]))


def test_eig_clamps_zero() -> None:
    A = np.array([[1.0, -1.0], [-1.0, 1.0]])
    assert sym_generalized_eig(A, np.eye(2)).eigenvalues[0] == 0.0


def test_mgs_orthonormal_input_unchanged() -> None:
    A = np.diag([4.0, 9.0, 1.0])
    vectors = np.diag([0.5, 1.0 / 3.0, 1.0])
    q, r = mgs_orthonormalize(vectors, A)
    assert np.allclose(q, vectors)
    assert np.allclose(r, np.eye(3))


def test_mgs_classical_case() -> None:
    q, r = mgs_orthonormalize(np.array([[1.0, 1.0], [0.0, 1.0]]), np.eye(2))
    assert np.allclose(q[:, 1], [0.0, 1.0])
    assert np.allclose(q @ r, [[1.0, 1.0], [0.0, 1.0]])


def test_mgs_random_gram() -> None:
    rng = np.random.default_rng(11)
    A = _spd(rng, 40)
    vectors = rng.standard_normal((40, 20))
    q, r = mgs_orthonormalize(vectors, A)
    assert np.allclose(q.T @ A @ q, np.eye(20), atol=1e-8)
    assert np.allclose(q @ r, vectors)
    assert np.allclose(r, np.triu(r))
    assert np.all(np.diag(r) > 0)


def test_mgs_deterministic() -> None:
    rng = np.random.default_rng(2)
    A = _spd(rng, 12)
    vectors = rng.standard_normal((12, 6))
    first, _ = mgs_orthonormalize(vectors, A)
    second, _ = mgs_orthonormalize(vectors, A)
    assert np.array_equal(first, second)


def test_mgs_breakdown() -> None:
    vectors = np.array([[1.0, 2.0], [1.0, 2.0]])
    with pytest.raises(GramSchmidtBreakdown):
        mgs_orthonormalize(vectors, np.eye(2), label="edge 3")


def test_mgs_empty() -> None:
    q, r = mgs_orthonormalize(np.zeros((5, 0)), np.eye(5))
    assert q.shape == (5, 0) and r.shape == (0, 0)


def test_project_out() -> None:
    rng = np.random.default_rng(4)
    A = _spd(rng, 10)
    basis, _ = mgs_orthonormalize(rng.standard_normal((10, 3)), A)
    inside = basis @ np.array([1.0, -2.0, 0.5])
    assert np.linalg.norm(project_out(inside, basis, A)) <= 1e-10
    v = rng.standard_normal(10)
    projected = project_out(v, basis, A)
    assert np.allclose(basis.T @ A @ projected, 0.0, atol=1e-12)
    assert np.linalg.norm(project_out(projected, basis, A) - projected) <= 1e-12
    assert np.array_equal(project_out(v, np.zeros((10, 0)), A), v)


def test_small_dense_kernels() -> None:
    assert np.isclose(two_norm(np.eye(3)), 1.0)
    assert np.isclose(min_singular(np.eye(3)), 1.0)
    assert np.isclose(two_norm(np.diag([3.0, 1.0])), 3.0)
    assert np.isclose(min_singular(np.diag([3.0, 1.0])), 1.0)
    assert two_norm(np.zeros((0, 0))) == 0.0
    with pytest.raises(ValueError):
        min_singular(np.zeros((0, 0)))


def test_two_norm_against_svd() -> None:
    rng = np.random.default_rng(6)
    for _ in range(5):
        M = rng.standard_normal((6, 6))
        singular = np.linalg.svd(M, compute_uv=False)
        assert np.isclose(two_norm(M), singular[0], rtol=1e-8)
        assert np.isclose(min_singular(M), singular[-1], rtol=1e-8)


def test_two_norm_clustered_singular_values(caplog: pytest.LogCaptureFixture) -> None:
    assert np.isclose(two_norm(np.diag([1.0, 1.0 - 1e-7])), 1.0, rtol=1e-12, atol=0.0)
    wide = np.diag([1.0, 1.0 - 1e-7] + [0.5] * 10)
    assert np.isclose(two_norm(wide), 1.0, rtol=1e-10, atol=0.0)
    rng = np.random.default_rng(9)
    M = rng.standard_normal((20, 20))
    assert np.isclose(two_norm(M), np.linalg.svd(M, compute_uv=False)[0], rtol=1e-8)
    assert "power iteration stopped" not in caplog.text


def test_spd_solve() -> None:
    rng = np.random.default_rng(8)
    M = _spd(rng, 7)
    b = rng.standard_normal(7)
    assert np.allclose(M @ dense_spd_solve(M, b), b)
    with pytest.raises(FactorizationError):
        dense_spd_solve(np.diag([1.0, -1.0]), np.ones(2))
