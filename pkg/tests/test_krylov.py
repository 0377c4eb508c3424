import numpy as np
import pytest
import scipy.sparse as sp

from spectral_lod.krylov import (
    CgBreakdown,
    FixedIterations,
    Tolerance,
    cg,
    cg_batch,
    composed_ktak,
    estimate_condition,
    ritz_values,
)


def _spd_with_spectrum(values: np.ndarray, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((values.size, values.size)))
    return q @ np.diag(values) @ q.T


def test_cg_tolerance_mode() -> None:
    A = _spd_with_spectrum(np.linspace(1.0, 50.0, 30))
    b = np.random.default_rng(1).standard_normal(30)
    x, report = cg(A, b, Tolerance(1e-12))
    assert report.converged
    assert report.relative_residual < 1e-12
    assert np.allclose(x, np.linalg.solve(A, b), atol=1e-9)
    assert report.residual_history[0] == 1.0


def test_cg_sparse_operator() -> None:
    A = sp.diags([-1.0, 2.5, -1.0], [-1, 0, 1], shape=(20, 20), format="csr")
    b = np.ones(20)
    x, _ = cg(A, b)
    assert np.allclose(A @ x, b)


def test_fixed_iterations_counts() -> None:
    A = _spd_with_spectrum(np.linspace(1.0, 1e3, 40))
    b = np.random.default_rng(2).standard_normal(40)
    _, report = cg(A, b, FixedIterations(5))
    assert report.iterations == 5
    assert report.alphas.size == 5
    with pytest.raises(ValueError):
        FixedIterations(0)


def test_fixed_iterations_early_exit() -> None:
    x, report = cg(np.eye(6), np.arange(1.0, 7.0), FixedIterations(10))
    assert report.iterations == 1
    assert np.allclose(x, np.arange(1.0, 7.0))


def test_zero_rhs() -> None:
    x, report = cg(np.eye(4), np.zeros(4), FixedIterations(3))
    assert np.array_equal(x, np.zeros(4))
    assert report.iterations == 0
    assert report.converged
    assert list(report.residual_history) == [0.0]


def test_breakdown_on_indefinite() -> None:
    with pytest.raises(CgBreakdown):
        cg(np.diag([1.0, -1.0]), np.array([0.0, 1.0]))


def test_ritz_values_exact_after_full_run() -> None:
    spectrum = np.array([1.0, 2.0, 5.0, 10.0])
    A = _spd_with_spectrum(spectrum, seed=3)
    b = np.random.default_rng(3).standard_normal(4)
    _, report = cg(A, b, FixedIterations(4))
    values = ritz_values(report.alphas, report.betas)
    assert np.allclose(values, spectrum, rtol=1e-6)
    assert np.isclose(report.condition, 10.0, rtol=1e-6)
    root = np.sqrt(report.condition)
    assert np.isclose(report.contraction, (root - 1) / (root + 1))
    assert ritz_values(np.empty(0), np.empty(0)).size == 0


def test_estimate_condition() -> None:
    A = _spd_with_spectrum(np.linspace(1.0, 100.0, 60), seed=4)
    estimate, q = estimate_condition(A, seed=0)
    assert 50.0 <= estimate <= 100.0 * (1 + 1e-8)
    assert np.isclose(q, (np.sqrt(estimate) - 1) / (np.sqrt(estimate) + 1))
    assert estimate_condition(A, seed=0) == (estimate, q)


def test_cg_batch_matches_single() -> None:
    A = _spd_with_spectrum(np.linspace(1.0, 20.0, 15), seed=5)
    rhs = np.random.default_rng(5).standard_normal((15, 4))
    rhs[:, 2] = 0.0
    X, reports = cg_batch(A, rhs, FixedIterations(6))
    for col in range(4):
        x, report = cg(A, rhs[:, col], FixedIterations(6), record_ritz=False)
        assert np.allclose(X[:, col], x)
        assert reports[col].iterations == report.iterations
    assert reports[2].iterations == 0
    with pytest.raises(ValueError):
        cg_batch(A, rhs[:, 0])


def test_contraction_bound() -> None:
    spectrum = np.linspace(1.0, 64.0, 50)
    A = _spd_with_spectrum(spectrum, seed=6)
    b = np.random.default_rng(6).standard_normal(50)
    exact = np.linalg.solve(A, b)
    q = (np.sqrt(64.0) - 1) / (np.sqrt(64.0) + 1)

    def energy(v: np.ndarray) -> float:
        return float(np.sqrt(v @ A @ v))

    for k in range(1, 15):
        x, _ = cg(A, b, FixedIterations(k), record_ritz=False)
        assert energy(exact - x) <= 2 * q**k * energy(exact) * (1 + 1e-10)


def test_composed_ktak() -> None:
    rng = np.random.default_rng(7)
    A = sp.csr_matrix(_spd_with_spectrum(np.linspace(1.0, 5.0, 12), seed=7))
    K = rng.standard_normal((12, 5))
    operator = composed_ktak(K, A)
    x = rng.standard_normal(5)
    assert operator.shape == (5, 5)
    assert np.allclose(operator.matvec(x), K.T @ (A @ (K @ x)))
    assert np.allclose(operator.matmat(np.eye(5)), K.T @ A.toarray() @ K)
    assert np.allclose(composed_ktak(sp.csc_matrix(K), A).matvec(x), K.T @ (A @ (K @ x)))
    with pytest.raises(ValueError):
        composed_ktak(K[:10], A)
