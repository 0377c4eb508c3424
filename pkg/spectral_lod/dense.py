"""Dense linear algebra kernels used on local (per coarse entity) problems."""
from __future__ import annotations
from dataclasses import dataclass
import logging
from typing import Any, Tuple

import numpy as np
import scipy.linalg as sla

__all__ = [
    "EigenDecomposition",
    "FactorizationError",
    "GramSchmidtBreakdown",
    "sym_generalized_eig",
    "mgs_orthonormalize",
    "project_out",
    "dense_spd_solve",
    "two_norm",
    "min_singular",
]

logger = logging.getLogger(__name__)

BREAKDOWN = 1e-12
ORTHO_TOL = 1e-8


class FactorizationError(RuntimeError):
    """A matrix that must be positive definite could not be factorized."""


class GramSchmidtBreakdown(RuntimeError):
    """Gram-Schmidt met a numerically dependent vector."""


@dataclass(frozen=True)
class EigenDecomposition:
    """Ascending eigenvalues with S-orthonormal eigenvectors as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    if vectors.size == 0:
        return vectors
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_generalized_eig(
    A_dense: np.ndarray, S_dense: np.ndarray, tol: float = 1e-10
) -> EigenDecomposition:
    """Full spectrum of A psi = lambda S psi for symmetric A and symmetric positive definite S."""
    # pylint: disable=invalid-name
    A = np.asarray(A_dense, dtype=float)
    S = np.asarray(S_dense, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != S.shape:
        raise ValueError(f"Expected two square matrices of equal shape, got {A.shape}, {S.shape}")
    scale = max(float(np.abs(A).sum(axis=1).max(initial=0.0)), 1.0)
    if np.max(np.abs(A - A.T), initial=0.0) > tol * scale:
        raise ValueError("A is not symmetric")
    if np.max(np.abs(S - S.T), initial=0.0) > tol * max(float(np.abs(S).max(initial=0.0)), 1.0):
        raise ValueError("S is not symmetric")
    try:
        values, vectors = sla.eigh(0.5 * (A + A.T), 0.5 * (S + S.T))
    except sla.LinAlgError as err:
        raise FactorizationError(f"S is not positive definite: {err}") from err
    values = np.where(np.abs(values) <= tol * scale, 0.0, values)
    vectors = _fix_signs(vectors)
    residual = np.abs(A @ vectors - (S @ vectors) * values).sum(axis=0).max(initial=0.0)
    if residual > tol * scale * max(1.0, float(values.max(initial=0.0))):
        logger.debug("generalized eigensolve residual %.3e above %.1e", residual, tol)
    return EigenDecomposition(values, vectors)


def _mgs_pass(
    work: np.ndarray, a_inner: Any, reference: np.ndarray, label: str
) -> Tuple[np.ndarray, np.ndarray]:
    count = work.shape[1]
    factor = np.zeros((count, count))
    for i in range(count):
        a_col = np.asarray(a_inner @ work[:, i]).ravel()
        norm_sq = float(work[:, i] @ a_col)
        if not norm_sq > 0.0 or np.sqrt(norm_sq) <= BREAKDOWN * reference[i]:
            raise GramSchmidtBreakdown(f"dependent vector {i} while orthonormalizing {label}")
        r_ii = np.sqrt(norm_sq)
        work[:, i] /= r_ii
        a_col /= r_ii
        factor[i, i] = r_ii
        if i + 1 < count:
            coeffs = a_col @ work[:, i + 1 :]
            factor[i, i + 1 :] = coeffs
            work[:, i + 1 :] -= np.outer(work[:, i], coeffs)
    return work, factor


def mgs_orthonormalize(
    vectors: np.ndarray, a_inner: Any, label: str = "vectors"
) -> Tuple[np.ndarray, np.ndarray]:
    """Modified Gram-Schmidt in the inner product of `a_inner` (anything supporting `@`).

    Returns the orthonormal columns Q and the upper triangular R with vectors = Q R.
    A second pass runs when the Gram matrix deviates from I by more than 1e-8.
    """
    work = np.array(vectors, dtype=float, copy=True)
    if work.ndim != 2:
        raise ValueError("vectors must be a 2D array with one vector per column")
    count = work.shape[1]
    if count == 0:
        return work, np.zeros((0, 0))
    reference = np.sqrt(np.maximum(np.einsum("ij,ij->j", work, np.asarray(a_inner @ work)), 0.0))
    work, factor = _mgs_pass(work, a_inner, reference, label)
    gram = work.T @ np.asarray(a_inner @ work)
    if np.max(np.abs(gram - np.eye(count))) > ORTHO_TOL:
        logger.debug("re-orthogonalizing %s", label)
        work, second = _mgs_pass(work, a_inner, np.ones(count), label)
        factor = second @ factor
    return work, factor


def project_out(v: np.ndarray, basis: np.ndarray, a_inner: Any) -> np.ndarray:
    """Remove the components of v along an orthonormal basis in the a_inner product."""
    v = np.asarray(v, dtype=float)
    if basis.size == 0:
        return v.copy()
    return v - basis @ (basis.T @ np.asarray(a_inner @ v))


def dense_spd_solve(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve M x = b by Cholesky factorization."""
    # pylint: disable=invalid-name
    try:
        factor = sla.cho_factor(np.asarray(M, dtype=float))
    except sla.LinAlgError as err:
        raise FactorizationError(f"Matrix is not positive definite: {err}") from err
    return sla.cho_solve(factor, b)


def two_norm(
    M: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000, block: int = 8
) -> float:
    """Largest singular value by block power iteration on M^T M.

    Each step takes the largest Ritz value of M^T M on the current block and stops once it
    changes by less than ``tol`` relative to itself. Clustered leading singular values fall
    inside one block and are separated by the Ritz step instead of by the power sequence.
    """
    # pylint: disable=invalid-name
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    gram = M.T @ M
    if not np.any(gram):
        return 0.0
    width = min(block, gram.shape[0])
    start = np.random.default_rng(0).standard_normal((gram.shape[0], width))
    X = np.linalg.qr(start)[0]
    theta = 0.0
    for step in range(max_iter):
        Y = gram @ X
        projected = X.T @ Y
        previous, theta = theta, float(sla.eigvalsh(0.5 * (projected + projected.T))[-1])
        if abs(theta - previous) <= tol * theta:
            logger.debug("block power iteration converged after %d steps", step + 1)
            break
        X = np.linalg.qr(Y)[0]
    else:
        logger.warning("power iteration stopped after %d steps", max_iter)
    return float(np.sqrt(theta))


def min_singular(M: np.ndarray) -> float:
    """Smallest singular value."""
    # pylint: disable=invalid-name
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        raise ValueError("Empty matrix has no singular values")
    return float(sla.svdvals(M).min())
