"""Conjugate gradients with Lanczos-based spectrum estimates, and the composed K^T A K operator."""
from __future__ import annotations
from dataclasses import dataclass, field
import logging
from typing import Any, List, Tuple, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, aslinearoperator

__all__ = [
    "CgBreakdown",
    "CgNotConverged",
    "CgReport",
    "FixedIterations",
    "Tolerance",
    "cg",
    "cg_batch",
    "ritz_values",
    "estimate_condition",
    "composed_ktak",
]

logger = logging.getLogger(__name__)

EARLY_EXIT = 1e-14


class CgBreakdown(RuntimeError):
    """Search direction with nonpositive curvature: the operator is not positive definite."""


class CgNotConverged(RuntimeError):
    """Tolerance-mode CG hit its iteration cap."""


@dataclass(frozen=True)
class FixedIterations:
    """Run exactly k steps, stopping early only below a 1e-14 relative residual."""

    k: int

    def __post_init__(self) -> None:
        """Validate k."""
        if self.k < 1:
            raise ValueError(f"Number of CG iterations must be >= 1, got {self.k}")


@dataclass(frozen=True)
class Tolerance:
    """Run until the relative residual drops below tol (cap 10 * dimension)."""

    tol: float = 1e-14


CgMode = Union[FixedIterations, Tolerance]


def ritz_values(alphas: np.ndarray, betas: np.ndarray) -> np.ndarray:
    """Eigenvalues of the Lanczos tridiagonal matrix implied by CG step lengths."""
    alphas = np.asarray(alphas, dtype=float)
    betas = np.asarray(betas, dtype=float)
    if alphas.size == 0:
        return np.empty(0)
    diag = 1.0 / alphas
    diag[1:] += betas[: alphas.size - 1] / alphas[:-1]
    if alphas.size == 1:
        return diag
    off = np.sqrt(betas[: alphas.size - 1]) / alphas[:-1]
    return sla.eigvalsh_tridiagonal(diag, off)


def _condition(values: np.ndarray) -> float:
    if values.size == 0 or values[0] <= 0:
        return 1.0
    return max(float(values[-1] / values[0]), 1.0)


@dataclass
class CgReport:
    """Iteration count, residual history and Ritz spectrum estimate of one CG solve."""

    iterations: int
    residual_history: np.ndarray
    converged: bool
    alphas: np.ndarray = field(repr=False)
    betas: np.ndarray = field(repr=False)
    ritz_min: float = float("nan")
    ritz_max: float = float("nan")

    @property
    def condition(self) -> float:
        """Ritz estimate of the condition number (>= 1)."""
        if not np.isfinite(self.ritz_min) or self.ritz_min <= 0:
            return 1.0
        return max(self.ritz_max / self.ritz_min, 1.0)

    @property
    def contraction(self) -> float:
        """CG contraction factor (sqrt(K) - 1) / (sqrt(K) + 1)."""
        root = np.sqrt(self.condition)
        return float((root - 1.0) / (root + 1.0))

    @property
    def relative_residual(self) -> float:
        """Final relative residual."""
        return float(self.residual_history[-1])


def _run(
    operator: LinearOperator, rhs: np.ndarray, mode: CgMode, record_ritz: bool
) -> Tuple[np.ndarray, List[CgReport]]:
    dim, count = rhs.shape
    if isinstance(mode, FixedIterations):
        limit, tol = mode.k, EARLY_EXIT
    else:
        limit, tol = max(1, 10 * dim), mode.tol
    x = np.zeros_like(rhs)
    residual = rhs.copy()
    direction = residual.copy()
    rhs_norm = np.linalg.norm(rhs, axis=0)
    rho = np.einsum("ij,ij->j", residual, residual)
    active = rhs_norm > 0
    safe_norm = np.where(active, rhs_norm, 1.0)
    alphas: List[np.ndarray] = []
    betas: List[np.ndarray] = []
    history: List[np.ndarray] = [np.where(active, 1.0, 0.0)]
    iterations = np.zeros(count, dtype=int)

    for _ in range(limit):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        p_act = direction[:, idx]
        ap_act = np.asarray(operator.matmat(p_act))
        curvature = np.einsum("ij,ij->j", p_act, ap_act)
        if np.any(curvature <= 0):
            raise CgBreakdown(f"p^T A p = {curvature.min():.3e} <= 0")
        alpha = rho[idx] / curvature
        x[:, idx] += p_act * alpha
        residual[:, idx] -= ap_act * alpha
        rho_new = np.einsum("ij,ij->j", residual[:, idx], residual[:, idx])
        beta = rho_new / rho[idx]
        direction[:, idx] = residual[:, idx] + p_act * beta
        rho[idx] = rho_new
        iterations[idx] += 1

        step_alpha = np.full(count, np.nan)
        step_beta = np.full(count, np.nan)
        step_res = np.full(count, np.nan)
        step_alpha[idx], step_beta[idx] = alpha, beta
        step_res[idx] = np.sqrt(rho_new) / safe_norm[idx]
        alphas.append(step_alpha)
        betas.append(step_beta)
        history.append(step_res)
        active[idx[step_res[idx] < tol]] = False

    alpha_table = np.array(alphas).reshape(len(alphas), count)
    beta_table = np.array(betas).reshape(len(betas), count)
    history_table = np.array(history).reshape(len(history), count)
    reports = []
    for col in range(count):
        its = int(iterations[col])
        col_history = history_table[: its + 1, col]
        report = CgReport(
            iterations=its,
            residual_history=col_history,
            converged=bool(col_history[-1] < tol),
            alphas=alpha_table[:its, col],
            betas=beta_table[:its, col],
        )
        if record_ritz and its > 0:
            values = ritz_values(report.alphas, report.betas)
            report.ritz_min, report.ritz_max = float(values[0]), float(values[-1])
        reports.append(report)
    if isinstance(mode, Tolerance) and not all(r.converged for r in reports):
        logger.warning("CG reached its cap of %d iterations before tol=%.1e", limit, tol)
    return x, reports


def cg(
    operator: Any, b: np.ndarray, mode: CgMode = Tolerance(), record_ritz: bool = True
) -> Tuple[np.ndarray, CgReport]:
    """Solve operator x = b from a zero initial guess."""
    b = np.asarray(b, dtype=float)
    x, reports = _run(aslinearoperator(operator), b.reshape(-1, 1), mode, record_ritz)
    return x[:, 0], reports[0]


def cg_batch(
    operator: Any, rhs: np.ndarray, mode: CgMode = Tolerance(), record_ritz: bool = False
) -> Tuple[np.ndarray, List[CgReport]]:
    """Independent CG solves for every column of rhs, sharing operator applications."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.ndim != 2:
        raise ValueError("rhs must hold one right-hand side per column")
    return _run(aslinearoperator(operator), rhs, mode, record_ritz)


def estimate_condition(
    operator: Any, seed: int = 0, window: int = 10, rtol: float = 1e-3
) -> Tuple[float, float]:
    """Ritz estimate of the condition number and CG contraction from a seeded random rhs."""
    operator = aslinearoperator(operator)
    rhs = np.random.default_rng(seed).standard_normal(operator.shape[0])
    rhs /= np.linalg.norm(rhs)
    _, report = cg(operator, rhs, Tolerance(EARLY_EXIT), record_ritz=False)
    estimate = 1.0
    steady = 0
    for step in range(1, report.iterations + 1):
        current = _condition(ritz_values(report.alphas[:step], report.betas[:step]))
        if step > 1 and abs(current - estimate) < rtol * estimate:
            steady += 1
        else:
            steady = 0
        estimate = current
        if steady >= window:
            break
    root = np.sqrt(estimate)
    contraction = float((root - 1.0) / (root + 1.0))
    logger.info(
        "condition estimate %.4g (q=%.4f) after %d CG steps",
        estimate,
        contraction,
        report.iterations,
    )
    return estimate, contraction


def composed_ktak(K_blocks: Any, A: sp.spmatrix) -> LinearOperator:
    """Operator x -> K^T (A (K x)) without forming the product."""
    # pylint: disable=invalid-name
    if hasattr(K_blocks, "apply"):
        rows, cols = K_blocks.n, K_blocks.ell
        forward, backward = K_blocks.apply, K_blocks.apply_transpose
    else:
        matrix = K_blocks if sp.issparse(K_blocks) else np.atleast_2d(np.asarray(K_blocks))
        rows, cols = matrix.shape
        forward, backward = (lambda x: matrix @ x), (lambda y: matrix.T @ y)
    if A.shape != (rows, rows):
        raise ValueError(f"K has {rows} rows but A has shape {A.shape}")

    def _apply(x: np.ndarray) -> np.ndarray:
        return backward(A @ forward(x))

    return LinearOperator((cols, cols), matvec=_apply, matmat=_apply, dtype=float)
