"""Localized correctors by k CG steps on K^T A K, and the multiscale space they span."""
from __future__ import annotations
from dataclasses import asdict, dataclass, field, fields, replace
import logging
from typing import Any, Dict, List, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from spectral_lod.aux_space import AuxSpace, c_star
from spectral_lod.dense import mgs_orthonormalize
from spectral_lod.dual_space import DualFunctions, dual_hat_matrix
from spectral_lod.kernel_basis import BlockKernelBasis
from spectral_lod.krylov import (
    CgMode,
    CgNotConverged,
    CgReport,
    FixedIterations,
    Tolerance,
    cg,
    cg_batch,
    composed_ktak,
    estimate_condition,
)
from spectral_lod.mesh import MeshHierarchy
from spectral_lod.utils.parallel import parallel_map

__all__ = [
    "Certificate",
    "CorrectorPlan",
    "MultiscaleSpace",
    "choose_k",
    "plan_correctors",
    "corrector_solve",
    "ideal_corrector",
    "build_multiscale_space",
    "build_ideal_space",
]

logger = logging.getLogger(__name__)

DROP_TOL = 1e-14


def choose_k(q: float, L: float, M: float, beta: float, H: float) -> int:
    """Smallest k >= 1 with 2 q^k sqrt(L) sqrt(M) sqrt(beta) <= H^2."""
    # pylint: disable=invalid-name
    if not 0.0 <= q < 1.0:
        raise ValueError(f"Contraction factor must lie in [0, 1), got {q}")
    if min(L, M) < 0 or beta <= 0 or H <= 0:
        raise ValueError("L and M must be nonnegative, beta and H positive")
    factor = 2.0 * np.sqrt(L) * np.sqrt(M) * np.sqrt(beta)
    target = H**2
    if q == 0.0 or factor <= target:
        return 1
    k = max(1, int(np.ceil(np.log(target / factor) / np.log(q))))
    while k > 1 and factor * q ** (k - 1) <= target:
        k -= 1
    while factor * q**k > target:
        k += 1
    return k


@dataclass(frozen=True)
class Certificate:
    """Computed constants of a multiscale space and the error bounds they certify."""

    # pylint: disable=invalid-name,too-many-instance-attributes
    H: float
    h: float
    beta: float
    L: int
    M: float
    kappa_cond: float
    q: float
    k: int
    C_star: float = field(default_factory=c_star)
    source_norm: float = 0.5
    exact: bool = False

    @property
    def sqrt_M(self) -> float:
        """Square root of M."""
        return float(np.sqrt(self.M))

    @property
    def energy_estimate(self) -> float:
        """(C* + 1) H ||f||."""
        return (self.C_star + 1.0) * self.H * self.source_norm

    @property
    def l2_estimate(self) -> float:
        """Square of the energy estimate."""
        return self.energy_estimate**2

    @property
    def l2_literal_estimate(self) -> float:
        """[(C* + 1) H]^2 ||f||."""
        return ((self.C_star + 1.0) * self.H) ** 2 * self.source_norm

    @property
    def ideal_estimate(self) -> float:
        """C* H ||f||, the bound with exact correctors."""
        return self.C_star * self.H * self.source_norm

    @property
    def localization_term(self) -> float:
        """2 q^k / (1 + q^2k) sqrt(L) sqrt(M) sqrt(beta) / H."""
        qk = self.q**self.k
        spread = np.sqrt(self.L) * self.sqrt_M * np.sqrt(self.beta)
        return 2.0 * qk / (1.0 + qk * qk) * spread / self.H

    @property
    def full_estimate(self) -> float:
        """[C* H + localization term] ||f||, before the choice of k simplifies it."""
        return (self.C_star * self.H + self.localization_term) * self.source_norm

    @classmethod
    def from_dict(cls, values: Dict[str, float]) -> "Certificate":
        """Rebuild from `as_dict` output; derived keys are ignored."""
        known = {item.name for item in fields(cls)}
        kwargs: Dict[str, Any] = {key: value for key, value in values.items() if key in known}
        for key in ("L", "k"):
            kwargs[key] = int(round(kwargs[key]))
        kwargs["exact"] = bool(kwargs.get("exact", False))
        return cls(**kwargs)

    def with_source_norm(self, source_norm: float) -> "Certificate":
        """Same certificate for another source norm."""
        return replace(self, source_norm=source_norm)

    def as_dict(self) -> Dict[str, float]:
        """All stored and derived fields."""
        out: Dict[str, float] = {key: float(value) for key, value in asdict(self).items()}
        out.update(
            sqrt_M=self.sqrt_M,
            energy_estimate=self.energy_estimate,
            l2_estimate=self.l2_estimate,
            l2_literal_estimate=self.l2_literal_estimate,
            ideal_estimate=self.ideal_estimate,
            full_estimate=self.full_estimate,
        )
        return out

    def to_text(self) -> str:
        """key=value lines."""
        return "".join(f"{key}={value:.6e}\n" for key, value in self.as_dict().items())


@dataclass
class CorrectorPlan:
    """Shared operator, condition estimate and iteration count for all corrector solves."""

    # pylint: disable=invalid-name,too-many-instance-attributes
    kernel: BlockKernelBasis
    stiffness: sp.csr_matrix
    ktak: LinearOperator
    condition: float
    q: float
    L: int
    M: float
    beta: float
    H: float
    k: int
    reports: List[CgReport] = field(default_factory=list, repr=False)


@dataclass
class MultiscaleSpace:
    """Localized multiscale basis (one column per dual node, element by element)."""

    basis: sp.csc_matrix
    owners: np.ndarray
    mgs_factors: List[np.ndarray]
    certificate: Certificate
    reports: List[CgReport] = field(repr=False)
    dropped: int = 0

    @property
    def dim(self) -> int:
        """Number of basis vectors (equals L)."""
        return int(self.basis.shape[1])

    def columns_of(self, element: int) -> np.ndarray:
        """Basis columns belonging to a coarse element."""
        return np.flatnonzero(self.owners == element)

    def iterations(self) -> np.ndarray:
        """CG iterations actually run for every corrector solve."""
        return np.array([report.iterations for report in self.reports], dtype=int)


def plan_correctors(
    hierarchy: MeshHierarchy,
    aux: AuxSpace,
    dual: DualFunctions,
    kernel: BlockKernelBasis,
    stiffness: sp.spmatrix,
    beta: float,
    cond_seed: int = 0,
) -> CorrectorPlan:
    """Estimate the condition of K^T A K and pick k from the certificate inequality."""
    ktak = composed_ktak(kernel, stiffness)
    condition, q = estimate_condition(ktak, seed=cond_seed)
    k = choose_k(q, aux.L, dual.M, beta, hierarchy.H)
    logger.info("corrector plan: cond=%.4g q=%.4f k=%d", condition, q, k)
    return CorrectorPlan(
        kernel=kernel,
        stiffness=sp.csr_matrix(stiffness),
        ktak=ktak,
        condition=condition,
        q=q,
        L=aux.L,
        M=dual.M,
        beta=beta,
        H=hierarchy.H,
        k=k,
    )


def corrector_solve(
    ktak_op: LinearOperator,
    K_blocks: BlockKernelBasis,
    A: sp.spmatrix,
    dual_hat: np.ndarray,
    k: int,
) -> Tuple[np.ndarray, CgReport]:
    """C_{h,k} phi_hat = K x after k CG steps on K^T A K x = K^T A phi_hat."""
    # pylint: disable=invalid-name
    rhs = K_blocks.apply_transpose(A @ np.asarray(dual_hat, dtype=float))
    x, report = cg(ktak_op, rhs, FixedIterations(k), record_ritz=False)
    return K_blocks.apply(x), report


def ideal_corrector(K_blocks: BlockKernelBasis, A: sp.spmatrix, v: np.ndarray) -> np.ndarray:
    """Energy projection of v onto the span of K, by CG to a 1e-14 relative residual."""
    # pylint: disable=invalid-name
    rhs = K_blocks.apply_transpose(A @ np.asarray(v, dtype=float))
    x, report = cg(composed_ktak(K_blocks, A), rhs, Tolerance(1e-14), record_ritz=False)
    if not report.converged:
        raise CgNotConverged(
            f"ideal corrector stopped at relative residual {report.relative_residual:.3e}"
        )
    return K_blocks.apply(x)


def _drop_small(block: np.ndarray) -> Tuple[sp.csc_matrix, int]:
    peak = np.max(np.abs(block), axis=0, initial=0.0)
    small = (np.abs(block) < DROP_TOL * peak[None, :]) & (block != 0)
    block = np.where(small, 0.0, block)
    return sp.csc_matrix(block), int(small.sum())


def _corrector_columns(
    plan: CorrectorPlan, hats: sp.csc_matrix, mode: CgMode, batch_size: int, threads: int
) -> Tuple[sp.csc_matrix, List[CgReport], int]:
    kernel, stiffness = plan.kernel, plan.stiffness
    starts = list(range(0, hats.shape[1], max(1, batch_size)))

    def _batch(start: int) -> Tuple[sp.csc_matrix, List[CgReport], int]:
        chunk = hats[:, start : start + batch_size]
        rhs = kernel.apply_transpose(np.asarray((stiffness @ chunk).todense()))
        x, reports = cg_batch(plan.ktak, rhs, mode)
        localized = chunk.toarray() - kernel.apply(x)
        matrix, dropped = _drop_small(localized)
        return matrix, reports, dropped

    results = parallel_map(_batch, starts, threads)
    if not results:
        return sp.csc_matrix((hats.shape[0], 0)), [], 0
    matrix = sp.hstack([item[0] for item in results], format="csc")
    reports = [report for item in results for report in item[1]]
    return matrix, reports, sum(item[2] for item in results)


def _orthonormalize_per_element(
    raw: sp.csc_matrix, owners: np.ndarray, stiffness: sp.spmatrix
) -> Tuple[sp.csc_matrix, List[np.ndarray]]:
    columns: List[sp.csc_matrix] = []
    factors: List[np.ndarray] = []
    for element in np.unique(owners):
        cols = np.flatnonzero(owners == element)
        dense = raw[:, cols].toarray()
        support = np.flatnonzero(np.any(dense != 0, axis=1))
        local = stiffness[support, :][:, support]
        label = f"multiscale element {element}"
        ortho, factor = mgs_orthonormalize(dense[support], local, label=label)
        full = np.zeros_like(dense)
        full[support] = ortho
        columns.append(sp.csc_matrix(full))
        factors.append(factor)
    if not columns:
        return raw, factors
    return sp.hstack(columns, format="csc"), factors


def build_multiscale_space(
    dual: DualFunctions,
    plan: CorrectorPlan,
    h: float,
    exact: bool = False,
    batch_size: int = 64,
    threads: int = 1,
    source_norm: float = 0.5,
) -> MultiscaleSpace:
    """Localized basis phi_hat - C_{h,k} phi_hat for every dual node, orthonormalized per element.

    With `exact` the correctors are solved to a 1e-14 relative residual instead of k steps.
    """
    hats = dual_hat_matrix(dual.nodes, plan.kernel.n)
    owners = dual.nodes.owners()
    mode: CgMode = Tolerance(1e-14) if exact else FixedIterations(plan.k)
    raw, reports, dropped = _corrector_columns(plan, hats, mode, batch_size, threads)
    if exact and not all(report.converged for report in reports):
        raise CgNotConverged("an exact corrector solve did not reach 1e-14")
    basis, factors = _orthonormalize_per_element(raw, owners, plan.stiffness)
    certificate = Certificate(
        H=plan.H,
        h=h,
        beta=plan.beta,
        L=plan.L,
        M=plan.M,
        kappa_cond=plan.condition,
        q=plan.q,
        k=plan.k,
        source_norm=source_norm,
        exact=exact,
    )
    logger.info(
        "multiscale space: dim=%d, nnz=%d, dropped %d entries below %.0e",
        basis.shape[1],
        basis.nnz,
        dropped,
        DROP_TOL,
    )
    return MultiscaleSpace(basis, owners, factors, certificate, reports, dropped)


def build_ideal_space(
    dual: DualFunctions, plan: CorrectorPlan, h: float, batch_size: int = 64, threads: int = 1
) -> MultiscaleSpace:
    """Multiscale space with exact (converged) correctors."""
    return build_multiscale_space(dual, plan, h, exact=True, batch_size=batch_size, threads=threads)
