"""Experiment pipeline: offline construction, online solves and sweeps over (H, beta)."""
from __future__ import annotations
from dataclasses import dataclass, field, replace
import logging
from pathlib import Path
import time
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp

from spectral_lod.assembly import (
    NormOperators,
    assemble_load,
    source_norm,
    weighted_source_norm,
)
from spectral_lod.aux_space import (
    AuxSpace,
    build_aux_space,
    first_nonzero_eigenvalues,
    mu_lower_bound,
)
from spectral_lod.coefficient import (
    CoefficientField,
    constant_field,
    constant_source,
    four_channels,
    from_raster,
    irregular_channels,
    right_half_source,
    source_from_raster,
)
from spectral_lod.config import ExperimentConfig
from spectral_lod.corrector import (
    CorrectorPlan,
    MultiscaleSpace,
    build_ideal_space,
    build_multiscale_space,
    ideal_corrector,
    plan_correctors,
)
from spectral_lod.dual_space import DualFunctions, build_dual_functions, select_dual_nodes
from spectral_lod.kernel_basis import (
    BlockKernelBasis,
    StructureReport,
    substructure_orthonormalize,
    verify_ktak_structure,
)
from spectral_lod.mesh import (
    BoundaryClass,
    MeshHierarchy,
    NodeClassification,
    build_hierarchy,
    classify_nodes,
)
from spectral_lod.solver import compute_errors, solve_fine, solve_galerkin
from spectral_lod.utils.offline_io import DumpHeader, dump_offline, load_offline
from spectral_lod.utils.parallel import parallel_map

__all__ = [
    "EXPERIMENT_COLUMNS",
    "OfflineStage",
    "CellResult",
    "make_coefficient",
    "make_source",
    "build_offline",
    "run_cell",
    "fit_orders",
    "cmd_solve",
    "cmd_table",
    "cmd_diagnose",
    "cmd_dump_basis",
]

logger = logging.getLogger(__name__)

EXPERIMENT_COLUMNS = [
    "H",
    "h",
    "beta",
    "L",
    "sqrt_M",
    "cond",
    "q",
    "k",
    "e_energy_abs",
    "e_energy_rel",
    "e_l2_abs",
    "e_l2_rel",
    "e_l2k_abs",
    "est_energy",
    "est_l2",
    "ideal_est",
    "pass",
]
FAILURE_COLUMNS = ["H", "beta", "error", "message"]
TIMING_COLUMNS = ["H", "beta", "stage", "seconds"]
CG_COLUMNS = ["H", "beta", "column", "iterations", "relative_residual"]
IDEAL_COLUMNS = ["H", "beta", "e_energy_ideal", "ideal_identity_residual", "ideal_bound"]
FLOAT_FORMAT = "%.10e"


@dataclass
class OfflineStage:
    """All offline objects of one (H, beta) cell."""

    # pylint: disable=too-many-instance-attributes
    hierarchy: MeshHierarchy
    classification: NodeClassification
    kappa: CoefficientField
    stiffness: sp.csr_matrix
    aux: AuxSpace
    dual: DualFunctions
    kernel: BlockKernelBasis
    plan: CorrectorPlan
    space: MultiscaleSpace
    timings: Dict[str, float] = field(default_factory=dict)


@dataclass
class CellResult:
    """Rows produced by one cell of a sweep."""

    row: Dict[str, float]
    certificate_text: str
    timings: Dict[str, float]
    cg_rows: List[Dict[str, float]]
    ideal_row: Optional[Dict[str, float]] = None
    structure: Optional[StructureReport] = None


def make_coefficient(
    config: ExperimentConfig, hierarchy: MeshHierarchy, beta: float
) -> CoefficientField:
    """Coefficient field named by the config."""
    if config.coefficient == "four_channels":
        return four_channels(hierarchy, beta)
    if config.coefficient == "constant":
        return constant_field(hierarchy, config.coefficient_value)
    if config.coefficient == "raster":
        return from_raster(hierarchy, str(config.raster_path), beta)
    if config.coefficient == "irregular":
        return irregular_channels(hierarchy, beta, seed=config.irregular_seed)
    raise ValueError(f"Unknown coefficient {config.coefficient!r}")


def make_source(config: ExperimentConfig, hierarchy: MeshHierarchy) -> np.ndarray:
    """Piecewise-constant source named by the config."""
    if config.source == "right_half":
        return right_half_source(hierarchy)
    if config.source == "constant":
        return constant_source(hierarchy, config.source_value)
    if config.source == "raster":
        return source_from_raster(hierarchy, str(config.source_raster_path), config.source_value)
    raise ValueError(f"Unknown source {config.source!r}")


def build_offline(
    hierarchy: MeshHierarchy,
    kappa: CoefficientField,
    dual_seed: int = 0,
    cond_seed: int = 0,
    threads: int = 1,
    batch_size: int = 64,
    source_norm_value: float = 0.5,
) -> OfflineStage:
    """Run every offline step for one mesh and coefficient."""
    timings: Dict[str, float] = {}
    start = time.perf_counter()

    def _lap(stage: str) -> None:
        nonlocal start
        now = time.perf_counter()
        timings[stage] = now - start
        start = now

    classification = classify_nodes(hierarchy)
    stiffness = NormOperators.from_problem(hierarchy, kappa).stiffness
    _lap("assembly")
    aux = build_aux_space(hierarchy, kappa, classification, threads)
    _lap("eigenproblems")
    nodes = select_dual_nodes(hierarchy, aux, stiffness, rng_seed=dual_seed, threads=threads)
    dual = build_dual_functions(nodes, aux, stiffness)
    _lap("dual_nodes")
    kernel = substructure_orthonormalize(hierarchy, aux, dual, stiffness, classification, threads)
    _lap("kernel_basis")
    plan = plan_correctors(hierarchy, aux, dual, kernel, stiffness, kappa.beta, cond_seed)
    _lap("condition")
    space = build_multiscale_space(
        dual,
        plan,
        hierarchy.h,
        batch_size=batch_size,
        threads=threads,
        source_norm=source_norm_value,
    )
    _lap("correctors")
    return OfflineStage(
        hierarchy, classification, kappa, stiffness, aux, dual, kernel, plan, space, timings
    )


def _cell_tag(coarse: int, beta: float) -> str:
    return f"H{coarse}_beta{beta:g}"


def _dump_path(config: ExperimentConfig, coarse: int, beta: float) -> Path:
    return Path(config.out_dir) / f"basis_{_cell_tag(coarse, beta)}.pb"


def _header(config: ExperimentConfig, hierarchy: MeshHierarchy, beta: float) -> DumpHeader:
    return DumpHeader(
        coarse_divisions=hierarchy.coarse_divisions,
        refine_ratio=hierarchy.refine_ratio,
        beta=float(beta),
        dual_seed=config.dual_seed,
        cond_seed=config.cond_seed,
        config_hash=config.fingerprint(beta, hierarchy.coarse_divisions),
    )


def _reused_space(
    config: ExperimentConfig, hierarchy: MeshHierarchy, beta: float
) -> Optional[MultiscaleSpace]:
    path = _dump_path(config, hierarchy.coarse_divisions, beta)
    if not path.is_file():
        logger.info("no dumped basis at %s, building it", path)
        return None
    dump = load_offline(path)
    expected = config.fingerprint(beta, hierarchy.coarse_divisions)
    if dump.header.config_hash != expected:
        logger.warning("dumped basis %s does not match the config hash, rebuilding", path)
        return None
    logger.info("reusing dumped basis %s", path)
    certificate = dump.space.certificate.with_source_norm(config.source_norm)
    return replace(dump.space, certificate=certificate)


def _ideal_row(
    offline: OfflineStage,
    norms: NormOperators,
    load: np.ndarray,
    u_h: np.ndarray,
    weighted_norm: float,
    threads: int,
    batch_size: int,
) -> Dict[str, float]:
    ideal = build_ideal_space(offline.dual, offline.plan, offline.hierarchy.h, batch_size, threads)
    u_ideal = solve_galerkin(ideal, offline.stiffness, load).vector
    correction = ideal_corrector(offline.kernel, offline.stiffness, u_h)
    energy_h = norms(u_h)[0]
    residual = norms(u_h - u_ideal - correction)[0]
    return {
        "e_energy_ideal": norms(u_h - u_ideal)[0],
        "ideal_identity_residual": residual / energy_h if energy_h > 0 else residual,
        "ideal_bound": ideal.certificate.C_star * offline.hierarchy.H * weighted_norm,
    }


def run_cell(
    config: ExperimentConfig, coarse: int, beta: float, threads: int = 1
) -> CellResult:
    """Offline stage (built or reused), fine and multiscale solves, and error report."""
    # pylint: disable=too-many-locals
    hierarchy = build_hierarchy(coarse, config.fine_divisions // coarse)
    kappa = make_coefficient(config, hierarchy, beta)
    f_field = make_source(config, hierarchy)
    load = assemble_load(hierarchy, f_field)
    norms = NormOperators.from_problem(hierarchy, kappa)

    offline: Optional[OfflineStage] = None
    space = None
    timings: Dict[str, float] = {}
    if config.reuse_basis and not (config.run_ideal or config.verify_structure):
        space = _reused_space(config, hierarchy, beta)
    if space is None:
        offline = build_offline(
            hierarchy,
            kappa,
            dual_seed=config.dual_seed,
            cond_seed=config.cond_seed,
            threads=threads,
            batch_size=config.batch_size,
            source_norm_value=config.source_norm,
        )
        space = offline.space
        timings.update(offline.timings)
        if config.dump_basis:
            dump_offline(
                _dump_path(config, coarse, beta),
                _header(config, hierarchy, beta),
                offline.kernel,
                space,
            )

    fine = solve_fine(norms.stiffness, load, method=config.fine_solver)
    online = solve_galerkin(space, norms.stiffness, load)
    timings.update(fine_solve=fine.seconds, online_solve=online.seconds)
    weighted_norm = weighted_source_norm(hierarchy, kappa, f_field)
    errors = compute_errors(
        fine.vector,
        online.vector,
        norms,
        space.certificate,
        source_norm=source_norm(hierarchy, f_field),
        weighted_source_norm=weighted_norm,
    )
    certificate = space.certificate
    row: Dict[str, float] = {
        "H": hierarchy.H,
        "h": hierarchy.h,
        "beta": float(beta),
        "L": certificate.L,
        "sqrt_M": certificate.sqrt_M,
        "cond": certificate.kappa_cond,
        "q": certificate.q,
        "k": certificate.k,
    }
    row.update({key: value for key, value in errors.as_dict().items() if key in EXPERIMENT_COLUMNS})
    row["pass"] = errors.estimate_satisfied
    logger.info(
        "cell H=1/%d beta=%g: energy error %.3e (estimate %.3e, %s)",
        coarse,
        beta,
        errors.energy_abs,
        errors.energy_estimate,
        "pass" if errors.estimate_satisfied else "FAIL",
    )
    cg_rows = [
        {
            "H": hierarchy.H,
            "beta": float(beta),
            "column": column,
            "iterations": report.iterations,
            "relative_residual": report.relative_residual,
        }
        for column, report in enumerate(space.reports)
    ]
    result = CellResult(row, certificate.to_text(), timings, cg_rows)
    if offline is not None and config.run_ideal:
        ideal = _ideal_row(
            offline, norms, load, fine.vector, weighted_norm, threads, config.batch_size
        )
        result.ideal_row = {"H": hierarchy.H, "beta": float(beta), **ideal}
    if offline is not None and config.verify_structure:
        result.structure = verify_ktak_structure(
            offline.kernel, offline.stiffness, offline.classification
        )
    return result


def _cells(config: ExperimentConfig) -> List[Tuple[int, float]]:
    return [(coarse, beta) for coarse in config.coarse_divisions for beta in config.cell_betas()]


def _thread_split(config: ExperimentConfig, n_cells: int) -> Tuple[int, int]:
    workers = max(1, min(config.threads, n_cells))
    return workers, max(1, config.threads // workers)


def _write_csv(rows: List[Dict[str, float]], columns: List[str], path: Path) -> pd.DataFrame:
    frame = pd.DataFrame(rows, columns=columns)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return frame


def cmd_solve(config: ExperimentConfig) -> bool:
    """Run every (H, beta) cell and write the result tables; True iff all cells pass."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.dump(out / "config_resolved.yaml")
    cells = _cells(config)
    workers, inner = _thread_split(config, len(cells))

    def _run(cell: Tuple[int, float]) -> Tuple[Tuple[int, float], object]:
        coarse, beta = cell
        try:
            return cell, run_cell(config, coarse, beta, threads=inner)
        except (ValueError, RuntimeError) as err:
            logger.error("cell H=1/%d beta=%g failed: %s", coarse, beta, err)
            return cell, err

    rows, failures, timings, cg_rows, ideal_rows, structure_rows = [], [], [], [], [], []
    for (coarse, beta), outcome in parallel_map(_run, cells, workers):
        if not isinstance(outcome, CellResult):
            failures.append(
                {
                    "H": 1.0 / coarse,
                    "beta": beta,
                    "error": type(outcome).__name__,
                    "message": str(outcome),
                }
            )
            continue
        rows.append(outcome.row)
        cg_rows.extend(outcome.cg_rows)
        timings.extend(
            {"H": 1.0 / coarse, "beta": beta, "stage": stage, "seconds": seconds}
            for stage, seconds in outcome.timings.items()
        )
        (out / f"certificate_{_cell_tag(coarse, beta)}.txt").write_text(outcome.certificate_text)
        if outcome.ideal_row is not None:
            ideal_rows.append(outcome.ideal_row)
        if outcome.structure is not None:
            structure_rows.extend(
                {"H": 1.0 / coarse, "beta": beta, "key": key, "value": value}
                for key, value in outcome.structure.as_dict().items()
            )

    frame = _write_csv(rows, EXPERIMENT_COLUMNS, out / "experiments.csv")
    _write_csv(failures, FAILURE_COLUMNS, out / "failures.csv")
    _write_csv(timings, TIMING_COLUMNS, out / "timings.csv")
    _write_csv(cg_rows, CG_COLUMNS, out / "cg_log.csv")
    if config.run_ideal:
        _write_csv(ideal_rows, IDEAL_COLUMNS, out / "ideal.csv")
    if config.verify_structure:
        _write_csv(structure_rows, ["H", "beta", "key", "value"], out / "structure.csv")
    passed = not failures and bool(frame["pass"].all())
    logger.info("%d cells, %d failed, all pass: %s", len(cells), len(failures), passed)
    return passed


def fit_orders(frame: pd.DataFrame) -> pd.DataFrame:
    """Least-squares slope of log(error) against log(H) per beta and norm."""
    if frame["H"].nunique() < 2:
        raise ValueError("A convergence fit needs at least 2 values of H")
    rows = []
    for beta, group in frame.groupby("beta", sort=True):
        for norm in ("e_energy_abs", "e_energy_rel", "e_l2_abs", "e_l2_rel"):
            valid = group[(group[norm] > 0) & np.isfinite(group[norm])]
            slope = float("nan")
            if valid["H"].nunique() >= 2:
                slope = float(np.polyfit(np.log(valid["H"]), np.log(valid[norm]), 1)[0])
            rows.append({"beta": beta, "norm": norm, "slope": slope, "points": len(valid)})
    return pd.DataFrame(rows, columns=["beta", "norm", "slope", "points"])


def cmd_table(config: ExperimentConfig) -> pd.DataFrame:
    """Convergence table and order fit from experiments.csv (solving first if it is missing)."""
    out = Path(config.out_dir)
    source = out / "experiments.csv"
    if not source.is_file():
        cmd_solve(config)
    frame = pd.read_csv(source)
    orders = fit_orders(frame)
    orders.to_csv(out / "convergence.csv", index=False, float_format="%.4f")
    table = frame.pivot_table(index="H", columns="beta", values="e_energy_rel").sort_index(
        ascending=False
    )
    table.to_csv(out / "convergence_table.csv", float_format="%.3e")
    for item in orders.itertuples():
        logger.info("beta=%g %s: slope %.3f", item.beta, item.norm, item.slope)
    return orders


def _histogram(counts: np.ndarray) -> str:
    values, freq = np.unique(counts, return_counts=True)
    return ";".join(f"{value}:{count}" for value, count in zip(values, freq))


def cmd_diagnose(config: ExperimentConfig) -> pd.DataFrame:
    """Per cell: L_i histogram, kappa=1 spectrum against its lower bounds, K^T A K structure."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spectrum_rows = []
    rows = []
    for coarse in config.coarse_divisions:
        hierarchy = build_hierarchy(coarse, config.fine_divisions // coarse)
        for boundary_class, value in sorted(first_nonzero_eigenvalues(hierarchy).items()):
            bound = mu_lower_bound(boundary_class)
            spectrum_rows.append(
                {
                    "H": hierarchy.H,
                    "boundary_class": BoundaryClass(boundary_class).name.lower(),
                    "eigenvalue": value,
                    "mu_hat": bound,
                    "ok": value >= bound,
                }
            )
        for beta in config.cell_betas():
            kappa = make_coefficient(config, hierarchy, beta)
            offline = build_offline(
                hierarchy,
                kappa,
                dual_seed=config.dual_seed,
                cond_seed=config.cond_seed,
                threads=config.threads,
                batch_size=config.batch_size,
                source_norm_value=config.source_norm,
            )
            structure = verify_ktak_structure(
                offline.kernel, offline.stiffness, offline.classification
            )
            rows.append(
                {
                    "H": hierarchy.H,
                    "beta": float(beta),
                    "L": offline.aux.L,
                    "L_i_histogram": _histogram(offline.aux.counts),
                    "certificate_L": offline.space.certificate.L,
                    "M": offline.dual.M,
                    "cond": offline.plan.condition,
                    "q": offline.plan.q,
                    "k": offline.plan.k,
                    "max_diag_deviation": structure.max_diag_deviation,
                    "max_within_block": structure.max_within_block,
                    "max_measure_zero": structure.max_measure_zero,
                    "nonzero_relations": ";".join(structure.nonzero_classes),
                }
            )
    pd.DataFrame(spectrum_rows).to_csv(out / "spectrum.csv", index=False, float_format="%.6e")
    frame = pd.DataFrame(rows)
    frame.to_csv(out / "diagnose.csv", index=False, float_format="%.6e")
    return frame


def cmd_dump_basis(config: ExperimentConfig) -> List[Path]:
    """Build and dump the offline stage of every cell."""
    Path(config.out_dir).mkdir(parents=True, exist_ok=True)
    paths = []
    for coarse, beta in _cells(config):
        hierarchy = build_hierarchy(coarse, config.fine_divisions // coarse)
        kappa = make_coefficient(config, hierarchy, beta)
        offline = build_offline(
            hierarchy,
            kappa,
            dual_seed=config.dual_seed,
            cond_seed=config.cond_seed,
            threads=config.threads,
            batch_size=config.batch_size,
            source_norm_value=config.source_norm,
        )
        paths.append(
            dump_offline(
                _dump_path(config, coarse, beta),
                _header(config, hierarchy, beta),
                offline.kernel,
                offline.space,
            )
        )
        logger.info("dumped %s", paths[-1])
    return paths
