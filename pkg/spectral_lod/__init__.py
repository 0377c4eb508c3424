"""Spectral localized orthogonal decomposition for high-contrast diffusion problems."""
from spectral_lod.aux_space import AuxSpace, build_aux_space
from spectral_lod.coefficient import CoefficientField, constant_field, four_channels
from spectral_lod.config import ExperimentConfig
from spectral_lod.corrector import Certificate, MultiscaleSpace, build_multiscale_space, choose_k
from spectral_lod.dual_space import build_dual_functions, select_dual_nodes
from spectral_lod.experiment import OfflineStage, build_offline, run_cell
from spectral_lod.kernel_basis import BlockKernelBasis, substructure_orthonormalize
from spectral_lod.mesh import MeshHierarchy, build_hierarchy, classify_nodes
from spectral_lod.solver import compute_errors, solve_fine, solve_galerkin

__version__ = "0.1.0"
