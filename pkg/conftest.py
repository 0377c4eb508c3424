import numpy as np
import pytest

from spectral_lod.assembly import NormOperators
from spectral_lod.coefficient import CoefficientField, constant_field, four_channels
from spectral_lod.experiment import OfflineStage, build_offline
from spectral_lod.mesh import MeshHierarchy, NodeClassification, build_hierarchy, classify_nodes

TOY_BETA = 100.0


@pytest.fixture(scope="function")
def small_mesh() -> MeshHierarchy:
    return build_hierarchy(2, 4)


@pytest.fixture(scope="function")
def toy_mesh() -> MeshHierarchy:
    return build_hierarchy(4, 8)


@pytest.fixture(scope="function")
def coarse_ratio_mesh() -> MeshHierarchy:
    return build_hierarchy(4, 4)


@pytest.fixture(scope="function")
def small_classification(small_mesh: MeshHierarchy) -> NodeClassification:
    return classify_nodes(small_mesh)


@pytest.fixture(scope="function")
def unit_kappa(small_mesh: MeshHierarchy) -> CoefficientField:
    return constant_field(small_mesh, 1.0)


@pytest.fixture(scope="function")
def random_kappa(small_mesh: MeshHierarchy) -> CoefficientField:
    rng = np.random.default_rng(7)
    return CoefficientField(rng.uniform(1.0, 50.0, small_mesh.n_fine_elements), 8)


@pytest.fixture(scope="function")
def channel_kappa(toy_mesh: MeshHierarchy) -> CoefficientField:
    return four_channels(toy_mesh, TOY_BETA)


@pytest.fixture(scope="function")
def toy_norms(toy_mesh: MeshHierarchy, channel_kappa: CoefficientField) -> NormOperators:
    return NormOperators.from_problem(toy_mesh, channel_kappa)


@pytest.fixture(scope="session")
def toy_offline() -> OfflineStage:
    mesh = build_hierarchy(4, 8)
    return build_offline(mesh, four_channels(mesh, TOY_BETA), dual_seed=3, cond_seed=0)


@pytest.fixture(scope="session")
def unit_offline() -> OfflineStage:
    mesh = build_hierarchy(4, 8)
    return build_offline(mesh, constant_field(mesh, 1.0), dual_seed=0, cond_seed=0)
