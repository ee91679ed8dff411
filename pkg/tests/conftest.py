import numpy as np
import pytest

from src.core.elastic_kernels import ElasticBackground
from src.core.geometry import Domain, boundary_quadrature, inclusion_quadrature, volume_quadrature


@pytest.fixture
def bg():
    return ElasticBackground(lam=1.0, mu=1.0, rho0=1.0)


@pytest.fixture
def bg_stiff():
    return ElasticBackground(lam=2.0, mu=0.7, rho0=1.3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cube():
    return Domain("cube", 1.0)


@pytest.fixture
def ball():
    return Domain("ball", 1.0)


@pytest.fixture
def cube_rules(cube):
    """Coarse volume and boundary rules on the unit cube."""
    return volume_quadrature(cube, 4), boundary_quadrature(cube, 4)


@pytest.fixture
def cube_b():
    return inclusion_quadrature("cube", 3)


@pytest.fixture(autouse=True)
def isolated_registry(tmp_path, monkeypatch):
    """Every test writes its run registry and outputs under its own tmp dir."""
    monkeypatch.setenv("ECL_OUTPUT_ROOT", str(tmp_path / "runs"))
    monkeypatch.setenv("ECL_REGISTRY_DB", str(tmp_path / "runs" / "runs.db"))
