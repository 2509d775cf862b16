import numpy as np
import pytest

from hydrograd.mesh import build_mesh
from hydrograd.twin import generate_twin

# all ring cells drain into the center
FD_STAR_3X3 = np.array([
    [4, 5, 6],
    [3, 0, 7],
    [2, 1, 8],
])

# west-to-east chain, outlet at the right edge
FD_CHAIN_1X4 = np.array([[3, 3, 3, 0]])


@pytest.fixture
def star_mesh():
    return build_mesh(FD_STAR_3X3, dx=500.0)


@pytest.fixture
def chain_mesh():
    return build_mesh(FD_CHAIN_1X4, dx=1000.0)


@pytest.fixture(scope="session")
def small_twin():
    """Shared noise-free uniform-truth problem, kept small for speed."""
    return generate_twin(seed=5, shape=(8, 8), truth_kind="uniform",
                         n_desc=2, nt=160, warmup=24, n_cal=2, n_val=1)


@pytest.fixture(scope="session")
def linear_twin():
    """Shared linear-truth problem for mapping calibration tests."""
    return generate_twin(seed=3, shape=(10, 10), truth_kind="linear",
                         n_desc=2, nt=240, warmup=40, n_cal=2, n_val=1)
