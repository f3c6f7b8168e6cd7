import pytest
import numpy as np
from fhtw_lite import FtnModel, Interval, build_legendre_basis, build_tree_1d
from fhtw_lite.models import OuSpec, sample_ou
from fhtw_lite.topology import TreeTopology


@pytest.fixture(scope="function")
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture(scope="function")
def tree4() -> TreeTopology:
    """
    The smallest FHT-W tree with an internal node: ``L = 2``, four variables.

    Returns:
        TreeTopology: Nodes v(1,-1) (root), v(1,0), w(1,0), v(1,1), v(2,1).
    """
    return build_tree_1d(2)


@pytest.fixture(scope="function")
def bases4() -> list:
    return [build_legendre_basis(Interval(-1.0, 1.0), 3) for _ in range(4)]


@pytest.fixture(scope="function")
def planted4(tree4, bases4, rng) -> FtnModel:
    """
    A rank-2 model on the four-variable tree with nonnegative random components, so its mass is positive.
    """
    return FtnModel.random(tree4, bases4, 2, rng, nonnegative=True)


@pytest.fixture(scope="module")
def ou16_samples() -> tuple[OuSpec, np.ndarray]:
    """Exact draws from a 16-site OU ring (``alpha = 100``)."""
    spec = OuSpec.line(16, 100.0)
    return spec, sample_ou(spec, 20000, seed=7)
