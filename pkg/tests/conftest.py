import numpy as np
import pytest

from market_eq import FisherInstance, GeneratorConfig, SparseMatrix, generate_fisher


@pytest.fixture
def tiny_fisher():
    """3x2 dense instance, 6 nonzeros: inside the brute-force oracle's domain."""
    utilities = SparseMatrix.from_dense([[0.8, 0.3],
                                         [0.2, 0.9],
                                         [0.5, 0.5]])
    budgets = np.array([0.4, 0.7, 0.9])
    return FisherInstance(utilities, budgets)


@pytest.fixture
def small_random_fisher():
    return generate_fisher(GeneratorConfig(n=12, m=6, sparsity_u=0.5, seed=3))


@pytest.fixture
def medium_fisher():
    return generate_fisher(GeneratorConfig(n=60, m=25, sparsity_u=0.3, seed=11))
