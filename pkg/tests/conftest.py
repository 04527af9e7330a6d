import numpy as np
import pytest

from graph_core import generate_graph


@pytest.fixture
def k2():
    return generate_graph("complete", 2)


@pytest.fixture
def k3():
    return generate_graph("complete", 3)


@pytest.fixture
def p3():
    return generate_graph("path", 3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
