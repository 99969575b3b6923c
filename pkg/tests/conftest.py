import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from switchmtd import pipeline, scenario


@pytest.fixture(scope="session")
def bundled():
    return scenario.bundled_scenario()


@pytest.fixture(scope="session")
def structures(bundled):
    return pipeline.run_synthesis(bundled)


@pytest.fixture(scope="session")
def layer(bundled, structures):
    return pipeline.build_layer(bundled, structures)


@pytest.fixture(scope="session")
def design(bundled, layer):
    return pipeline.run_design(bundled, layer)


@pytest.fixture(scope="session")
def adjacency(bundled):
    return pipeline.adjacency(bundled)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
